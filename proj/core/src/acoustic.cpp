#include "svc/acoustic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>

#include "svc/kernels.hpp"
#include "svc/optimizer.hpp"
#include "svc/tape.hpp"

namespace svc::acoustic {

using kernels::ConvSpec;

namespace {
// Previous-frame mel is squashed toward unit scale before entering the
// recurrent decoder.
constexpr float kPrevShift = 5.0f;
constexpr float kPrevScale = 1.0f / 3.0f;

std::string block_prefix(int i) { return "enc" + std::to_string(i); }

Tensor xavier(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  const float a = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  return Tensor::uniform(std::move(shape), a, rng);
}
}  // namespace

void AcousticConfig::validate() const {
  require(ibf_layer >= 1, "bad_config", "ibf_layer must be >= 1");
  require(ibf_width >= 1 && mel_bins >= 1 && enc_width >= 4 && dec_width >= 4, "bad_config",
          "acoustic widths out of range");
  require(!target_ids.empty(), "bad_config", "acoustic model needs at least one target id");
  require(chunk_frames > 0, "bad_config", "chunk_frames must be positive");
}

Json AcousticConfig::to_json() const {
  return Json{{"kind", kind == AmKind::teacher ? "teacher" : "student"},
              {"ibf_layer", ibf_layer},
              {"ibf_width", ibf_width},
              {"mel_bins", mel_bins},
              {"enc_width", enc_width},
              {"enc_layers", enc_layers},
              {"dec_width", dec_width},
              {"emb_width", emb_width},
              {"enc_left", enc_left},
              {"enc_right", enc_right},
              {"chunk_frames", chunk_frames},
              {"target_ids", target_ids}};
}

AcousticConfig AcousticConfig::from_json(const Json& j) {
  AcousticConfig c;
  c.kind = j.at("kind").get<std::string>() == "teacher" ? AmKind::teacher : AmKind::student;
  c.ibf_layer = j.at("ibf_layer").get<int>();
  c.ibf_width = j.at("ibf_width").get<int>();
  c.mel_bins = j.at("mel_bins").get<int>();
  c.enc_width = j.at("enc_width").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.dec_width = j.at("dec_width").get<int>();
  c.emb_width = j.at("emb_width").get<int>();
  c.enc_left = j.at("enc_left").get<int>();
  c.enc_right = j.at("enc_right").get<int>();
  c.chunk_frames = j.at("chunk_frames").get<int>();
  c.target_ids = j.at("target_ids").get<std::vector<std::string>>();
  return c;
}

AcousticModel::AcousticModel(const AcousticConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = Rng(init_seed).derive("acoustic-init");
  const int in = cfg.ibf_width + cfg.emb_width;
  params_.add("spk.table",
              Tensor::uniform({static_cast<int>(cfg.target_ids.size()), cfg.emb_width}, 0.5f, rng));
  params_.add("in.w", xavier({in, cfg.enc_width}, in, cfg.enc_width, rng));
  params_.add("in.b", Tensor({cfg.enc_width}));
  const int taps = cfg.enc_left + cfg.enc_right + 1;
  for (int i = 0; i < cfg.enc_layers; ++i) {
    const std::string p = block_prefix(i);
    params_.add(p + ".conv.w",
                xavier({taps, cfg.enc_width, cfg.enc_width}, taps * cfg.enc_width,
                       taps * cfg.enc_width, rng));
    params_.add(p + ".conv.b", Tensor({cfg.enc_width}));
    params_.add(p + ".ln.g", Tensor::full({cfg.enc_width}, 1.0f));
    params_.add(p + ".ln.b", Tensor({cfg.enc_width}));
  }
  const int gin = cfg.enc_width + cfg.mel_bins;
  for (const char* g : {"z", "r", "n"}) {
    params_.add(std::string("gru.w") + g, xavier({gin, cfg.dec_width}, gin, cfg.dec_width, rng));
    params_.add(std::string("gru.u") + g,
                xavier({cfg.dec_width, cfg.dec_width}, cfg.dec_width, cfg.dec_width, rng));
    params_.add(std::string("gru.b") + g, Tensor({cfg.dec_width}));
  }
  params_.add("head.w", xavier({cfg.dec_width, cfg.mel_bins}, cfg.dec_width, cfg.mel_bins, rng));
  Tensor head_b({cfg.mel_bins});
  head_b.fill(-5.0f);  // start near the mel mean so early training is sane
  params_.add("head.b", head_b);
}

AcousticModel::AcousticModel(const ModelBundle& bundle)
    : cfg_(AcousticConfig::from_json(bundle.config)) {
  require(bundle.kind == "acoustic", "bad_bundle", "bundle kind is not acoustic");
  cfg_.validate();
  for (size_t i = 0; i < bundle.params.size(); ++i)
    params_.add(bundle.params.name(i), bundle.params.tensor(i));
}

ModelBundle AcousticModel::to_bundle() const {
  ModelBundle b;
  b.kind = "acoustic";
  b.config = cfg_.to_json();
  for (size_t i = 0; i < params_.size(); ++i) b.params.add(params_.name(i), params_.tensor(i));
  return b;
}

int AcousticModel::target_index(const std::string& target_id) const {
  for (size_t i = 0; i < cfg_.target_ids.size(); ++i)
    if (cfg_.target_ids[i] == target_id) return static_cast<int>(i);
  fail("unknown_target", "no embedding for target id: " + target_id);
}

Tensor AcousticModel::encode(const Tensor& ibf_feats, int target_idx) const {
  require(ibf_feats.cols() == cfg_.ibf_width, "layer_mismatch",
          "IBF width does not match the acoustic model's configured tap");
  const int frames = ibf_feats.rows();
  const Tensor& table = params_.get("spk.table");
  Tensor x({frames, cfg_.ibf_width + cfg_.emb_width});
  for (int t = 0; t < frames; ++t) {
    std::copy_n(ibf_feats.row(t), cfg_.ibf_width, x.row(t));
    std::copy_n(table.row(target_idx), cfg_.emb_width, x.row(t) + cfg_.ibf_width);
  }
  x = kernels::relu_fwd(kernels::affine_fwd(x, params_.get("in.w"), params_.get("in.b")));
  ConvSpec spec;
  spec.left = cfg_.enc_left;
  spec.right = cfg_.enc_right;
  spec.chunk_frames = cfg_.kind == AmKind::student ? cfg_.chunk_frames : 0;
  for (int i = 0; i < cfg_.enc_layers; ++i) {
    const std::string p = block_prefix(i);
    x = kernels::conv1d_fwd(x, params_.get(p + ".conv.w"), params_.get(p + ".conv.b"), spec);
    x = kernels::relu_fwd(x);
    x = kernels::layer_norm_fwd<float>(x, params_.get(p + ".ln.g"), params_.get(p + ".ln.b"),
                                       nullptr);
  }
  return x;
}

Tensor AcousticModel::decode_free_running(const Tensor& enc) const {
  const int frames = enc.rows();
  const int gin = cfg_.enc_width + cfg_.mel_bins;
  kernels::GruWeights<float> w{&params_.get("gru.wz"), &params_.get("gru.uz"),
                               &params_.get("gru.bz"), &params_.get("gru.wr"),
                               &params_.get("gru.ur"), &params_.get("gru.br"),
                               &params_.get("gru.wn"), &params_.get("gru.un"),
                               &params_.get("gru.bn")};
  const Tensor& head_w = params_.get("head.w");
  const Tensor& head_b = params_.get("head.b");
  Tensor out({frames, cfg_.mel_bins});
  std::vector<float> h(static_cast<size_t>(cfg_.dec_width), 0.0f);
  std::vector<float> prev(static_cast<size_t>(cfg_.mel_bins), std::log(1e-5f));
  std::vector<float> x(static_cast<size_t>(gin));
  std::vector<float> z(h.size()), r(h.size()), n(h.size()), un(h.size()), hn(h.size());
  for (int t = 0; t < frames; ++t) {
    std::copy_n(enc.row(t), cfg_.enc_width, x.data());
    for (int c = 0; c < cfg_.mel_bins; ++c)
      x[static_cast<size_t>(cfg_.enc_width + c)] =
          (prev[static_cast<size_t>(c)] + kPrevShift) * kPrevScale;
    kernels::gru_cell(x.data(), h.data(), w, gin, cfg_.dec_width, z.data(), r.data(), n.data(),
                      un.data(), hn.data());
    h = hn;
    float* orow = out.row(t);
    for (int c = 0; c < cfg_.mel_bins; ++c) {
      double acc = head_b.data[static_cast<size_t>(c)];
      for (int j = 0; j < cfg_.dec_width; ++j)
        acc += h[static_cast<size_t>(j)] * head_w.at(j, c);
      orow[c] = static_cast<float>(acc);
      prev[static_cast<size_t>(c)] = orow[c];
    }
  }
  check_finite(out, "acoustic forward");
  return out;
}

Tensor AcousticModel::forward(const recognizer::IBF& ibf, const std::string& target_id) const {
  require(ibf.k == cfg_.ibf_layer, "layer_mismatch",
          "IBF tap " + std::to_string(ibf.k) + " does not match configured layer " +
              std::to_string(cfg_.ibf_layer));
  return decode_free_running(encode(ibf.features, target_index(target_id)));
}

// --- streaming state ---------------------------------------------------------

AcousticModel::StreamState::StreamState(const AcousticModel& owner, const std::string& target_id)
    : owner_(owner), target_idx_(owner.target_index(target_id)) {
  require(owner.cfg_.kind == AmKind::student, "bad_mode",
          "incremental acoustic inference requires a student model");
  reset();
}

void AcousticModel::StreamState::reset() {
  frames_seen_ = 0;
  tails_.assign(static_cast<size_t>(owner_.cfg_.enc_layers), Tensor());
  hidden_.assign(static_cast<size_t>(owner_.cfg_.dec_width), 0.0f);
  prev_mel_.assign(static_cast<size_t>(owner_.cfg_.mel_bins), std::log(1e-5f));
}

Tensor AcousticModel::StreamState::push_chunk(const Tensor& ibf_chunk) {
  const auto& cfg = owner_.cfg_;
  require(ibf_chunk.rows() == cfg.chunk_frames, "bad_chunk", "chunk must be chunk_frames long");
  require(ibf_chunk.cols() == cfg.ibf_width, "layer_mismatch", "IBF width mismatch");
  const auto& params = owner_.params_;
  const int chunk_begin = frames_seen_;
  const int chunk_end = frames_seen_ + cfg.chunk_frames;

  const Tensor& table = params.get("spk.table");
  Tensor x({cfg.chunk_frames, cfg.ibf_width + cfg.emb_width});
  for (int t = 0; t < cfg.chunk_frames; ++t) {
    std::copy_n(ibf_chunk.row(t), cfg.ibf_width, x.row(t));
    std::copy_n(table.row(target_idx_), cfg.emb_width, x.row(t) + cfg.ibf_width);
  }
  x = kernels::relu_fwd(kernels::affine_fwd(x, params.get("in.w"), params.get("in.b")));

  ConvSpec spec;
  spec.left = cfg.enc_left;
  spec.right = cfg.enc_right;
  spec.chunk_frames = cfg.chunk_frames;
  for (int i = 0; i < cfg.enc_layers; ++i) {
    const std::string p = block_prefix(i);
    Tensor& tail = tails_[static_cast<size_t>(i)];
    const int tail_rows = tail.numel() == 0 ? 0 : tail.rows();
    Tensor slice({tail_rows + cfg.chunk_frames, x.cols()});
    for (int r = 0; r < tail_rows; ++r) std::copy_n(tail.row(r), x.cols(), slice.row(r));
    for (int r = 0; r < cfg.chunk_frames; ++r)
      std::copy_n(x.row(r), x.cols(), slice.row(tail_rows + r));
    const int slice_begin = chunk_begin - tail_rows;

    Tensor conv({cfg.chunk_frames, cfg.enc_width});
    kernels::conv1d_span(slice, slice_begin, chunk_end, params.get(p + ".conv.w"),
                         params.get(p + ".conv.b"), spec, chunk_begin, chunk_end, &conv, 0);
    const int keep = std::min(spec.left, tail_rows + cfg.chunk_frames);
    Tensor new_tail({keep, x.cols()});
    for (int r = 0; r < keep; ++r)
      std::copy_n(slice.row(tail_rows + cfg.chunk_frames - keep + r), x.cols(), new_tail.row(r));
    tail = std::move(new_tail);

    conv = kernels::relu_fwd(conv);
    x = kernels::layer_norm_fwd<float>(conv, params.get(p + ".ln.g"), params.get(p + ".ln.b"),
                                       nullptr);
  }

  const int gin = cfg.enc_width + cfg.mel_bins;
  kernels::GruWeights<float> w{&params.get("gru.wz"), &params.get("gru.uz"), &params.get("gru.bz"),
                               &params.get("gru.wr"), &params.get("gru.ur"), &params.get("gru.br"),
                               &params.get("gru.wn"), &params.get("gru.un"), &params.get("gru.bn")};
  const Tensor& head_w = params.get("head.w");
  const Tensor& head_b = params.get("head.b");
  Tensor out({cfg.chunk_frames, cfg.mel_bins});
  std::vector<float> xin(static_cast<size_t>(gin));
  std::vector<float> z(hidden_.size()), r(hidden_.size()), n(hidden_.size()), un(hidden_.size()),
      hn(hidden_.size());
  for (int t = 0; t < cfg.chunk_frames; ++t) {
    std::copy_n(x.row(t), cfg.enc_width, xin.data());
    for (int c = 0; c < cfg.mel_bins; ++c)
      xin[static_cast<size_t>(cfg.enc_width + c)] =
          (prev_mel_[static_cast<size_t>(c)] + kPrevShift) * kPrevScale;
    kernels::gru_cell(xin.data(), hidden_.data(), w, gin, cfg.dec_width, z.data(), r.data(),
                      n.data(), un.data(), hn.data());
    hidden_ = hn;
    float* orow = out.row(t);
    for (int c = 0; c < cfg.mel_bins; ++c) {
      double acc = head_b.data[static_cast<size_t>(c)];
      for (int j = 0; j < cfg.dec_width; ++j)
        acc += hidden_[static_cast<size_t>(j)] * head_w.at(j, c);
      orow[c] = static_cast<float>(acc);
      prev_mel_[static_cast<size_t>(c)] = orow[c];
    }
  }
  frames_seen_ = chunk_end;
  check_finite(out, "acoustic stream chunk");
  return out;
}

// --- data preparation --------------------------------------------------------

std::vector<ReconItem> make_recon_items(const corpus::CorpusManifest& m, const std::string& split,
                                        const recognizer::Recognizer& rec, int k) {
  std::vector<ReconItem> out;
  for (const auto* r : m.split(split)) {
    corpus::Utterance u = corpus::load_utterance(m, *r);
    ReconItem item;
    item.ibf = rec.extract_ibf(u.mel.values, k).features;
    item.mel = u.mel.values;
    item.speaker_id = u.speaker_id;
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<TgItem> make_tg_items(const corpus::CorpusManifest& m, const ParallelSet& parallel,
                                  const recognizer::Recognizer& stream_rec, int k) {
  // index source utterances once
  std::map<std::string, const corpus::UttRecord*> by_id;
  for (const auto& [name, records] : m.splits)
    for (const auto& r : records) by_id[r.id] = &r;
  std::vector<TgItem> out;
  std::map<std::string, Tensor> ibf_cache;
  for (const auto& p : parallel.items) {
    auto it = by_id.find(p.src_utt_id);
    require(it != by_id.end(), "missing_artifact", "parallel source not in corpus: " + p.src_utt_id);
    auto cached = ibf_cache.find(p.src_utt_id);
    if (cached == ibf_cache.end()) {
      corpus::Utterance u = corpus::load_utterance(m, *it->second);
      cached = ibf_cache.emplace(p.src_utt_id, stream_rec.extract_ibf(u.mel.values, k).features)
                   .first;
    }
    TgItem item;
    item.ibf = cached->second;
    item.teacher_mel = p.teacher_mel;
    item.target_id = p.target_id;
    item.src_speaker_id = p.src_speaker_id;
    require(item.src_speaker_id != item.target_id, "bad_pairing",
            "TG training requires cross-speaker pairs");
    out.push_back(std::move(item));
  }
  return out;
}

// --- training ----------------------------------------------------------------

namespace {

struct DiscParams {
  ParamStore store;
  static DiscParams make(int mel_bins, uint64_t seed) {
    DiscParams d;
    Rng rng = Rng(seed).derive("disc-init");
    const int w = 24;
    d.store.add("c0.w", xavier({5, mel_bins, w}, 5 * mel_bins, 5 * w, rng));
    d.store.add("c0.b", Tensor({w}));
    d.store.add("c1.w", xavier({5, w, w}, 5 * w, 5 * w, rng));
    d.store.add("c1.b", Tensor({w}));
    d.store.add("c2.w", xavier({w, 1}, w, 1, rng));
    d.store.add("c2.b", Tensor({1}));
    return d;
  }
};

// Discriminator graph on a tape; params may be trainable ids or frozen
// input ids depending on which side of the GAN step we are on.
Tape::Id disc_forward(Tape& tape, Tape::Id mel, const std::vector<Tape::Id>& p) {
  ConvSpec spec;
  spec.left = 2;
  spec.right = 2;
  Tape::Id x = tape.relu(tape.conv1d(mel, p[0], p[1], spec));
  ConvSpec spec2 = spec;
  spec2.dilation = 2;
  x = tape.relu(tape.conv1d(x, p[2], p[3], spec2));
  return tape.affine(x, p[4], p[5]);  // [T,1] patch scores
}

struct Bound {
  std::vector<Tensor*> values;
  std::vector<Tape::Id> ids;
};

Bound bind(Tape& tape, ParamStore& store) {
  Bound b;
  for (size_t i = 0; i < store.size(); ++i) {
    b.values.push_back(&store.tensor(i));
    b.ids.push_back(tape.param(store.tensor(i)));
  }
  return b;
}

std::vector<Tape::Id> bind_frozen(Tape& tape, const ParamStore& store) {
  std::vector<Tape::Id> ids;
  for (size_t i = 0; i < store.size(); ++i) ids.push_back(tape.input(store.tensor(i)));
  return ids;
}

// Builds the teacher-forced AM graph; returns the predicted mel node.
Tape::Id am_teacher_forced(Tape& tape, const AcousticConfig& cfg, const std::vector<Tape::Id>& p,
                           const ParamStore& store, const Tensor& ibf, const Tensor& target_mel,
                           int target_idx) {
  auto idx_of = [&](const std::string& name) {
    for (size_t i = 0; i < store.size(); ++i)
      if (store.name(i) == name) return static_cast<int>(i);
    fail("missing_param", name);
  };
  const int frames = ibf.rows();
  // concat(IBF, tiled embedding)
  std::vector<int> emb_ids(static_cast<size_t>(frames), target_idx);
  Tape::Id emb = tape.embedding(p[static_cast<size_t>(idx_of("spk.table"))], emb_ids);
  Tape::Id x = tape.concat_cols(tape.input(ibf), emb);
  x = tape.relu(tape.affine(x, p[static_cast<size_t>(idx_of("in.w"))],
                            p[static_cast<size_t>(idx_of("in.b"))]));
  ConvSpec spec;
  spec.left = cfg.enc_left;
  spec.right = cfg.enc_right;
  spec.chunk_frames = cfg.kind == AmKind::student ? cfg.chunk_frames : 0;
  for (int i = 0; i < cfg.enc_layers; ++i) {
    const std::string pre = block_prefix(i);
    x = tape.layer_norm(
        tape.relu(tape.conv1d(x, p[static_cast<size_t>(idx_of(pre + ".conv.w"))],
                              p[static_cast<size_t>(idx_of(pre + ".conv.b"))], spec)),
        p[static_cast<size_t>(idx_of(pre + ".ln.g"))], p[static_cast<size_t>(idx_of(pre + ".ln.b"))]);
  }
  // teacher forcing: decoder sees the shifted ground-truth mel
  Tensor prev({frames, cfg.mel_bins});
  for (int c = 0; c < cfg.mel_bins; ++c) prev.at(0, c) = (std::log(1e-5f) + kPrevShift) * kPrevScale;
  for (int t = 1; t < frames; ++t)
    for (int c = 0; c < cfg.mel_bins; ++c)
      prev.at(t, c) = (target_mel.at(t - 1, c) + kPrevShift) * kPrevScale;
  Tape::Id gru_in = tape.concat_cols(x, tape.input(std::move(prev)));
  Tape::GruIds g{p[static_cast<size_t>(idx_of("gru.wz"))], p[static_cast<size_t>(idx_of("gru.uz"))],
                 p[static_cast<size_t>(idx_of("gru.bz"))], p[static_cast<size_t>(idx_of("gru.wr"))],
                 p[static_cast<size_t>(idx_of("gru.ur"))], p[static_cast<size_t>(idx_of("gru.br"))],
                 p[static_cast<size_t>(idx_of("gru.wn"))], p[static_cast<size_t>(idx_of("gru.un"))],
                 p[static_cast<size_t>(idx_of("gru.bn"))]};
  Tape::Id h = tape.gru(gru_in, tape.input(Tensor({cfg.dec_width})), g);
  return tape.affine(h, p[static_cast<size_t>(idx_of("head.w"))],
                     p[static_cast<size_t>(idx_of("head.b"))]);
}

template <typename Item>
std::pair<Tensor, Tensor> crop_pair(const Item& item, int crop_frames, Rng& rng,
                                    const Tensor& mel_src) {
  const int frames = item.ibf.rows();
  const int crop = std::min(crop_frames, frames);
  const int start = crop < frames ? static_cast<int>(rng.randint(0, frames - crop)) : 0;
  Tensor ibf({crop, item.ibf.cols()});
  Tensor mel({crop, mel_src.cols()});
  for (int t = 0; t < crop; ++t) {
    std::copy_n(item.ibf.row(start + t), item.ibf.cols(), ibf.row(t));
    std::copy_n(mel_src.row(start + t), mel_src.cols(), mel.row(t));
  }
  return {std::move(ibf), std::move(mel)};
}

double heldout_tf_l1(const AcousticModel& model, const std::vector<Tensor>& ibfs,
                     const std::vector<Tensor>& mels, const std::vector<int>& target_idx) {
  // teacher-forced L1 without gradients, via a throwaway tape per item
  double total = 0.0;
  int64_t cells = 0;
  for (size_t i = 0; i < ibfs.size(); ++i) {
    Tape tape;
    std::vector<Tape::Id> frozen = bind_frozen(tape, model.params());
    Tape::Id pred = am_teacher_forced(tape, model.config(), frozen, model.params(), ibfs[i],
                                      mels[i], target_idx[i]);
    const Tensor& pv = tape.value(pred);
    for (size_t j = 0; j < pv.data.size(); ++j) total += std::abs(pv.data[j] - mels[i].data[j]);
    cells += pv.numel();
  }
  return cells ? total / static_cast<double>(cells) : -1.0;
}

}  // namespace

AcousticModel train_reconstruction(const AcousticConfig& cfg, const std::vector<ReconItem>& train,
                                   const std::vector<ReconItem>& heldout,
                                   const ReconTrainConfig& tcfg, AmTrainStats* stats) {
  require(!train.empty(), "no_data", "train_reconstruction: empty training set");
  AcousticModel model(cfg, tcfg.seed);
  for (const auto& item : train) {
    // Eq-(2)-style training pairs every utterance with itself, so the
    // conditioning id must be the utterance's own speaker.
    model.target_index(item.speaker_id);
  }
  Rng rng = Rng(tcfg.seed).derive("recon-train");
  AdamConfig acfg;
  acfg.lr = tcfg.lr;
  Adam opt(acfg);
  for (size_t i = 0; i < model.params().size(); ++i) opt.register_param(model.params().tensor(i));

  DiscParams disc = DiscParams::make(cfg.mel_bins, tcfg.seed);
  AdamConfig dcfg_;
  dcfg_.lr = tcfg.disc_lr;
  Adam dopt(dcfg_);
  for (size_t i = 0; i < disc.store.size(); ++i) dopt.register_param(disc.store.tensor(i));
  int collapse_run = 0;

  for (int step = 0; step < tcfg.steps; ++step) {
    opt.set_lr(tcfg.lr * (1.0f - 0.9f * static_cast<float>(step) / tcfg.steps));
    const auto& item = train[static_cast<size_t>(rng.randint(0, static_cast<int64_t>(train.size()) - 1))];
    auto [ibf, mel] = crop_pair(item, tcfg.crop_frames, rng, item.mel);
    const int tgt_idx = model.target_index(item.speaker_id);
    try {
      Tensor fake_detached;
      {
        Tape tape;
        Bound b = bind(tape, model.params());
        Tape::Id pred = am_teacher_forced(tape, cfg, b.ids, model.params(), ibf, mel, tgt_idx);
        Tape::Id loss = tape.l1_loss(pred, tape.input(mel));
        const float l1_val = tape.value(loss).data[0];
        if (tcfg.use_lsgan) {
          std::vector<Tape::Id> dfrozen = bind_frozen(tape, disc.store);
          Tape::Id adv = tape.lsq_loss(disc_forward(tape, pred, dfrozen), 1.0f);
          loss = tape.add_weighted(loss, adv, 1.0f, tcfg.lambda_adv);
        }
        tape.backward(loss);
        std::vector<const Tensor*> grads;
        for (Tape::Id id : b.ids) grads.push_back(&tape.grad(id));
        opt.step(b.values, grads);
        if (stats) stats->losses.push_back(l1_val);
        fake_detached = tape.value(pred);
      }
      if (tcfg.use_lsgan) {
        Tape tape;
        Bound db = bind(tape, disc.store);
        Tape::Id real_scores = disc_forward(tape, tape.input(mel), db.ids);
        Tape::Id fake_scores = disc_forward(tape, tape.input(fake_detached), db.ids);
        Tape::Id dloss = tape.add_weighted(tape.lsq_loss(real_scores, 1.0f),
                                           tape.lsq_loss(fake_scores, 0.0f), 0.5f, 0.5f);
        const float dval = tape.value(dloss).data[0];
        tape.backward(dloss);
        std::vector<const Tensor*> grads;
        for (Tape::Id id : db.ids) grads.push_back(&tape.grad(id));
        dopt.step(db.values, grads);
        collapse_run = dval < 1e-4f ? collapse_run + 1 : 0;
        if (collapse_run >= 500 && stats) stats->disc_collapse_warning = true;
      }
    } catch (const Error& e) {
      if (std::string(e.code()) == "non_finite")
        fail("training_diverged",
             "reconstruction training diverged at step " + std::to_string(step) + ": " + e.what());
      throw;
    }
  }

  if (stats && !heldout.empty()) {
    std::vector<Tensor> ibfs, mels;
    std::vector<int> tidx;
    for (const auto& h : heldout) {
      ibfs.push_back(h.ibf);
      mels.push_back(h.mel);
      tidx.push_back(model.target_index(h.speaker_id));
    }
    stats->heldout_l1 = heldout_tf_l1(model, ibfs, mels, tidx);
  }
  return model;
}

ParallelSet generate_parallel(const AcousticModel& teacher,
                              const recognizer::Recognizer& nonstream_rec,
                              const corpus::CorpusManifest& m, const std::string& split,
                              const std::vector<std::string>& targets) {
  require(teacher.config().kind == AmKind::teacher, "bad_mode",
          "generate_parallel needs a teacher model");
  require(!targets.empty(), "bad_config", "generate_parallel: no targets");
  for (const auto& t : targets) teacher.target_index(t);  // unknown ids fail early
  ParallelSet set;
  set.teacher_arch_hash = teacher.to_bundle().arch_hash();
  set.recognizer_arch_hash = nonstream_rec.to_bundle().arch_hash();
  std::set<std::string> sources_seen;
  for (const auto* rec : m.split(split)) {
    corpus::Utterance u = corpus::load_utterance(m, *rec);
    recognizer::IBF ibf = nonstream_rec.extract_ibf(u.mel.values, teacher.config().ibf_layer);
    for (const auto& target : targets) {
      ParallelItem item;
      item.src_utt_id = u.id;
      item.src_speaker_id = u.speaker_id;
      item.target_id = target;
      item.teacher_mel = teacher.forward(ibf, target);
      set.items.push_back(std::move(item));
    }
    sources_seen.insert(u.speaker_id);
  }
  require(!set.items.empty(), "no_data", "generate_parallel: empty split");
  return set;
}

void ParallelSet::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  Json manifest;
  manifest["teacher_arch_hash"] = teacher_arch_hash;
  manifest["recognizer_arch_hash"] = recognizer_arch_hash;
  Json arr = Json::array();
  std::string blob;
  int64_t offset = 0;
  for (const auto& item : items) {
    arr.push_back(Json{{"src_utt_id", item.src_utt_id},
                       {"src_speaker_id", item.src_speaker_id},
                       {"target_id", item.target_id},
                       {"frames", item.teacher_mel.rows()},
                       {"mel_bins", item.teacher_mel.cols()},
                       {"offset", offset}});
    blob.append(reinterpret_cast<const char*>(item.teacher_mel.data.data()),
                item.teacher_mel.data.size() * sizeof(float));
    offset += item.teacher_mel.numel();
  }
  manifest["items"] = arr;
  manifest["blob_hash"] = content_hash(blob);
  write_json_file(dir / "parallel.json", manifest);
  write_file_bytes(dir / "parallel.bin", blob);
}

ParallelSet ParallelSet::load(const std::filesystem::path& dir) {
  const Json manifest = read_json_file(dir / "parallel.json");
  const std::string blob = read_file_bytes(dir / "parallel.bin");
  require(content_hash(blob) == manifest.at("blob_hash").get<std::string>(), "corrupt_artifact",
          "parallel blob hash mismatch");
  ParallelSet set;
  set.teacher_arch_hash = manifest.at("teacher_arch_hash").get<std::string>();
  set.recognizer_arch_hash = manifest.at("recognizer_arch_hash").get<std::string>();
  for (const auto& j : manifest.at("items")) {
    ParallelItem item;
    item.src_utt_id = j.at("src_utt_id").get<std::string>();
    item.src_speaker_id = j.at("src_speaker_id").get<std::string>();
    item.target_id = j.at("target_id").get<std::string>();
    const int frames = j.at("frames").get<int>();
    const int bins = j.at("mel_bins").get<int>();
    const int64_t offset = j.at("offset").get<int64_t>();
    item.teacher_mel = Tensor({frames, bins});
    std::memcpy(item.teacher_mel.data.data(), blob.data() + offset * sizeof(float),
                item.teacher_mel.data.size() * sizeof(float));
    set.items.push_back(std::move(item));
  }
  return set;
}

AcousticModel train_student_tg(const AcousticConfig& cfg, const std::vector<TgItem>& train,
                               const std::vector<TgItem>& heldout, const TgTrainConfig& tcfg,
                               AmTrainStats* stats) {
  require(!train.empty(), "no_data", "train_student_tg: empty parallel set");
  require(cfg.kind == AmKind::student, "bad_mode", "train_student_tg needs a student config");
  AcousticModel model(cfg, tcfg.seed);
  Rng rng = Rng(tcfg.seed).derive("tg-train");
  AdamConfig acfg;
  acfg.lr = tcfg.lr;
  Adam opt(acfg);
  for (size_t i = 0; i < model.params().size(); ++i) opt.register_param(model.params().tensor(i));

  for (int step = 0; step < tcfg.steps; ++step) {
    opt.set_lr(tcfg.lr * (1.0f - 0.9f * static_cast<float>(step) / tcfg.steps));
    const auto& item = train[static_cast<size_t>(rng.randint(0, static_cast<int64_t>(train.size()) - 1))];
    auto [ibf, mel] = crop_pair(item, tcfg.crop_frames, rng, item.teacher_mel);
    const int tgt_idx = model.target_index(item.target_id);
    try {
      Tape tape;
      Bound b = bind(tape, model.params());
      Tape::Id pred = am_teacher_forced(tape, cfg, b.ids, model.params(), ibf, mel, tgt_idx);
      Tape::Id loss = tape.l1_loss(pred, tape.input(mel));
      const float l1_val = tape.value(loss).data[0];
      tape.backward(loss);
      std::vector<const Tensor*> grads;
      for (Tape::Id id : b.ids) grads.push_back(&tape.grad(id));
      opt.step(b.values, grads);
      if (stats) stats->losses.push_back(l1_val);
    } catch (const Error& e) {
      if (std::string(e.code()) == "non_finite")
        fail("training_diverged",
             "TG training diverged at step " + std::to_string(step) + ": " + e.what());
      throw;
    }
  }

  if (stats && !heldout.empty()) {
    std::vector<Tensor> ibfs, mels;
    std::vector<int> tidx;
    for (const auto& h : heldout) {
      ibfs.push_back(h.ibf);
      mels.push_back(h.teacher_mel);
      tidx.push_back(model.target_index(h.target_id));
    }
    stats->heldout_l1 = heldout_tf_l1(model, ibfs, mels, tidx);
  }
  return model;
}

}  // namespace svc::acoustic
