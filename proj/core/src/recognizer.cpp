#include "svc/recognizer.hpp"

#include <algorithm>
#include <cmath>

#include "svc/kernels.hpp"
#include "svc/optimizer.hpp"
#include "svc/tape.hpp"

namespace svc::recognizer {

using kernels::ConvSpec;

void EncoderConfig::validate() const {
  require(layers >= 1 && width >= 4 && mel_bins >= 1 && classes >= 2, "bad_config",
          "encoder config out of range");
  require(chunk_frames > 0, "bad_config", "chunk_frames must be positive");
  require(context_left >= 0 && context_right >= 0, "bad_config", "contexts must be >= 0");
}

Json EncoderConfig::to_json() const {
  return Json{{"layers", layers},
              {"width", width},
              {"mel_bins", mel_bins},
              {"classes", classes},
              {"mode", mode == EncoderMode::streaming ? "streaming" : "non_streaming"},
              {"chunk_frames", chunk_frames},
              {"context_left", context_left},
              {"context_right", context_right}};
}

EncoderConfig EncoderConfig::from_json(const Json& j) {
  EncoderConfig c;
  c.layers = j.at("layers").get<int>();
  c.width = j.at("width").get<int>();
  c.mel_bins = j.at("mel_bins").get<int>();
  c.classes = j.at("classes").get<int>();
  c.mode = j.at("mode").get<std::string>() == "streaming" ? EncoderMode::streaming
                                                          : EncoderMode::non_streaming;
  c.chunk_frames = j.at("chunk_frames").get<int>();
  c.context_left = j.at("context_left").get<int>();
  c.context_right = j.at("context_right").get<int>();
  return c;
}

LabeledUtterance labeled_from(const corpus::Utterance& u, int speaker_index) {
  LabeledUtterance l;
  l.mel = u.mel.values;
  l.labels = u.phoneme_frames;
  l.speaker_index = speaker_index;
  l.speaker_id = u.speaker_id;
  return l;
}

std::vector<LabeledUtterance> load_labeled_split(const corpus::CorpusManifest& m,
                                                 const std::string& split) {
  std::vector<LabeledUtterance> out;
  for (const auto* rec : m.split(split)) {
    corpus::Utterance u = corpus::load_utterance(m, *rec);
    out.push_back(labeled_from(u, m.speaker_index(rec->speaker_id)));
  }
  return out;
}

namespace {

Tensor xavier(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  const float a = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  return Tensor::uniform(std::move(shape), a, rng);
}

std::string layer_prefix(int i) { return "block" + std::to_string(i); }

}  // namespace

Recognizer::Recognizer(const EncoderConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = Rng(init_seed).derive("recognizer-init");
  const int taps = cfg.context_left + cfg.context_right + 1;
  for (int i = 0; i < cfg.layers; ++i) {
    const int cin = i == 0 ? cfg.mel_bins : cfg.width;
    const std::string p = layer_prefix(i);
    params_.add(p + ".conv.w", xavier({taps, cin, cfg.width}, taps * cin, taps * cfg.width, rng));
    params_.add(p + ".conv.b", Tensor({cfg.width}));
    params_.add(p + ".ln.g", Tensor::full({cfg.width}, 1.0f));
    params_.add(p + ".ln.b", Tensor({cfg.width}));
  }
  params_.add("head.w", xavier({cfg.width, cfg.classes}, cfg.width, cfg.classes, rng));
  params_.add("head.b", Tensor({cfg.classes}));
}

Recognizer::Recognizer(const ModelBundle& bundle) : cfg_(EncoderConfig::from_json(bundle.config)) {
  require(bundle.kind == "recognizer", "bad_bundle", "bundle kind is not recognizer");
  cfg_.validate();
  for (size_t i = 0; i < bundle.params.size(); ++i)
    params_.add(bundle.params.name(i), bundle.params.tensor(i));
}

ModelBundle Recognizer::to_bundle() const {
  ModelBundle b;
  b.kind = "recognizer";
  b.config = cfg_.to_json();
  for (size_t i = 0; i < params_.size(); ++i) b.params.add(params_.name(i), params_.tensor(i));
  return b;
}

IBF Recognizer::extract_ibf(const Tensor& mel, int k) const {
  require(k >= 1 && k <= cfg_.layers, "bad_tap", "IBF tap out of range");
  require(mel.cols() == cfg_.mel_bins, "shape_mismatch", "mel width mismatch");
  ConvSpec spec;
  spec.left = cfg_.context_left;
  spec.right = cfg_.context_right;
  spec.chunk_frames = cfg_.mode == EncoderMode::streaming ? cfg_.chunk_frames : 0;
  Tensor x = mel;
  for (int i = 0; i < k; ++i) {
    const std::string p = layer_prefix(i);
    x = kernels::conv1d_fwd(x, params_.get(p + ".conv.w"), params_.get(p + ".conv.b"), spec);
    x = kernels::relu_fwd(x);
    x = kernels::layer_norm_fwd<float>(x, params_.get(p + ".ln.g"), params_.get(p + ".ln.b"),
                                       nullptr);
  }
  IBF out;
  out.k = k;
  out.mode = cfg_.mode;
  if (k == cfg_.layers) {
    // PPG-equivalent tap: post-softmax phoneme posteriors
    x = kernels::affine_fwd(x, params_.get("head.w"), params_.get("head.b"));
    out.features = kernels::softmax_fwd(x);
  } else {
    out.features = std::move(x);
  }
  return out;
}

Tensor Recognizer::logits(const Tensor& mel) const {
  require(mel.cols() == cfg_.mel_bins, "shape_mismatch", "mel width mismatch");
  ConvSpec spec;
  spec.left = cfg_.context_left;
  spec.right = cfg_.context_right;
  spec.chunk_frames = cfg_.mode == EncoderMode::streaming ? cfg_.chunk_frames : 0;
  Tensor x = mel;
  for (int i = 0; i < cfg_.layers; ++i) {
    const std::string p = layer_prefix(i);
    x = kernels::conv1d_fwd(x, params_.get(p + ".conv.w"), params_.get(p + ".conv.b"), spec);
    x = kernels::relu_fwd(x);
    x = kernels::layer_norm_fwd<float>(x, params_.get(p + ".ln.g"), params_.get(p + ".ln.b"),
                                       nullptr);
  }
  return kernels::affine_fwd(x, params_.get("head.w"), params_.get("head.b"));
}

double Recognizer::framewise_accuracy(const std::vector<LabeledUtterance>& data) const {
  int64_t correct = 0, total = 0;
  for (const auto& u : data) {
    Tensor lg = logits(u.mel);
    for (int t = 0; t < lg.rows(); ++t) {
      int arg = 0;
      for (int c = 1; c < lg.cols(); ++c)
        if (lg.at(t, c) > lg.at(t, arg)) arg = c;
      correct += arg == u.labels[static_cast<size_t>(t)];
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

// --- streaming incremental evaluation --------------------------------------

Recognizer::StreamState::StreamState(const Recognizer& owner, int k) : owner_(owner), k_(k) {
  require(k >= 1 && k <= owner.cfg_.layers, "bad_tap", "IBF tap out of range");
  require(owner.cfg_.mode == EncoderMode::streaming, "bad_mode",
          "incremental evaluation requires a streaming-mode recognizer");
  reset();
}

void Recognizer::StreamState::reset() {
  frames_seen_ = 0;
  tails_.assign(static_cast<size_t>(k_), Tensor());
}

Tensor Recognizer::StreamState::push_chunk(const Tensor& mel_chunk) {
  const auto& cfg = owner_.cfg_;
  require(mel_chunk.rows() == cfg.chunk_frames, "bad_chunk", "chunk must be chunk_frames long");
  require(mel_chunk.cols() == cfg.mel_bins, "shape_mismatch", "mel width mismatch");
  ConvSpec spec;
  spec.left = cfg.context_left;
  spec.right = cfg.context_right;
  spec.chunk_frames = cfg.chunk_frames;
  const int chunk_begin = frames_seen_;
  const int chunk_end = frames_seen_ + cfg.chunk_frames;

  Tensor x = mel_chunk;
  for (int i = 0; i < k_; ++i) {
    const std::string p = layer_prefix(i);
    Tensor& tail = tails_[static_cast<size_t>(i)];
    // assemble [cached tail | chunk]; the slice's global start reflects how
    // many tail frames we kept
    const int tail_rows = tail.numel() == 0 ? 0 : tail.rows();
    Tensor slice({tail_rows + cfg.chunk_frames, x.cols()});
    for (int r = 0; r < tail_rows; ++r)
      std::copy_n(tail.row(r), x.cols(), slice.row(r));
    for (int r = 0; r < cfg.chunk_frames; ++r)
      std::copy_n(x.row(r), x.cols(), slice.row(tail_rows + r));
    const int slice_begin = chunk_begin - tail_rows;

    Tensor conv({cfg.chunk_frames, cfg.width});
    kernels::conv1d_span(slice, slice_begin, chunk_end, owner_.params_.get(p + ".conv.w"),
                         owner_.params_.get(p + ".conv.b"), spec, chunk_begin, chunk_end, &conv,
                         0);
    // stash this layer's trailing input frames for the next chunk
    const int keep = std::min(spec.left, tail_rows + cfg.chunk_frames);
    Tensor new_tail({keep, x.cols()});
    for (int r = 0; r < keep; ++r)
      std::copy_n(slice.row(tail_rows + cfg.chunk_frames - keep + r), x.cols(), new_tail.row(r));
    tail = std::move(new_tail);

    conv = kernels::relu_fwd(conv);
    x = kernels::layer_norm_fwd<float>(conv, owner_.params_.get(p + ".ln.g"),
                                       owner_.params_.get(p + ".ln.b"), nullptr);
  }
  frames_seen_ = chunk_end;
  if (k_ == cfg.layers) {
    x = kernels::affine_fwd(x, owner_.params_.get("head.w"), owner_.params_.get("head.b"));
    x = kernels::softmax_fwd(x);
  }
  return x;
}

// --- training ---------------------------------------------------------------

namespace {

struct ParamBinding {
  std::vector<Tensor*> values;
  std::vector<Tape::Id> ids;
};

ParamBinding bind_params(Tape& tape, ParamStore& store) {
  ParamBinding b;
  for (size_t i = 0; i < store.size(); ++i) {
    b.values.push_back(&store.tensor(i));
    b.ids.push_back(tape.param(store.tensor(i)));
  }
  return b;
}

}  // namespace

Recognizer train_recognizer(const std::vector<LabeledUtterance>& train,
                            const std::vector<LabeledUtterance>& val, const EncoderConfig& cfg,
                            const TrainConfig& tcfg, TrainStats* stats) {
  require(!train.empty(), "no_data", "train_recognizer: empty training set");
  Recognizer rec(cfg, tcfg.seed);
  Rng rng = Rng(tcfg.seed).derive("recognizer-train");
  AdamConfig acfg;
  acfg.lr = tcfg.lr;
  Adam opt(acfg);
  for (size_t i = 0; i < rec.params().size(); ++i) opt.register_param(rec.params().tensor(i));

  ConvSpec spec;
  spec.left = cfg.context_left;
  spec.right = cfg.context_right;
  spec.chunk_frames = cfg.mode == EncoderMode::streaming ? cfg.chunk_frames : 0;

  float ema = -1.0f;
  for (int step = 0; step < tcfg.steps; ++step) {
    opt.set_lr(tcfg.lr * (1.0f - 0.9f * static_cast<float>(step) / tcfg.steps));
    const auto& u = train[static_cast<size_t>(rng.randint(0, static_cast<int64_t>(train.size()) - 1))];
    const int frames = u.mel.rows();
    const int crop = std::min(tcfg.crop_frames, frames);
    const int start = crop < frames ? static_cast<int>(rng.randint(0, frames - crop)) : 0;
    Tensor mel({crop, u.mel.cols()});
    std::vector<int> labels(static_cast<size_t>(crop));
    for (int t = 0; t < crop; ++t) {
      std::copy_n(u.mel.row(start + t), u.mel.cols(), mel.row(t));
      labels[static_cast<size_t>(t)] = u.labels[static_cast<size_t>(start + t)];
    }

    try {
      Tape tape;
      ParamBinding bind = bind_params(tape, rec.params());
      Tape::Id x = tape.input(std::move(mel));
      size_t pi = 0;
      for (int i = 0; i < cfg.layers; ++i) {
        Tape::Id w = bind.ids[pi++], b = bind.ids[pi++], g = bind.ids[pi++], bb = bind.ids[pi++];
        x = tape.layer_norm(tape.relu(tape.conv1d(x, w, b, spec)), g, bb);
      }
      Tape::Id logits = tape.affine(x, bind.ids[pi], bind.ids[pi + 1]);
      Tape::Id loss = tape.cross_entropy(logits, labels);
      const float loss_val = tape.value(loss).data[0];
      tape.backward(loss);
      std::vector<const Tensor*> grads;
      grads.reserve(bind.ids.size());
      for (Tape::Id id : bind.ids) grads.push_back(&tape.grad(id));
      opt.step(bind.values, grads);
      if (stats) {
        stats->losses.push_back(loss_val);
        ema = ema < 0 ? loss_val : 0.99f * ema + 0.01f * loss_val;
        if (step % 50 == 49) stats->smoothed_curve.push_back(ema);
      }
    } catch (const Error& e) {
      if (std::string(e.code()) == "non_finite")
        fail("training_diverged",
             "recognizer training diverged at step " + std::to_string(step) + ": " + e.what());
      throw;
    }
  }
  if (stats && !val.empty()) stats->val_accuracy = rec.framewise_accuracy(val);
  return rec;
}

double leakage_probe(const Recognizer& rec, int k,
                     const std::vector<LabeledUtterance>& probe_train,
                     const std::vector<LabeledUtterance>& probe_eval, int num_speakers,
                     uint64_t seed, bool shuffle_labels) {
  require(num_speakers >= 2, "bad_config", "leakage_probe: need at least 2 speakers");
  require(!probe_train.empty() && !probe_eval.empty(), "no_data", "leakage_probe: empty data");

  auto featurize = [&](const std::vector<LabeledUtterance>& data) {
    Tensor feats;
    std::vector<int> spk;
    for (const auto& u : data) {
      IBF ibf = rec.extract_ibf(u.mel, k);
      const int width = ibf.features.cols();
      if (feats.numel() == 0) feats = Tensor({0, width});
      std::vector<float> avg(static_cast<size_t>(width), 0.0f);
      for (int t = 0; t < ibf.features.rows(); ++t)
        for (int c = 0; c < width; ++c) avg[static_cast<size_t>(c)] += ibf.features.at(t, c);
      for (auto& v : avg) v /= static_cast<float>(ibf.features.rows());
      Tensor grown({feats.rows() + 1, width});
      std::copy(feats.data.begin(), feats.data.end(), grown.data.begin());
      std::copy(avg.begin(), avg.end(), grown.row(feats.rows()));
      feats = std::move(grown);
      spk.push_back(u.speaker_index);
    }
    return std::make_pair(feats, spk);
  };

  auto [train_x, train_y] = featurize(probe_train);
  auto [eval_x, eval_y] = featurize(probe_eval);

  Rng rng = Rng(seed).derive("probe");
  if (shuffle_labels) {
    for (size_t i = train_y.size(); i > 1; --i)
      std::swap(train_y[i - 1], train_y[static_cast<size_t>(rng.randint(0, static_cast<int64_t>(i) - 1))]);
  }

  // standardize features; keeps the logistic regression well-conditioned
  const int width = train_x.cols();
  std::vector<float> mean(static_cast<size_t>(width), 0.0f), sd(static_cast<size_t>(width), 0.0f);
  for (int r = 0; r < train_x.rows(); ++r)
    for (int c = 0; c < width; ++c) mean[static_cast<size_t>(c)] += train_x.at(r, c);
  for (auto& m : mean) m /= static_cast<float>(train_x.rows());
  for (int r = 0; r < train_x.rows(); ++r)
    for (int c = 0; c < width; ++c) {
      const float d = train_x.at(r, c) - mean[static_cast<size_t>(c)];
      sd[static_cast<size_t>(c)] += d * d;
    }
  for (auto& s : sd) s = std::sqrt(s / static_cast<float>(train_x.rows())) + 1e-4f;
  auto standardize = [&](Tensor& t) {
    for (int r = 0; r < t.rows(); ++r)
      for (int c = 0; c < width; ++c)
        t.at(r, c) = (t.at(r, c) - mean[static_cast<size_t>(c)]) / sd[static_cast<size_t>(c)];
  };
  standardize(train_x);
  standardize(eval_x);

  Tensor w = Tensor::uniform({width, num_speakers}, 0.05f, rng);
  Tensor b({num_speakers});
  AdamConfig acfg;
  acfg.lr = 0.05f;
  Adam opt(acfg);
  opt.register_param(w);
  opt.register_param(b);
  for (int step = 0; step < 300; ++step) {
    Tape tape;
    Tape::Id wi = tape.param(w), bi = tape.param(b);
    Tape::Id logits = tape.affine(tape.input(train_x), wi, bi);
    Tape::Id loss = tape.cross_entropy(logits, train_y);
    tape.backward(loss);
    opt.step({&w, &b}, {&tape.grad(wi), &tape.grad(bi)});
  }

  Tensor logits = kernels::affine_fwd(eval_x, w, b);
  int correct = 0;
  for (int r = 0; r < logits.rows(); ++r) {
    int arg = 0;
    for (int c = 1; c < logits.cols(); ++c)
      if (logits.at(r, c) > logits.at(r, arg)) arg = c;
    correct += arg == eval_y[static_cast<size_t>(r)];
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace svc::recognizer
