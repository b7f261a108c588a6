#include "svc/vocoder.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <mutex>

#include "svc/corpus.hpp"
#include "svc/kernels.hpp"
#include "svc/optimizer.hpp"
#include "svc/tape.hpp"

namespace svc::vocoder {

using kernels::ConvSpec;

namespace {
constexpr double kPi = 3.14159265358979323846;

Tensor xavier(std::vector<int> shape, int fan_in, int fan_out, Rng& rng, float gain = 1.0f) {
  const float a = gain * std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  return Tensor::uniform(std::move(shape), a, rng);
}

Json ctx_json(const ConvContext& c) { return Json{{"left", c.left}, {"right", c.right}}; }
ConvContext ctx_from(const Json& j) {
  return ConvContext{j.at("left").get<int>(), j.at("right").get<int>()};
}
}  // namespace

int VocoderConfig::future_rf_frames() const {
  // Worst case is the last sample of a block; walk the dependency backwards.
  int64_t idx = hop_samples - 1;
  idx += post.right;
  for (int s = static_cast<int>(stages.size()) - 1; s >= 0; --s) {
    idx += stages[static_cast<size_t>(s)].conv1.right + stages[static_cast<size_t>(s)].conv2.right;
    idx = idx / stages[static_cast<size_t>(s)].upsample -
          (idx < 0 && idx % stages[static_cast<size_t>(s)].upsample ? 1 : 0);
  }
  idx += pre.right;
  return static_cast<int>(idx);
}

int VocoderConfig::past_rf_frames() const {
  int64_t idx = 0;
  idx -= post.left;
  for (int s = static_cast<int>(stages.size()) - 1; s >= 0; --s) {
    idx -= stages[static_cast<size_t>(s)].conv1.left + stages[static_cast<size_t>(s)].conv2.left;
    const int up = stages[static_cast<size_t>(s)].upsample;
    idx = idx >= 0 ? idx / up : -((-idx + up - 1) / up);
  }
  idx -= pre.left;
  return static_cast<int>(-idx);
}

void VocoderConfig::validate() const {
  require(mel_bins >= 1 && hop_samples >= 1 && !stages.empty(), "bad_config",
          "vocoder config out of range");
  int up = 1;
  for (const auto& s : stages) up *= s.upsample;
  require(up == hop_samples, "bad_config",
          "product of upsample factors must equal hop_samples");
  require(future_rf_frames() <= lookahead_frames, "bad_config",
          "computed future receptive field exceeds the declared lookahead");
}

Json VocoderConfig::to_json() const {
  Json st = Json::array();
  for (const auto& s : stages)
    st.push_back(Json{{"upsample", s.upsample},
                      {"channels", s.channels},
                      {"conv1", ctx_json(s.conv1)},
                      {"conv2", ctx_json(s.conv2)}});
  return Json{{"mel_bins", mel_bins},     {"hop_samples", hop_samples},
              {"pre_channels", pre_channels}, {"pre", ctx_json(pre)},
              {"stages", st},             {"post", ctx_json(post)},
              {"lookahead_frames", lookahead_frames}};
}

VocoderConfig VocoderConfig::from_json(const Json& j) {
  VocoderConfig c;
  c.mel_bins = j.at("mel_bins").get<int>();
  c.hop_samples = j.at("hop_samples").get<int>();
  c.pre_channels = j.at("pre_channels").get<int>();
  c.pre = ctx_from(j.at("pre"));
  c.stages.clear();
  for (const auto& s : j.at("stages")) {
    StageConfig sc;
    sc.upsample = s.at("upsample").get<int>();
    sc.channels = s.at("channels").get<int>();
    sc.conv1 = ctx_from(s.at("conv1"));
    sc.conv2 = ctx_from(s.at("conv2"));
    c.stages.push_back(sc);
  }
  c.post = ctx_from(j.at("post"));
  c.lookahead_frames = j.at("lookahead_frames").get<int>();
  return c;
}

Vocoder::Vocoder(const VocoderConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = Rng(init_seed).derive("vocoder-init");
  const int pre_taps = cfg.pre.left + cfg.pre.right + 1;
  params_.add("pre.w", xavier({pre_taps, cfg.mel_bins, cfg.pre_channels},
                              pre_taps * cfg.mel_bins, pre_taps * cfg.pre_channels, rng));
  params_.add("pre.b", Tensor({cfg.pre_channels}));
  int cin = cfg.pre_channels;
  for (size_t s = 0; s < cfg.stages.size(); ++s) {
    const auto& st = cfg.stages[s];
    const std::string p = "s" + std::to_string(s);
    params_.add(p + ".up.w", xavier({st.upsample, cin, st.channels}, cin, st.channels, rng));
    params_.add(p + ".up.b", Tensor({st.channels}));
    const int t1 = st.conv1.left + st.conv1.right + 1;
    params_.add(p + ".c1.w", xavier({t1, st.channels, st.channels}, t1 * st.channels,
                                    t1 * st.channels, rng));
    params_.add(p + ".c1.b", Tensor({st.channels}));
    const int t2 = st.conv2.left + st.conv2.right + 1;
    // residual branch starts small so stages begin near identity
    params_.add(p + ".c2.w", xavier({t2, st.channels, st.channels}, t2 * st.channels,
                                    t2 * st.channels, rng, 0.1f));
    params_.add(p + ".c2.b", Tensor({st.channels}));
    cin = st.channels;
  }
  const int post_taps = cfg.post.left + cfg.post.right + 1;
  params_.add("post.w", xavier({post_taps, cin, 1}, post_taps * cin, post_taps, rng, 0.5f));
  params_.add("post.b", Tensor({1}));
}

Vocoder::Vocoder(const ModelBundle& bundle) : cfg_(VocoderConfig::from_json(bundle.config)) {
  require(bundle.kind == "vocoder", "bad_bundle", "bundle kind is not vocoder");
  cfg_.validate();
  for (size_t i = 0; i < bundle.params.size(); ++i)
    params_.add(bundle.params.name(i), bundle.params.tensor(i));
}

ModelBundle Vocoder::to_bundle() const {
  ModelBundle b;
  b.kind = "vocoder";
  b.config = cfg_.to_json();
  for (size_t i = 0; i < params_.size(); ++i) b.params.add(params_.name(i), params_.tensor(i));
  return b;
}

dsp::Waveform Vocoder::vocode_offline(const Tensor& mel, int sample_rate) const {
  require(mel.cols() == cfg_.mel_bins, "mel_width_mismatch",
          "vocode: mel width does not match config");
  ConvSpec pre_spec;
  pre_spec.left = cfg_.pre.left;
  pre_spec.right = cfg_.pre.right;
  Tensor x = kernels::relu_fwd(
      kernels::conv1d_fwd(mel, params_.get("pre.w"), params_.get("pre.b"), pre_spec));
  for (size_t s = 0; s < cfg_.stages.size(); ++s) {
    const auto& st = cfg_.stages[s];
    const std::string p = "s" + std::to_string(s);
    x = kernels::tconv1d_fwd(x, params_.get(p + ".up.w"), params_.get(p + ".up.b"));
    ConvSpec c1{st.conv1.left, st.conv1.right, 1, 0};
    ConvSpec c2{st.conv2.left, st.conv2.right, 1, 0};
    Tensor h = kernels::relu_fwd(
        kernels::conv1d_fwd(x, params_.get(p + ".c1.w"), params_.get(p + ".c1.b"), c1));
    h = kernels::conv1d_fwd(h, params_.get(p + ".c2.w"), params_.get(p + ".c2.b"), c2);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += h.data[i];
  }
  ConvSpec post_spec;
  post_spec.left = cfg_.post.left;
  post_spec.right = cfg_.post.right;
  Tensor y = kernels::conv1d_fwd(x, params_.get("post.w"), params_.get("post.b"), post_spec);
  dsp::Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(y.data.size());
  for (size_t i = 0; i < y.data.size(); ++i) w.samples[i] = std::tanh(y.data[i]);
  w.validate();
  return w;
}

// --- streaming ---------------------------------------------------------------

namespace {

// Row-at-a-time conv with the exact summation order of conv1d_fwd, so the
// streamed output is bit-identical to the offline pass.
class StreamConv {
 public:
  StreamConv(const Tensor& w, const Tensor& b, int left, int right)
      : w_(w), b_(b), left_(left), right_(right), cin_(w.dim(1)), cout_(w.dim(2)) {}

  void push(const float* row) {
    buf_.insert(buf_.end(), row, row + cin_);
    ++pushed_;
  }
  void finish() { ended_ = true; }

  template <typename Emit>
  void drain(Emit&& emit) {
    std::vector<float> out(static_cast<size_t>(cout_));
    while (ended_ ? next_out_ < pushed_ : next_out_ + right_ < pushed_) {
      for (int j = 0; j < cout_; ++j) out[static_cast<size_t>(j)] = b_.data[static_cast<size_t>(j)];
      const int taps = left_ + right_ + 1;
      for (int tap = 0; tap < taps; ++tap) {
        const int64_t src = next_out_ + tap - left_;
        if (src < 0 || src >= pushed_) continue;
        const float* xr = buf_.data() + static_cast<size_t>(src - base_) * cin_;
        const float* wt = w_.data.data() + static_cast<size_t>(tap) * cin_ * cout_;
        for (int i = 0; i < cin_; ++i) {
          const float xv = xr[i];
          const float* wr = wt + static_cast<size_t>(i) * cout_;
          for (int j = 0; j < cout_; ++j) out[static_cast<size_t>(j)] += xv * wr[j];
        }
      }
      ++next_out_;
      emit(out.data());
    }
    // drop rows no future output can reach
    const int64_t keep_from = next_out_ - left_;
    if (keep_from - base_ > 1024) {
      buf_.erase(buf_.begin(), buf_.begin() + static_cast<long>((keep_from - base_) * cin_));
      base_ = keep_from;
    }
  }

  void reset() {
    buf_.clear();
    base_ = pushed_ = next_out_ = 0;
    ended_ = false;
  }

 private:
  const Tensor& w_;
  const Tensor& b_;
  int left_, right_, cin_, cout_;
  std::vector<float> buf_;
  int64_t base_ = 0, pushed_ = 0, next_out_ = 0;
  bool ended_ = false;
};

}  // namespace

struct Vocoder::StreamState::Impl {
  const Vocoder& owner;
  StreamConv pre;
  struct Stage {
    const Tensor& up_w;
    const Tensor& up_b;
    StreamConv c1;
    StreamConv c2;
    std::deque<std::vector<float>> skip;
    int channels;
  };
  std::vector<Stage> stages;
  StreamConv post;
  std::vector<float> pending;  // completed output samples not yet handed out

  explicit Impl(const Vocoder& v)
      : owner(v),
        pre(v.params_.get("pre.w"), v.params_.get("pre.b"), v.cfg_.pre.left, v.cfg_.pre.right),
        post(v.params_.get("post.w"), v.params_.get("post.b"), v.cfg_.post.left,
             v.cfg_.post.right) {
    for (size_t s = 0; s < v.cfg_.stages.size(); ++s) {
      const auto& st = v.cfg_.stages[s];
      const std::string p = "s" + std::to_string(s);
      stages.push_back(Stage{v.params_.get(p + ".up.w"), v.params_.get(p + ".up.b"),
                             StreamConv(v.params_.get(p + ".c1.w"), v.params_.get(p + ".c1.b"),
                                        st.conv1.left, st.conv1.right),
                             StreamConv(v.params_.get(p + ".c2.w"), v.params_.get(p + ".c2.b"),
                                        st.conv2.left, st.conv2.right),
                             {},
                             st.channels});
    }
  }

  // Expand one input row through a transposed conv (kernel == stride),
  // matching tconv1d_fwd's arithmetic, then feed the stage.
  void feed_stage(size_t s, const float* row, int cin) {
    auto& st = stages[s];
    const int stride = st.up_w.dim(0);
    std::vector<float> out(static_cast<size_t>(st.channels));
    for (int j = 0; j < stride; ++j) {
      const float* wt = st.up_w.data.data() + static_cast<size_t>(j) * cin * st.channels;
      for (int k = 0; k < st.channels; ++k) out[static_cast<size_t>(k)] = st.up_b.data[static_cast<size_t>(k)];
      for (int i = 0; i < cin; ++i) {
        const float xv = row[i];
        const float* wr = wt + static_cast<size_t>(i) * st.channels;
        for (int k = 0; k < st.channels; ++k) out[static_cast<size_t>(k)] += xv * wr[k];
      }
      stage_in(s, out.data());
    }
  }

  void stage_in(size_t s, const float* row) {
    auto& st = stages[s];
    st.skip.emplace_back(row, row + st.channels);
    st.c1.push(row);
    pump_stage(s);
  }

  void pump_stage(size_t s) {
    auto& st = stages[s];
    st.c1.drain([&](float* r) {
      for (int i = 0; i < st.channels; ++i) r[i] = r[i] > 0.0f ? r[i] : 0.0f;  // relu
      st.c2.push(r);
    });
    st.c2.drain([&](float* r) {
      const std::vector<float>& x = st.skip.front();
      std::vector<float> y(static_cast<size_t>(st.channels));
      for (int i = 0; i < st.channels; ++i) y[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + r[i];
      st.skip.pop_front();
      emit_from_stage(s, y.data());
    });
  }

  void emit_from_stage(size_t s, const float* row) {
    if (s + 1 < stages.size()) {
      feed_stage(s + 1, row, stages[s].channels);
    } else {
      post.push(row);
      post.drain([&](float* r) { pending.push_back(std::tanh(r[0])); });
    }
  }

  void push_frame(const float* mel_row) {
    pre.push(mel_row);
    pre.drain([&](float* r) {
      for (int i = 0; i < owner.cfg_.pre_channels; ++i) r[i] = r[i] > 0.0f ? r[i] : 0.0f;
      feed_stage(0, r, owner.cfg_.pre_channels);
    });
  }

  void finish() {
    pre.finish();
    pre.drain([&](float* r) {
      for (int i = 0; i < owner.cfg_.pre_channels; ++i) r[i] = r[i] > 0.0f ? r[i] : 0.0f;
      feed_stage(0, r, owner.cfg_.pre_channels);
    });
    for (size_t s = 0; s < stages.size(); ++s) {
      stages[s].c1.finish();
      pump_stage(s);
      stages[s].c2.finish();
      pump_stage(s);
    }
    post.finish();
    post.drain([&](float* r) { pending.push_back(std::tanh(r[0])); });
  }
};

Vocoder::StreamState::StreamState(const Vocoder& owner) : impl_(new Impl(owner)) {}
Vocoder::StreamState::~StreamState() = default;
Vocoder::StreamState::StreamState(StreamState&&) noexcept = default;

std::vector<float> Vocoder::StreamState::push_frame(const float* mel_row) {
  impl_->push_frame(mel_row);
  // hand out whole hop-sized blocks only: block t is released exactly when
  // mel frame t + lookahead has arrived
  const size_t hop = static_cast<size_t>(impl_->owner.config().hop_samples);
  const size_t whole = impl_->pending.size() / hop * hop;
  std::vector<float> out(impl_->pending.begin(), impl_->pending.begin() + static_cast<long>(whole));
  impl_->pending.erase(impl_->pending.begin(), impl_->pending.begin() + static_cast<long>(whole));
  return out;
}

std::vector<float> Vocoder::StreamState::flush() {
  impl_->finish();
  std::vector<float> out;
  out.swap(impl_->pending);
  return out;
}

void Vocoder::StreamState::reset() {
  Impl* fresh = new Impl(impl_->owner);
  impl_.reset(fresh);
}

dsp::Waveform Vocoder::vocode_streaming(const Tensor& mel, int sample_rate) const {
  require(mel.cols() == cfg_.mel_bins, "mel_width_mismatch",
          "vocode: mel width does not match config");
  StreamState state(*this);
  dsp::Waveform w;
  w.sample_rate = sample_rate;
  for (int t = 0; t < mel.rows(); ++t) {
    std::vector<float> block = state.push_frame(mel.row(t));
    w.samples.insert(w.samples.end(), block.begin(), block.end());
  }
  std::vector<float> tail = state.flush();
  w.samples.insert(w.samples.end(), tail.begin(), tail.end());
  return w;
}

// --- training ----------------------------------------------------------------

VocoderTrainItem vocoder_item_from(const corpus::Utterance& u) {
  VocoderTrainItem item;
  item.mel = u.mel.values;
  item.samples.assign(u.wave.samples.begin(),
                      u.wave.samples.begin() + static_cast<long>(u.mel.frames()) * 80);
  return item;
}

namespace {

struct DftMatrices {
  Tensor cos, sin;  // [win, bins]
  std::vector<float> window;
};

const DftMatrices& dft_for(const dsp::StftResolution& res) {
  static std::map<int, DftMatrices> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(res.fft_size);
  if (it == cache.end()) {
    DftMatrices m;
    const int bins = res.fft_size / 2 + 1;
    m.cos = Tensor({res.win, bins});
    m.sin = Tensor({res.win, bins});
    for (int i = 0; i < res.win; ++i)
      for (int k = 0; k < bins; ++k) {
        const double ang = 2.0 * kPi * k * i / res.fft_size;
        m.cos.at(i, k) = static_cast<float>(std::cos(ang));
        m.sin.at(i, k) = static_cast<float>(-std::sin(ang));
      }
    m.window.resize(static_cast<size_t>(res.win));
    const auto hann = dsp::hann_window(res.win);
    std::copy(hann.begin(), hann.end(), m.window.begin());
    it = cache.emplace(res.fft_size, std::move(m)).first;
  }
  return it->second;
}

// The differentiable twin of dsp::multires_stft_loss.
Tape::Id spectral_loss_graph(Tape& tape, Tape::Id pred_wave, Tape::Id target_wave) {
  Tape::Id total = -1;
  for (const auto& res : dsp::multires_resolutions()) {
    const DftMatrices& m = dft_for(res);
    Tape::Id cosm = tape.input(m.cos);
    Tape::Id sinm = tape.input(m.sin);
    Tape::Id zero_b = tape.input(Tensor({m.cos.cols()}));
    auto mag_of = [&](Tape::Id wave) {
      Tape::Id fr = tape.frames(wave, res.win, res.hop, m.window);
      return tape.magnitude(tape.affine(fr, cosm, zero_b), tape.affine(fr, sinm, zero_b));
    };
    Tape::Id ma = mag_of(target_wave);  // reference side
    Tape::Id mb = mag_of(pred_wave);
    Tape::Id l1 = tape.l1_loss(tape.log_eps(ma, 1e-5f), tape.log_eps(mb, 1e-5f));
    Tape::Id sc = tape.div_scalar(tape.fro_norm(tape.sub(ma, mb)), tape.fro_norm(ma));
    Tape::Id part = tape.add_weighted(l1, sc, 1.0f, 1.0f);
    total = total < 0 ? part : tape.add_weighted(total, part, 1.0f, 1.0f);
  }
  return total;
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

Tape::Id vocoder_graph(Tape& tape, const VocoderConfig& cfg, const ParamStore& store,
                       const std::vector<Tape::Id>& p, Tape::Id mel) {
  auto idx_of = [&](const std::string& name) {
    for (size_t i = 0; i < store.size(); ++i)
      if (store.name(i) == name) return i;
    fail("missing_param", name);
  };
  ConvSpec pre_spec{cfg.pre.left, cfg.pre.right, 1, 0};
  Tape::Id x = tape.relu(tape.conv1d(mel, p[idx_of("pre.w")], p[idx_of("pre.b")], pre_spec));
  for (size_t s = 0; s < cfg.stages.size(); ++s) {
    const auto& st = cfg.stages[s];
    const std::string pre = "s" + std::to_string(s);
    x = tape.tconv1d(x, p[idx_of(pre + ".up.w")], p[idx_of(pre + ".up.b")]);
    ConvSpec c1{st.conv1.left, st.conv1.right, 1, 0};
    ConvSpec c2{st.conv2.left, st.conv2.right, 1, 0};
    Tape::Id h = tape.relu(tape.conv1d(x, p[idx_of(pre + ".c1.w")], p[idx_of(pre + ".c1.b")], c1));
    h = tape.conv1d(h, p[idx_of(pre + ".c2.w")], p[idx_of(pre + ".c2.b")], c2);
    x = tape.add(x, h);
  }
  ConvSpec post_spec{cfg.post.left, cfg.post.right, 1, 0};
  Tape::Id y = tape.conv1d(x, p[idx_of("post.w")], p[idx_of("post.b")], post_spec);
  return tape.tanh_(y);
}

}  // namespace

Vocoder train_vocoder(const std::vector<VocoderTrainItem>& train,
                      const std::vector<VocoderTrainItem>& heldout, const VocoderConfig& cfg,
                      const VocoderTrainConfig& tcfg, VocoderTrainStats* stats) {
  require(!train.empty(), "no_data", "train_vocoder: empty training set");
  Vocoder voc(cfg, tcfg.seed);
  Rng rng = Rng(tcfg.seed).derive("vocoder-train");
  AdamConfig acfg;
  acfg.lr = tcfg.lr;
  Adam opt(acfg);
  for (size_t i = 0; i < voc.params().size(); ++i) opt.register_param(voc.params().tensor(i));

  for (int step = 0; step < tcfg.steps; ++step) {
    opt.set_lr(tcfg.lr * (1.0f - 0.9f * static_cast<float>(step) / tcfg.steps));
    const auto& item = train[static_cast<size_t>(rng.randint(0, static_cast<int64_t>(train.size()) - 1))];
    const int frames = item.mel.rows();
    const int crop = std::min(tcfg.crop_frames, frames);
    const int start = crop < frames ? static_cast<int>(rng.randint(0, frames - crop)) : 0;
    Tensor mel({crop, item.mel.cols()});
    for (int t = 0; t < crop; ++t) std::copy_n(item.mel.row(start + t), item.mel.cols(), mel.row(t));
    Tensor target({crop * cfg.hop_samples});
    std::copy_n(item.samples.data() + static_cast<size_t>(start) * cfg.hop_samples,
                static_cast<size_t>(crop) * cfg.hop_samples, target.data.data());
    try {
      Tape tape;
      Bound b = bind(tape, voc.params());
      Tape::Id wave = vocoder_graph(tape, cfg, voc.params(), b.ids, tape.input(std::move(mel)));
      Tape::Id loss = spectral_loss_graph(tape, wave, tape.input(std::move(target)));
      const float loss_val = tape.value(loss).data[0];
      tape.backward(loss);
      std::vector<const Tensor*> grads;
      for (Tape::Id id : b.ids) grads.push_back(&tape.grad(id));
      opt.step(b.values, grads);
      if (stats) stats->losses.push_back(loss_val);
    } catch (const Error& e) {
      if (std::string(e.code()) == "non_finite")
        fail("training_diverged",
             "vocoder training diverged at step " + std::to_string(step) + ": " + e.what());
      throw;
    }
  }

  if (stats && !heldout.empty()) {
    double total = 0.0;
    for (const auto& h : heldout) {
      dsp::Waveform pred = voc.vocode_offline(h.mel, 8000);
      dsp::Waveform ref;
      ref.sample_rate = 8000;
      ref.samples = h.samples;
      total += dsp::multires_stft_loss(ref, pred);
    }
    stats->heldout_loss = total / static_cast<double>(heldout.size());
  }
  return voc;
}

int measure_lookahead(const Vocoder& voc, uint64_t seed) {
  Rng rng = Rng(seed).derive("lookahead-measure");
  const auto& cfg = voc.config();
  const int frames = 14;
  int measured = 0;
  for (int trial = 0; trial < 3; ++trial) {
    Tensor mel({frames, cfg.mel_bins});
    for (auto& v : mel.data) v = static_cast<float>(rng.uniform(-8.0, 0.0));
    dsp::Waveform base = voc.vocode_offline(mel, 8000);
    for (int t = 3; t <= 7; ++t) {
      for (int d = 0; d <= 6 && t + d < frames; ++d) {
        Tensor mod = mel;
        for (int c = 0; c < cfg.mel_bins; ++c) mod.at(t + d, c) += 2.0f + c * 0.1f;
        dsp::Waveform out = voc.vocode_offline(mod, 8000);
        bool changed = false;
        for (int n = t * cfg.hop_samples; n < (t + 1) * cfg.hop_samples; ++n)
          if (out.samples[static_cast<size_t>(n)] != base.samples[static_cast<size_t>(n)]) {
            changed = true;
            break;
          }
        if (changed) measured = std::max(measured, d);
      }
    }
  }
  return measured;
}

}  // namespace svc::vocoder
