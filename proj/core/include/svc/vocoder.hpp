#pragma once

#include <memory>
#include <vector>

#include "svc/corpus.hpp"
#include "svc/dsp.hpp"
#include "svc/params.hpp"

namespace svc::vocoder {

// Mel-to-waveform synthesizer: pre-conv at frame rate, then three
// (upsample, residual-conv) stages, then a post-conv and tanh. Every conv's
// right context is part of an explicit future-receptive-field budget that
// must stay within `lookahead_frames` of mel input; the budget is both
// validated from the config and measured by perturbation in the tests.
struct ConvContext {
  int left = 2;
  int right = 0;
};

struct StageConfig {
  int upsample = 4;
  int channels = 16;
  ConvContext conv1{2, 1};
  ConvContext conv2{2, 0};
};

struct VocoderConfig {
  int mel_bins = 20;
  int hop_samples = 80;
  int pre_channels = 32;
  ConvContext pre{4, 1};
  std::vector<StageConfig> stages = {
      {5, 32, {3, 1}, {2, 0}},
      {4, 24, {3, 2}, {2, 0}},
      {4, 16, {2, 2}, {2, 0}},
  };
  ConvContext post{2, 1};
  int lookahead_frames = 2;  // declared budget, in mel frames

  // Worst-case future reach in mel frames implied by the layer contexts.
  int future_rf_frames() const;
  // Past reach in mel frames (used to size streaming caches).
  int past_rf_frames() const;
  void validate() const;
  Json to_json() const;
  static VocoderConfig from_json(const Json& j);
};

class Vocoder {
 public:
  Vocoder(const VocoderConfig& cfg, uint64_t init_seed);
  explicit Vocoder(const ModelBundle& bundle);

  const VocoderConfig& config() const { return cfg_; }
  ModelBundle to_bundle() const;
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Offline synthesis: [frames, mel_bins] -> frames * hop samples.
  dsp::Waveform vocode_offline(const Tensor& mel, int sample_rate) const;

  // Streaming synthesis; emits sample blocks as soon as the lookahead is
  // satisfied, bit-exact against the offline path.
  class StreamState {
   public:
    explicit StreamState(const Vocoder& owner);
    ~StreamState();
    StreamState(StreamState&&) noexcept;
    // Push one mel frame; returns any newly completed samples.
    std::vector<float> push_frame(const float* mel_row);
    // Declare end of stream and drain the remaining samples.
    std::vector<float> flush();
    void reset();

    struct Impl;

   private:
    std::unique_ptr<Impl> impl_;
  };
  StreamState stream() const { return StreamState(*this); }

  dsp::Waveform vocode_streaming(const Tensor& mel, int sample_rate) const;

 private:
  VocoderConfig cfg_;
  ParamStore params_;
  friend struct StreamState::Impl;
};

struct VocoderTrainItem {
  Tensor mel;                  // [frames, mel_bins]
  std::vector<float> samples;  // frames * hop
};

VocoderTrainItem vocoder_item_from(const corpus::Utterance& u);

struct VocoderTrainConfig {
  int steps = 900;
  int crop_frames = 40;
  float lr = 2e-3f;
  uint64_t seed = 0;
};

struct VocoderTrainStats {
  std::vector<float> losses;
  double heldout_loss = -1.0;  // dsp::multires_stft_loss on held-out items
};

// Multi-resolution spectral loss training (the adversarial option is
// deliberately absent here).
Vocoder train_vocoder(const std::vector<VocoderTrainItem>& train,
                      const std::vector<VocoderTrainItem>& heldout, const VocoderConfig& cfg,
                      const VocoderTrainConfig& tcfg, VocoderTrainStats* stats = nullptr);

// Perturbation sweep: the largest d such that changing mel frame t+d ever
// changes the samples of block t. Must equal the declared lookahead.
int measure_lookahead(const Vocoder& voc, uint64_t seed);

}  // namespace svc::vocoder
