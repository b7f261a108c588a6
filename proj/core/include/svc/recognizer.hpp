#pragma once

#include <string>
#include <vector>

#include "svc/corpus.hpp"
#include "svc/params.hpp"
#include "svc/tensor.hpp"

namespace svc::recognizer {

enum class EncoderMode { non_streaming, streaming };

// K-layer framewise phoneme classifier over log-mel input. Each block is
// conv -> relu -> layer_norm (the tap point); the head maps the last block
// to phoneme logits. Streaming mode clips every conv's right context at
// 16-frame chunk boundaries, so chunk c depends only on chunks <= c.
struct EncoderConfig {
  int layers = 6;             // K
  int width = 32;
  int mel_bins = 20;
  int classes = corpus::kNumPhonemes;
  EncoderMode mode = EncoderMode::non_streaming;
  int chunk_frames = 16;      // used in streaming mode
  int context_left = 2;       // per layer
  int context_right = 2;      // per layer; chunk-clipped when streaming

  void validate() const;
  Json to_json() const;
  static EncoderConfig from_json(const Json& j);
};

struct IBF {
  Tensor features;  // [frames, width] or [frames, classes] at k == K
  int k = 0;
  EncoderMode mode = EncoderMode::non_streaming;
};

struct LabeledUtterance {
  Tensor mel;               // [frames, mel_bins]
  std::vector<int> labels;  // per frame
  int speaker_index = 0;
  std::string speaker_id;
};

LabeledUtterance labeled_from(const corpus::Utterance& u, int speaker_index);
std::vector<LabeledUtterance> load_labeled_split(const corpus::CorpusManifest& m,
                                                 const std::string& split);

class Recognizer {
 public:
  Recognizer(const EncoderConfig& cfg, uint64_t init_seed);
  explicit Recognizer(const ModelBundle& bundle);

  const EncoderConfig& config() const { return cfg_; }
  ModelBundle to_bundle() const;
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  // Activations of the layer-k tap; k == K returns the post-softmax
  // phoneme posteriors (the PPG-equivalent features).
  IBF extract_ibf(const Tensor& mel, int k) const;

  // Phoneme logits for the whole input.
  Tensor logits(const Tensor& mel) const;

  double framewise_accuracy(const std::vector<LabeledUtterance>& data) const;

  // Incremental evaluation for the runtime: feed whole chunks in order,
  // get the tap-k features for exactly those frames. Bit-exact against
  // extract_ibf on the concatenated input.
  class StreamState {
   public:
    StreamState(const Recognizer& owner, int k);
    Tensor push_chunk(const Tensor& mel_chunk);
    void reset();

   private:
    const Recognizer& owner_;
    int k_;
    int frames_seen_ = 0;
    std::vector<Tensor> tails_;  // per tapped layer: trailing input frames
    friend class Recognizer;
  };

 private:
  EncoderConfig cfg_;
  ParamStore params_;

  friend class StreamState;
};

struct TrainConfig {
  int steps = 1500;
  int crop_frames = 160;
  float lr = 1.5e-3f;
  uint64_t seed = 0;
};

struct TrainStats {
  std::vector<float> losses;          // per step
  double val_accuracy = -1.0;
  // EMA of the loss sampled every 50 steps; tests assert it never rises
  // by more than a small tolerance.
  std::vector<float> smoothed_curve;
};

// Framewise cross-entropy training. Throws Error("training_diverged") with
// step diagnostics if the loss goes non-finite.
Recognizer train_recognizer(const std::vector<LabeledUtterance>& train,
                            const std::vector<LabeledUtterance>& val, const EncoderConfig& cfg,
                            const TrainConfig& tcfg, TrainStats* stats = nullptr);

// Linear speaker probe on frame-averaged tap-k features: trains a logistic
// regression on `probe_train`, returns accuracy on `probe_eval`. The
// spec-level leakage measurements are medians of this over seeds.
double leakage_probe(const Recognizer& rec, int k,
                     const std::vector<LabeledUtterance>& probe_train,
                     const std::vector<LabeledUtterance>& probe_eval, int num_speakers,
                     uint64_t seed, bool shuffle_labels = false);

}  // namespace svc::recognizer
