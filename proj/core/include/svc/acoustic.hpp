#pragma once

#include <string>
#include <vector>

#include "svc/corpus.hpp"
#include "svc/params.hpp"
#include "svc/recognizer.hpp"

namespace svc::acoustic {

enum class AmKind { teacher, student };

// Maps (IBF features, target speaker id) -> target mel. The teacher uses
// full-utterance conv context; the student's encoder is chunk-clipped and
// its decoder is strictly frame-autoregressive, so output frame t depends
// only on IBF chunks <= chunk(t) and its own past outputs.
struct AcousticConfig {
  AmKind kind = AmKind::teacher;
  int ibf_layer = 4;   // k; must match the recognizer tap used at runtime
  int ibf_width = 32;  // tap feature width (== classes when k == K)
  int mel_bins = 20;
  int enc_width = 48;
  int enc_layers = 2;
  int dec_width = 48;
  int emb_width = 16;
  int enc_left = 3;
  int enc_right = 3;
  int chunk_frames = 16;                 // student only
  std::vector<std::string> target_ids;  // speaker table vocabulary, ordered

  void validate() const;
  Json to_json() const;
  static AcousticConfig from_json(const Json& j);
};

class AcousticModel {
 public:
  AcousticModel(const AcousticConfig& cfg, uint64_t init_seed);
  explicit AcousticModel(const ModelBundle& bundle);

  const AcousticConfig& config() const { return cfg_; }
  ModelBundle to_bundle() const;
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  int target_index(const std::string& target_id) const;

  // Free-running inference: IBF features in, mel out, same frame count.
  Tensor forward(const recognizer::IBF& ibf, const std::string& target_id) const;

  // Incremental per-chunk inference for the student pipeline.
  class StreamState {
   public:
    StreamState(const AcousticModel& owner, const std::string& target_id);
    Tensor push_chunk(const Tensor& ibf_chunk);  // [chunk, ibf_width] -> [chunk, mel]
    void reset();

   private:
    const AcousticModel& owner_;
    int target_idx_;
    int frames_seen_ = 0;
    std::vector<Tensor> tails_;
    std::vector<float> hidden_;
    std::vector<float> prev_mel_;
    friend class AcousticModel;
  };

 private:
  Tensor encode(const Tensor& ibf_feats, int target_idx) const;
  Tensor decode_free_running(const Tensor& enc) const;

  AcousticConfig cfg_;
  ParamStore params_;

  friend class StreamState;
};

// One reconstruction training item: a target-speaker utterance paired with
// itself (X_src == X_tgt).
struct ReconItem {
  Tensor ibf;         // precomputed, frozen-recognizer features [T, ibf_width]
  Tensor mel;         // [T, mel_bins] target
  std::string speaker_id;
};

std::vector<ReconItem> make_recon_items(const corpus::CorpusManifest& m, const std::string& split,
                                        const recognizer::Recognizer& rec, int k);

struct ReconTrainConfig {
  int steps = 2200;
  int crop_frames = 160;
  float lr = 1.5e-3f;
  bool use_lsgan = true;
  float lambda_adv = 0.1f;
  float disc_lr = 1.5e-3f;
  uint64_t seed = 0;
};

struct AmTrainStats {
  std::vector<float> losses;        // L1 part only, per step
  double heldout_l1 = -1.0;         // raw log-mel units, teacher-forced
  bool disc_collapse_warning = false;
};

// Self-reconstruction training (same-speaker pairs only, asserted). With
// use_lsgan a 3-layer conv discriminator trains against least-squares
// labels (real = 1, fake = 0) and the generator adds lambda_adv times its
// LS term.
AcousticModel train_reconstruction(const AcousticConfig& cfg, const std::vector<ReconItem>& train,
                                   const std::vector<ReconItem>& heldout,
                                   const ReconTrainConfig& tcfg, AmTrainStats* stats = nullptr);

// Teacher-generated parallel pair: source utterance -> teacher mel in the
// target speaker's timbre.
struct ParallelItem {
  std::string src_utt_id;
  std::string src_speaker_id;
  std::string target_id;
  Tensor teacher_mel;  // [T, mel_bins]
};

struct ParallelSet {
  std::vector<ParallelItem> items;
  std::string teacher_arch_hash;
  std::string recognizer_arch_hash;

  void save(const std::filesystem::path& dir) const;
  static ParallelSet load(const std::filesystem::path& dir);
};

// Converts every utterance of `split` to every target id through the
// teacher (many-to-one). Deterministic given the bundles.
ParallelSet generate_parallel(const AcousticModel& teacher,
                              const recognizer::Recognizer& nonstream_rec,
                              const corpus::CorpusManifest& m, const std::string& split,
                              const std::vector<std::string>& targets);

struct TgTrainConfig {
  int steps = 2200;
  int crop_frames = 160;
  float lr = 1.5e-3f;
  uint64_t seed = 0;
};

// Teacher-guidance items carry the frozen streaming-recognizer features of
// the source next to the teacher's output mel.
struct TgItem {
  Tensor ibf;         // [T, ibf_width] from the streaming recognizer
  Tensor teacher_mel; // [T, mel_bins]
  std::string target_id;
  std::string src_speaker_id;
};

std::vector<TgItem> make_tg_items(const corpus::CorpusManifest& m, const ParallelSet& parallel,
                                  const recognizer::Recognizer& stream_rec, int k);

// L1 between the student's teacher-forced output and the teacher mel;
// cross-speaker pairs only (asserted). Gradients reach only the student.
AcousticModel train_student_tg(const AcousticConfig& cfg, const std::vector<TgItem>& train,
                               const std::vector<TgItem>& heldout, const TgTrainConfig& tcfg,
                               AmTrainStats* stats = nullptr);

}  // namespace svc::acoustic
