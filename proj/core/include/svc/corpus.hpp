#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "svc/dsp.hpp"
#include "svc/params.hpp"
#include "svc/random.hpp"

namespace svc::corpus {

// 12 pseudo-phonemes: 9 voiced formant pairs, 2 audible noise phonemes,
// and one silent pause (id 11). Every frame of every utterance carries one
// of these labels.
constexpr int kNumPhonemes = 12;
constexpr int kPauseId = 11;

struct PhonemeTemplate {
  bool voiced = true;
  float f1 = 500.0f, bw1 = 90.0f, g1 = 8.0f;   // formant peaks (Hz)
  float f2 = 1500.0f, bw2 = 140.0f, g2 = 5.0f;
  float gain = 1.0f;  // 0 for the silent pause
  // Spectral envelope at frequency f, ignoring the speaker.
  float envelope_at(float f) const;
};

const std::vector<PhonemeTemplate>& phoneme_inventory();

// Parametric timbre: a strictly positive per-mel-band gain curve plus the
// pitch habits of the speaker.
struct SpeakerSpec {
  std::string id;
  std::vector<float> envelope;  // one gain per mel band
  float f0_base = 180.0f;       // Hz, in [80, 300]
  float f0_range = 30.0f;
  float jitter = 0.02f;

  void validate() const;
  // Linear interpolation of the band gains onto an arbitrary frequency.
  float envelope_at(float hz, const dsp::AudioConfig& cfg) const;
};

double envelope_cosine(const SpeakerSpec& a, const SpeakerSpec& b);

// Pool of mutually distinct speakers: any pair has envelope cosine < 0.95,
// resampling collisions. Throws after 100 failed retries.
std::vector<SpeakerSpec> make_speakers(int n, uint64_t seed, const dsp::AudioConfig& cfg);

struct Content {
  std::vector<int> phonemes;   // ids into the inventory
  std::vector<int> durations;  // frames, each >= 3
  int total_frames() const;
};

// Random content whose total length (including lead/tail pauses) lands in
// [min_frames, max_frames].
Content sample_content(Rng& rng, int min_frames, int max_frames);

struct Utterance {
  std::string id;
  std::string speaker_id;
  std::vector<int> phoneme_frames;  // per frame
  std::vector<float> f0_frames;     // per frame, latent value incl. jitter
  dsp::Waveform wave;
  dsp::MelSpectrogram mel;

  int frames() const { return static_cast<int>(phoneme_frames.size()); }
  bool frame_voiced(int t) const {
    return phoneme_inventory()[static_cast<size_t>(phoneme_frames[static_cast<size_t>(t)])].voiced;
  }
  void validate() const;
};

// Source-filter synthesis: harmonic stack at the latent F0 for voiced
// phonemes, spectrally shaped noise for unvoiced ones, both filtered by
// phoneme template x speaker envelope. Samples are quantized to the 16-bit
// grid so in-memory and reloaded-from-WAV data are bit-identical.
Utterance synthesize_utterance(const Content& content, const SpeakerSpec& spk, uint64_t seed,
                               const dsp::AudioConfig& cfg);

// Time-averaged log-mel minus the per-frame phoneme template expectation:
// an estimate of the speaker's log envelope, comparable across contents.
std::vector<float> speaker_envelope_estimate(const Utterance& u, const dsp::AudioConfig& cfg);

// Expected log-mel signature of each phoneme (excitation assumed flat).
const Tensor& phoneme_mel_signatures(const dsp::AudioConfig& cfg);

struct CorpusConfig {
  dsp::AudioConfig audio;
  int pool_speakers = 8;
  int target_speakers = 2;
  int pool_utterances = 120;    // per pool speaker
  int target_utterances = 60;   // per target speaker
  float min_seconds = 2.0f;
  float max_seconds = 4.0f;

  // Per-speaker split sizes. Pool: recognizer training/validation, teacher
  // parallel sources, the held-out judge and speaker-encoder sets, and
  // conversion-evaluation sources. Targets: acoustic-model fine-tuning,
  // centroid estimation, speaker-encoder training, and validation.
  int pool_asr_train = 50, pool_asr_val = 10, pool_parallel_src = 30, pool_judge_train = 20,
      pool_spkenc_train = 5, pool_eval_src = 5;
  int tgt_finetune = 28, tgt_centroid = 20, tgt_spkenc_train = 8, tgt_val = 4;

  void validate() const;
};

struct UttRecord {
  std::string id;
  std::string speaker_id;
  std::string split;
  int frames = 0;
  std::string wav_path;      // relative to the corpus root
  std::string latents_path;  // relative to the corpus root
};

struct CorpusManifest {
  CorpusConfig cfg;
  uint64_t seed = 0;
  std::vector<SpeakerSpec> speakers;      // pool first, then targets
  std::vector<std::string> target_ids;
  std::map<std::string, std::vector<UttRecord>> splits;
  std::filesystem::path root;  // set on load/build; not serialized

  const SpeakerSpec& speaker(const std::string& id) const;
  int speaker_index(const std::string& id) const;
  bool is_target(const std::string& id) const;
  std::vector<const UttRecord*> split(const std::string& name) const;

  void save(const std::filesystem::path& file) const;
  static CorpusManifest load(const std::filesystem::path& file);
};

// Generates and persists the whole corpus; bit-identical for a fixed seed.
CorpusManifest build_corpus(const CorpusConfig& cfg, uint64_t seed,
                            const std::filesystem::path& out_dir);

// Reads WAV + latent sidecar back into an Utterance (mel recomputed from
// the quantized waveform, hence identical to what was synthesized).
Utterance load_utterance(const CorpusManifest& manifest, const UttRecord& rec);

}  // namespace svc::corpus
