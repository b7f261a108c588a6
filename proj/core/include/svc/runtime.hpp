#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svc/acoustic.hpp"
#include "svc/dsp.hpp"
#include "svc/recognizer.hpp"
#include "svc/vocoder.hpp"

namespace svc::runtime {

// The streaming pipeline prepends stream_prepad_samples() of silence so a
// chunk completes exactly when its last frame's hop lands, keeping the
// per-sample algorithmic latency at chunk + lookahead exactly. The cost is
// that output lags input by stream_shift_frames() frames; conversions carry
// that shift in their metadata and the eval module compensates.
struct PipelineConfig {
  dsp::AudioConfig audio;
  std::string target_id;
  bool pipelined = false;  // three stage workers connected by bounded queues

  int chunk_frames(const recognizer::Recognizer& rec) const { return rec.config().chunk_frames; }
};

struct LatencyReport {
  double algorithmic_ms = 0.0;    // chunk_ms + vocoder_lookahead_ms
  double first_output_ms = -1.0;  // input time consumed at first emit + compute
  double rtf = -1.0;              // processing time / audio time
  int shift_frames = 0;           // output lag behind input, in frames
  double audio_seconds = 0.0;
  double processing_seconds = 0.0;
  Json machine;

  Json to_json() const;
  void save(const std::filesystem::path& path) const;
};

Json machine_metadata();

// One conversion stream. Exclusively owned by one caller; the model
// bundles it references are immutable and may be shared across sessions.
class StreamSession {
 public:
  StreamSession(const recognizer::Recognizer& rec, const acoustic::AcousticModel& am,
                const vocoder::Vocoder& voc, const PipelineConfig& cfg);
  ~StreamSession();
  StreamSession(StreamSession&&) noexcept;

  // Feeds samples; returns whatever output the pacing gate releases.
  // Output block t is released once (t * hop + chunk + lookahead) input
  // samples have been consumed, never earlier.
  std::vector<float> push(std::span<const float> samples);

  // End of stream: zero-pads the final partial chunk and drains everything.
  std::vector<float> flush();

  // Restores a state indistinguishable from fresh construction.
  void reset();

  int64_t samples_consumed() const;
  int64_t samples_emitted() const;
  double algorithmic_latency_ms() const;
  // Input samples consumed when the first output block was released.
  int64_t consumed_at_first_output() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Chunk-buffered delay line with the same pacing gate but no models:
// the baseline for real-time-factor comparisons.
class PassthroughSession {
 public:
  PassthroughSession(const dsp::AudioConfig& audio, int chunk_frames);
  std::vector<float> push(std::span<const float> samples);
  std::vector<float> flush();

 private:
  dsp::AudioConfig audio_;
  int chunk_frames_;
  std::vector<float> buf_;
  int64_t consumed_ = 0;
  int64_t emitted_ = 0;
  void drain(std::vector<float>& out, bool at_end);
};

enum class ConvertMode { teacher, student };

struct ConvertResult {
  dsp::Waveform wave;
  int shift_frames = 0;  // output lag behind the input, in frames
};

// One-shot conversion through the same arithmetic as the streamed path:
// student mode output equals the streamed output bit-for-bit.
ConvertResult convert_offline(const recognizer::Recognizer& rec,
                              const acoustic::AcousticModel& am, const vocoder::Vocoder& voc,
                              const dsp::Waveform& input, const std::string& target_id,
                              ConvertMode mode);

// Runs the streamed pipeline over a set of inputs, single-threaded, and
// reports wall-clock RTF plus latency accounting.
LatencyReport measure_rtf(const recognizer::Recognizer& rec, const acoustic::AcousticModel& am,
                          const vocoder::Vocoder& voc, const PipelineConfig& cfg,
                          const std::vector<dsp::Waveform>& inputs);

}  // namespace svc::runtime
