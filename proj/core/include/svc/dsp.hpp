#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "svc/tensor.hpp"

namespace svc::dsp {

// Desk-scale audio configuration. The repo runs at 8 kHz / 20 mel bins;
// every claim tested against it is scale-free.
struct AudioConfig {
  int sample_rate = 8000;
  int win_ms = 25;
  int hop_ms = 10;
  int fft_size = 256;
  int mel_bins = 20;
  float fmin = 0.0f;
  float fmax = 4000.0f;
  float log_floor = 1e-5f;  // keeps dynamic range ~100 dB, avoids -inf

  int win_samples() const { return sample_rate * win_ms / 1000; }
  int hop_samples() const { return sample_rate * hop_ms / 1000; }

  // Zero-padding prepended by the streaming pipeline so that chunk
  // completion never waits on the analysis-window tail. Rounded up to a
  // whole number of hops; the resulting output lag in frames is
  // stream_shift_frames().
  int stream_prepad_samples() const {
    const int tail = win_samples() - hop_samples();
    const int hop = hop_samples();
    return (tail + hop - 1) / hop * hop;
  }
  int stream_shift_frames() const { return stream_prepad_samples() / hop_samples(); }

  int frame_count(int64_t samples) const {
    return samples < win_samples()
               ? 0
               : static_cast<int>((samples - win_samples()) / hop_samples()) + 1;
  }
};

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 8000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  // Soft-clip guard: synthesis and vocoding keep |sample| well under this.
  void validate() const;
};

struct MelSpectrogram {
  Tensor values;  // [frames, mel_bins], log-mel
  int hop_ms = 10;
  int win_ms = 25;
  int mel_bins = 20;

  int frames() const { return values.rows(); }
};

struct ComplexSpectrogram {
  Tensor re, im;  // [frames, fft/2+1]
  int frames() const { return re.rows(); }
  int bins() const { return re.cols(); }
};

// Periodic Hann window.
std::vector<float> hann_window(int n);

// In-place iterative radix-2 FFT; n must be a power of two.
void fft_inplace(std::vector<std::complex<float>>& buf);

// Hann-windowed STFT, no centering: frame t covers samples [t*hop, t*hop+win).
ComplexSpectrogram stft(const Waveform& w, int win, int hop, int fft_size);

// Triangular, unit-peak mel filterbank rows covering [fmin, fmax]: [mel_bins, fft/2+1].
Tensor mel_filterbank(const AudioConfig& cfg);

// Peak frequency of each mel filter, in Hz.
std::vector<double> mel_band_centers_hz(const AudioConfig& cfg);

// Stateless per-frame mel computation shared by the offline extractor and
// the streaming runtime, so both produce byte-identical frames.
class MelExtractor {
 public:
  explicit MelExtractor(const AudioConfig& cfg);
  const AudioConfig& config() const { return cfg_; }
  // `frame` must point at win_samples() samples.
  void compute_frame(const float* frame, float* mel_out) const;
  std::vector<float> compute_frame(const float* frame) const;

 private:
  AudioConfig cfg_;
  std::vector<float> window_;
  Tensor filterbank_;
};

// log(mel_filterbank * |STFT| + log_floor) over all frames.
MelSpectrogram mel_features(const Waveform& w, const AudioConfig& cfg);

struct F0Track {
  std::vector<float> f0;       // Hz; 0 where unvoiced
  std::vector<uint8_t> voiced;
  int hop_ms = 10;
};

// Normalized-autocorrelation pitch tracker. Frames with peak periodicity
// below 0.3 are flagged unvoiced.
F0Track estimate_f0(const Waveform& w, float fmin, float fmax, int hop_ms = 10);

// Resolutions used by both the metric below and the vocoder training loss.
struct StftResolution {
  int fft_size, win, hop;
};
const std::vector<StftResolution>& multires_resolutions();

// Sum over resolutions of (mean |log|A|+eps - log|B|+eps|) plus the
// spectral convergence term ||A|-|B||_F / ||A||_F, A being the reference.
// The log-L1 part is symmetric in (a, b); the convergence term is not.
struct SpectralLossParts {
  double log_l1 = 0.0;
  double convergence = 0.0;
  double total() const { return log_l1 + convergence; }
};
SpectralLossParts multires_stft_loss_parts(const Waveform& a, const Waveform& b);
double multires_stft_loss(const Waveform& a, const Waveform& b);

// Pearson correlation; NaN-free, returns 0 for degenerate (constant) input.
double pearson(const std::vector<float>& a, const std::vector<float>& b);

// 16-bit PCM mono WAV.
void write_wav(const std::filesystem::path& path, const Waveform& w);
Waveform read_wav(const std::filesystem::path& path);

}  // namespace svc::dsp
