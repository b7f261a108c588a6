#include "svc/dsp.hpp"

#include <algorithm>
#include <cmath>

#include "svc/common.hpp"

namespace svc::dsp {

namespace {
constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }
}  // namespace

void Waveform::validate() const {
  require(sample_rate > 0, "bad_waveform", "sample_rate must be positive");
  for (float s : samples) {
    if (!std::isfinite(s) || std::abs(s) > 4.0f)
      fail("bad_waveform", "sample outside [-4, 4] or non-finite");
  }
}

std::vector<float> hann_window(int n) {
  std::vector<float> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * kPi * i / n));
  return w;
}

void fft_inplace(std::vector<std::complex<float>>& buf) {
  const size_t n = buf.size();
  require(is_pow2(static_cast<int>(n)), "bad_fft_size", "FFT size must be a power of two");
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u(buf[i + j]);
        const std::complex<double> v = std::complex<double>(buf[i + j + len / 2]) * w;
        buf[i + j] = std::complex<float>(u + v);
        buf[i + j + len / 2] = std::complex<float>(u - v);
        w *= wl;
      }
    }
  }
}

ComplexSpectrogram stft(const Waveform& w, int win, int hop, int fft_size) {
  require(win <= fft_size, "bad_stft_config", "window exceeds FFT size");
  require(static_cast<int>(w.samples.size()) >= win, "signal_too_short",
          "window longer than signal");
  const int frames = static_cast<int>((w.samples.size() - static_cast<size_t>(win)) / hop) + 1;
  const int bins = fft_size / 2 + 1;
  ComplexSpectrogram out;
  out.re = Tensor({frames, bins});
  out.im = Tensor({frames, bins});
  const std::vector<float> window = hann_window(win);
  std::vector<std::complex<float>> buf(static_cast<size_t>(fft_size));
  for (int f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), std::complex<float>(0.0f, 0.0f));
    const float* src = w.samples.data() + static_cast<size_t>(f) * hop;
    for (int i = 0; i < win; ++i) buf[static_cast<size_t>(i)] = src[i] * window[static_cast<size_t>(i)];
    fft_inplace(buf);
    float* rr = out.re.row(f);
    float* ir = out.im.row(f);
    for (int k = 0; k < bins; ++k) {
      rr[k] = buf[static_cast<size_t>(k)].real();
      ir[k] = buf[static_cast<size_t>(k)].imag();
    }
  }
  return out;
}

Tensor mel_filterbank(const AudioConfig& cfg) {
  const int bins = cfg.fft_size / 2 + 1;
  Tensor fb({cfg.mel_bins, bins});
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> centers(static_cast<size_t>(cfg.mel_bins) + 2);
  for (int m = 0; m < cfg.mel_bins + 2; ++m)
    centers[static_cast<size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.mel_bins + 1));
  const double hz_per_bin = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
  for (int m = 0; m < cfg.mel_bins; ++m) {
    const double lo = centers[static_cast<size_t>(m)];
    const double mid = centers[static_cast<size_t>(m) + 1];
    const double hi = centers[static_cast<size_t>(m) + 2];
    float* row = fb.row(m);
    for (int k = 0; k < bins; ++k) {
      const double f = k * hz_per_bin;
      double v = 0.0;
      if (f > lo && f < mid) v = (f - lo) / (mid - lo);
      else if (f == mid) v = 1.0;
      else if (f > mid && f < hi) v = (hi - f) / (hi - mid);
      row[k] = static_cast<float>(v);
    }
  }
  return fb;
}

std::vector<double> mel_band_centers_hz(const AudioConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> centers(static_cast<size_t>(cfg.mel_bins));
  for (int m = 0; m < cfg.mel_bins; ++m)
    centers[static_cast<size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.mel_bins + 1));
  return centers;
}

MelExtractor::MelExtractor(const AudioConfig& cfg)
    : cfg_(cfg), window_(hann_window(cfg.win_samples())), filterbank_(mel_filterbank(cfg)) {
  require(cfg.win_samples() <= cfg.fft_size, "bad_config", "mel window exceeds FFT size");
  require(cfg.mel_bins > 0 && cfg.fmin < cfg.fmax, "bad_config", "invalid mel config");
  require(cfg.fmax <= cfg.sample_rate / 2.0f + 1e-6f, "bad_config", "fmax above Nyquist");
}

void MelExtractor::compute_frame(const float* frame, float* mel_out) const {
  const int fft_size = cfg_.fft_size;
  const int bins = fft_size / 2 + 1;
  const int win = cfg_.win_samples();
  std::vector<std::complex<float>> buf(static_cast<size_t>(fft_size), {0.0f, 0.0f});
  for (int i = 0; i < win; ++i) buf[static_cast<size_t>(i)] = frame[i] * window_[static_cast<size_t>(i)];
  fft_inplace(buf);
  for (int m = 0; m < cfg_.mel_bins; ++m) {
    const float* fr = filterbank_.row(m);
    double acc = 0.0;
    for (int k = 0; k < bins; ++k) {
      if (fr[k] == 0.0f) continue;
      acc += fr[k] * std::sqrt(double(buf[static_cast<size_t>(k)].real()) * buf[static_cast<size_t>(k)].real() +
                               double(buf[static_cast<size_t>(k)].imag()) * buf[static_cast<size_t>(k)].imag());
    }
    mel_out[m] = static_cast<float>(std::log(acc + cfg_.log_floor));
  }
}

std::vector<float> MelExtractor::compute_frame(const float* frame) const {
  std::vector<float> out(static_cast<size_t>(cfg_.mel_bins));
  compute_frame(frame, out.data());
  return out;
}

MelSpectrogram mel_features(const Waveform& w, const AudioConfig& cfg) {
  require(w.sample_rate == cfg.sample_rate, "rate_mismatch",
          "waveform sample rate does not match config");
  const int frames = cfg.frame_count(static_cast<int64_t>(w.samples.size()));
  require(frames > 0, "signal_too_short", "signal shorter than one analysis window");
  MelExtractor ex(cfg);
  MelSpectrogram mel;
  mel.values = Tensor({frames, cfg.mel_bins});
  mel.hop_ms = cfg.hop_ms;
  mel.win_ms = cfg.win_ms;
  mel.mel_bins = cfg.mel_bins;
  for (int f = 0; f < frames; ++f)
    ex.compute_frame(w.samples.data() + static_cast<size_t>(f) * cfg.hop_samples(),
                     mel.values.row(f));
  check_finite(mel.values, "mel_features");
  return mel;
}

F0Track estimate_f0(const Waveform& w, float fmin, float fmax, int hop_ms) {
  require(fmin > 0 && fmin < fmax, "bad_f0_range", "need 0 < fmin < fmax");
  require(fmax < w.sample_rate / 2.0f, "bad_f0_range", "fmax must be below Nyquist");
  const int sr = w.sample_rate;
  const int win = sr * 40 / 1000;  // 40 ms: >= 2 periods at fmin >= 50 Hz
  const int hop = sr * hop_ms / 1000;
  F0Track track;
  track.hop_ms = hop_ms;
  if (static_cast<int>(w.samples.size()) < win) return track;
  const int frames = static_cast<int>((w.samples.size() - static_cast<size_t>(win)) / hop) + 1;
  const int lag_min = std::max(2, static_cast<int>(sr / fmax));
  const int lag_max = std::min(win - 2, static_cast<int>(std::ceil(sr / fmin)));
  std::vector<double> x(static_cast<size_t>(win));
  std::vector<double> nccf(static_cast<size_t>(lag_max) + 1, 0.0);
  for (int f = 0; f < frames; ++f) {
    const float* src = w.samples.data() + static_cast<size_t>(f) * hop;
    double mean = 0.0;
    for (int i = 0; i < win; ++i) mean += src[i];
    mean /= win;
    for (int i = 0; i < win; ++i) x[static_cast<size_t>(i)] = src[i] - mean;
    double e_all = 0.0;
    for (int i = 0; i < win; ++i) e_all += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
    if (e_all < 1e-8) {  // silence
      track.f0.push_back(0.0f);
      track.voiced.push_back(0);
      continue;
    }
    // normalized cross-correlation per lag
    double best = 0.0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      double num = 0.0, e0 = 0.0, e1 = 0.0;
      const int n = win - lag;
      for (int i = 0; i < n; ++i) {
        num += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i) + lag];
        e0 += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
        e1 += x[static_cast<size_t>(i) + lag] * x[static_cast<size_t>(i) + lag];
      }
      const double denom = std::sqrt(e0 * e1) + 1e-12;
      nccf[static_cast<size_t>(lag)] = num / denom;
      best = std::max(best, nccf[static_cast<size_t>(lag)]);
    }
    if (best < 0.3) {
      track.f0.push_back(0.0f);
      track.voiced.push_back(0);
      continue;
    }
    // smallest local peak within 10% of the global max avoids octave errors
    int chosen = -1;
    for (int lag = lag_min + 1; lag < lag_max; ++lag) {
      const double v = nccf[static_cast<size_t>(lag)];
      if (v >= 0.9 * best && v >= nccf[static_cast<size_t>(lag) - 1] &&
          v >= nccf[static_cast<size_t>(lag) + 1]) {
        chosen = lag;
        break;
      }
    }
    if (chosen < 0) {
      track.f0.push_back(0.0f);
      track.voiced.push_back(0);
      continue;
    }
    // parabolic interpolation for sub-sample lag
    const double y0 = nccf[static_cast<size_t>(chosen) - 1];
    const double y1 = nccf[static_cast<size_t>(chosen)];
    const double y2 = nccf[static_cast<size_t>(chosen) + 1];
    const double denom = y0 - 2.0 * y1 + y2;
    double delta = 0.0;
    if (std::abs(denom) > 1e-12) delta = std::clamp(0.5 * (y0 - y2) / denom, -0.5, 0.5);
    const double lag_i = chosen + delta;
    track.f0.push_back(static_cast<float>(sr / lag_i));
    track.voiced.push_back(1);
  }
  return track;
}

const std::vector<StftResolution>& multires_resolutions() {
  static const std::vector<StftResolution> r = {{128, 80, 20}, {256, 160, 40}, {512, 320, 80}};
  return r;
}

SpectralLossParts multires_stft_loss_parts(const Waveform& a, const Waveform& b) {
  require(a.samples.size() == b.samples.size(), "length_mismatch",
          "multires_stft_loss: signals have different lengths");
  constexpr double kLogEps = 1e-5;
  SpectralLossParts parts;
  for (const auto& res : multires_resolutions()) {
    const ComplexSpectrogram sa = stft(a, res.win, res.hop, res.fft_size);
    const ComplexSpectrogram sb = stft(b, res.win, res.hop, res.fft_size);
    double l1 = 0.0, sc_num = 0.0, sc_den = 0.0;
    const int64_t n = sa.re.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double ma = std::sqrt(double(sa.re.data[static_cast<size_t>(i)]) * sa.re.data[static_cast<size_t>(i)] +
                                  double(sa.im.data[static_cast<size_t>(i)]) * sa.im.data[static_cast<size_t>(i)]);
      const double mb = std::sqrt(double(sb.re.data[static_cast<size_t>(i)]) * sb.re.data[static_cast<size_t>(i)] +
                                  double(sb.im.data[static_cast<size_t>(i)]) * sb.im.data[static_cast<size_t>(i)]);
      l1 += std::abs(std::log(ma + kLogEps) - std::log(mb + kLogEps));
      sc_num += (ma - mb) * (ma - mb);
      sc_den += ma * ma;
    }
    parts.log_l1 += l1 / static_cast<double>(n);
    parts.convergence += std::sqrt(sc_num) / (std::sqrt(sc_den) + 1e-9);
  }
  return parts;
}

double multires_stft_loss(const Waveform& a, const Waveform& b) {
  return multires_stft_loss_parts(a, b).total();
}

double pearson(const std::vector<float>& a, const std::vector<float>& b) {
  require(a.size() == b.size(), "length_mismatch", "pearson: length mismatch");
  const size_t n = a.size();
  if (n < 2) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double num = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    num += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 1e-12 || vb <= 1e-12) return 0.0;
  return num / std::sqrt(va * vb);
}

}  // namespace svc::dsp
