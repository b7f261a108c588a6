#include "svc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>

#include "svc/common.hpp"
#include "svc/hash.hpp"

namespace svc::corpus {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr int kEdgePauseFrames = 15;
}  // namespace

float PhonemeTemplate::envelope_at(float f) const {
  if (gain == 0.0f) return 0.0f;
  const float d1 = (f - f1) / bw1;
  const float d2 = (f - f2) / bw2;
  // gentle lowpass tilt keeps energy speech-like and tapers toward Nyquist
  const float tilt = 1.0f / (1.0f + (f / 2600.0f) * (f / 2600.0f));
  return gain * tilt * (0.15f + g1 * std::exp(-0.5f * d1 * d1) + g2 * std::exp(-0.5f * d2 * d2));
}

const std::vector<PhonemeTemplate>& phoneme_inventory() {
  static const std::vector<PhonemeTemplate> inv = [] {
    std::vector<PhonemeTemplate> v(kNumPhonemes);
    // 9 voiced: distinct (F1, F2) pairs roughly spanning a vowel space
    const float f1s[9] = {300, 360, 430, 500, 580, 660, 750, 850, 950};
    const float f2s[9] = {2300, 1150, 1900, 950, 1500, 2100, 1250, 1700, 2500};
    for (int i = 0; i < 9; ++i) {
      v[static_cast<size_t>(i)].voiced = true;
      v[static_cast<size_t>(i)].f1 = f1s[i];
      v[static_cast<size_t>(i)].f2 = f2s[i];
      v[static_cast<size_t>(i)].bw1 = 80.0f + 6.0f * static_cast<float>(i);
      v[static_cast<size_t>(i)].bw2 = 130.0f + 10.0f * static_cast<float>(i);
      v[static_cast<size_t>(i)].g1 = 8.0f;
      v[static_cast<size_t>(i)].g2 = 4.5f;
    }
    // 2 audible noise phonemes: a high fricative and a broad mid one
    v[9].voiced = false;
    v[9].f1 = 2900.0f; v[9].bw1 = 500.0f; v[9].g1 = 9.0f;
    v[9].f2 = 3500.0f; v[9].bw2 = 400.0f; v[9].g2 = 5.0f;
    v[10].voiced = false;
    v[10].f1 = 1500.0f; v[10].bw1 = 700.0f; v[10].g1 = 6.0f;
    v[10].f2 = 600.0f;  v[10].bw2 = 350.0f; v[10].g2 = 3.0f;
    // silent pause
    v[kPauseId].voiced = false;
    v[kPauseId].gain = 0.0f;
    return v;
  }();
  return inv;
}

void SpeakerSpec::validate() const {
  require(!envelope.empty(), "bad_speaker", "empty envelope");
  for (float g : envelope) require(g > 0.0f, "bad_speaker", "envelope must be strictly positive");
  require(f0_base >= 80.0f && f0_base <= 300.0f, "bad_speaker", "f0_base outside [80, 300]");
}

float SpeakerSpec::envelope_at(float hz, const dsp::AudioConfig& cfg) const {
  static thread_local std::vector<double> centers;
  static thread_local int cached_bins = -1;
  if (cached_bins != cfg.mel_bins) {
    centers = dsp::mel_band_centers_hz(cfg);
    cached_bins = cfg.mel_bins;
  }
  const int n = static_cast<int>(envelope.size());
  if (hz <= centers.front()) return envelope.front();
  if (hz >= centers.back()) return envelope.back();
  int b = 0;
  while (b + 1 < n && centers[static_cast<size_t>(b) + 1] < hz) ++b;
  const double a = (hz - centers[static_cast<size_t>(b)]) /
                   (centers[static_cast<size_t>(b) + 1] - centers[static_cast<size_t>(b)]);
  return static_cast<float>((1.0 - a) * envelope[static_cast<size_t>(b)] +
                            a * envelope[static_cast<size_t>(b) + 1]);
}

double envelope_cosine(const SpeakerSpec& a, const SpeakerSpec& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.envelope.size(); ++i) {
    dot += double(a.envelope[i]) * b.envelope[i];
    na += double(a.envelope[i]) * a.envelope[i];
    nb += double(b.envelope[i]) * b.envelope[i];
  }
  return dot / (std::sqrt(na * nb) + 1e-12);
}

namespace {

SpeakerSpec draw_speaker(Rng& rng, int mel_bins) {
  SpeakerSpec s;
  // smooth random log-gain curve from a handful of control points
  const int knots = 5;
  std::vector<double> ctrl(knots);
  for (auto& c : ctrl) c = rng.normal() * 0.8;
  s.envelope.resize(static_cast<size_t>(mel_bins));
  for (int b = 0; b < mel_bins; ++b) {
    const double pos = static_cast<double>(b) / (mel_bins - 1) * (knots - 1);
    const int k = std::min(static_cast<int>(pos), knots - 2);
    const double frac = pos - k;
    const double w = 0.5 - 0.5 * std::cos(kPi * frac);  // raised-cosine blend
    const double lg = (1.0 - w) * ctrl[static_cast<size_t>(k)] + w * ctrl[static_cast<size_t>(k) + 1];
    s.envelope[static_cast<size_t>(b)] = static_cast<float>(std::clamp(std::exp(lg), 0.25, 4.0));
  }
  s.f0_base = static_cast<float>(rng.uniform(120.0, 260.0));
  s.f0_range = static_cast<float>(rng.uniform(20.0, 45.0));
  s.jitter = static_cast<float>(rng.uniform(0.005, 0.025));
  return s;
}

}  // namespace

std::vector<SpeakerSpec> make_speakers(int n, uint64_t seed, const dsp::AudioConfig& cfg) {
  require(n >= 2, "bad_config", "make_speakers: need at least 2 speakers");
  Rng rng = Rng(seed).derive("speakers");
  std::vector<SpeakerSpec> out;
  int retries = 0;
  while (static_cast<int>(out.size()) < n) {
    SpeakerSpec cand = draw_speaker(rng, cfg.mel_bins);
    bool ok = true;
    for (const auto& prev : out)
      if (envelope_cosine(prev, cand) >= 0.95) ok = false;
    if (ok) {
      cand.id = "spk" + std::to_string(out.size());
      cand.validate();
      out.push_back(std::move(cand));
    } else if (++retries > 100) {
      fail("speaker_separation", "could not satisfy envelope separation after 100 retries");
    }
  }
  return out;
}

int Content::total_frames() const {
  int n = 0;
  for (int d : durations) n += d;
  return n;
}

Content sample_content(Rng& rng, int min_frames, int max_frames) {
  Content c;
  const int target = static_cast<int>(rng.randint(min_frames, max_frames));
  c.phonemes.push_back(kPauseId);
  c.durations.push_back(kEdgePauseFrames);
  int total = kEdgePauseFrames;
  while (total < target - kEdgePauseFrames) {
    const int ph = static_cast<int>(rng.randint(0, 10));
    const int dur = static_cast<int>(rng.randint(5, 14));
    c.phonemes.push_back(ph);
    c.durations.push_back(dur);
    total += dur;
    if (rng.uniform() < 0.12) {  // occasional mid-utterance pause
      const int pdur = static_cast<int>(rng.randint(4, 8));
      c.phonemes.push_back(kPauseId);
      c.durations.push_back(pdur);
      total += pdur;
    }
  }
  c.phonemes.push_back(kPauseId);
  c.durations.push_back(kEdgePauseFrames);
  return c;
}

void Utterance::validate() const {
  const size_t n = phoneme_frames.size();
  require(f0_frames.size() == n, "bad_utterance", "latent frame counts differ");
  require(mel.values.rows() == static_cast<int>(n), "bad_utterance",
          "mel frames do not match latent frames");
  for (int p : phoneme_frames)
    require(p >= 0 && p < kNumPhonemes, "bad_utterance", "phoneme id out of range");
}

Utterance synthesize_utterance(const Content& content, const SpeakerSpec& spk, uint64_t seed,
                               const dsp::AudioConfig& cfg) {
  require(!content.phonemes.empty(), "empty_content", "synthesize_utterance: empty content");
  for (int d : content.durations)
    require(d >= 3, "bad_content", "phoneme durations must be >= 3 frames");
  spk.validate();

  // The prosody walk and excitation noise come from (content, seed) only, so
  // two renditions of the same content by different speakers share all
  // latent draws; the speaker maps the normalized walk into its own Hz range.
  Rng f0_rng = Rng(seed).derive("f0-walk");
  Rng noise_rng = Rng(seed).derive("noise");
  Rng phase_rng = Rng(seed).derive("phase");

  const int hop = cfg.hop_samples();
  const int frames = content.total_frames();
  const int tail_pad = cfg.win_samples() - hop;
  const int total_samples = frames * hop + tail_pad;

  Utterance u;
  u.speaker_id = spk.id;
  u.phoneme_frames.reserve(static_cast<size_t>(frames));
  for (size_t i = 0; i < content.phonemes.size(); ++i)
    for (int d = 0; d < content.durations[i]; ++d)
      u.phoneme_frames.push_back(content.phonemes[i]);

  u.f0_frames.resize(static_cast<size_t>(frames));
  double s = f0_rng.uniform(-0.5, 0.5);
  for (int t = 0; t < frames; ++t) {
    s = std::clamp(0.95 * s + 0.15 * f0_rng.normal(), -1.0, 1.0);
    const double f0 = (spk.f0_base + spk.f0_range * s) * (1.0 + spk.jitter * f0_rng.normal());
    u.f0_frames[static_cast<size_t>(t)] = static_cast<float>(f0);
  }

  u.wave.sample_rate = cfg.sample_rate;
  u.wave.samples.assign(static_cast<size_t>(total_samples), 0.0f);
  const auto& inventory = phoneme_inventory();

  // --- voiced: harmonic stack with continuous phase ------------------------
  const int max_harmonics = 48;
  std::vector<double> phase(max_harmonics);
  for (auto& p : phase) p = phase_rng.uniform(0.0, 2.0 * kPi);
  std::vector<float> amp_prev(max_harmonics, 0.0f), amp_cur(max_harmonics, 0.0f);

  auto harmonic_amps = [&](int t, std::vector<float>& out) {
    const auto& ph = inventory[static_cast<size_t>(u.phoneme_frames[static_cast<size_t>(t)])];
    std::fill(out.begin(), out.end(), 0.0f);
    if (!ph.voiced) return;
    const float f0 = u.f0_frames[static_cast<size_t>(t)];
    double energy = 0.0;
    const int hmax = std::min(max_harmonics, static_cast<int>(3700.0f / f0));
    for (int h = 1; h <= hmax; ++h) {
      const float f = f0 * static_cast<float>(h);
      const float a = ph.envelope_at(f) * spk.envelope_at(f, cfg) / std::sqrt(static_cast<float>(h));
      out[static_cast<size_t>(h - 1)] = a;
      energy += double(a) * a;
    }
    // constant per-frame loudness: timbre lives in the relative band shape
    const float norm = energy > 0 ? static_cast<float>(0.22 / std::sqrt(energy)) : 0.0f;
    for (int h = 0; h < hmax; ++h) out[static_cast<size_t>(h)] *= norm;
  };

  harmonic_amps(0, amp_prev);
  for (int t = 0; t < frames; ++t) {
    harmonic_amps(t, amp_cur);
    const double f0 = u.f0_frames[static_cast<size_t>(t)];
    const double dphi = 2.0 * kPi * f0 / cfg.sample_rate;
    float* dst = u.wave.samples.data() + static_cast<size_t>(t) * hop;
    for (int i = 0; i < hop; ++i) {
      const float mix = static_cast<float>(i) / static_cast<float>(hop);
      double acc = 0.0;
      for (int h = 0; h < max_harmonics; ++h) {
        const float a = amp_prev[static_cast<size_t>(h)] +
                        mix * (amp_cur[static_cast<size_t>(h)] - amp_prev[static_cast<size_t>(h)]);
        if (a == 0.0f) continue;
        acc += a * std::sin(phase[static_cast<size_t>(h)] + dphi * (h + 1) * i);
      }
      dst[i] += static_cast<float>(acc);
    }
    for (int h = 0; h < max_harmonics; ++h) {
      phase[static_cast<size_t>(h)] =
          std::fmod(phase[static_cast<size_t>(h)] + dphi * (h + 1) * hop, 2.0 * kPi);
    }
    std::swap(amp_prev, amp_cur);
  }

  // --- unvoiced: overlap-add spectrally shaped noise -----------------------
  const int nwin = 2 * hop;
  const int nfft = cfg.fft_size;
  const std::vector<float> ola_win = dsp::hann_window(nwin);
  std::vector<std::complex<float>> buf(static_cast<size_t>(nfft));
  const double hz_per_bin = static_cast<double>(cfg.sample_rate) / nfft;
  for (int t = 0; t < frames; ++t) {
    const auto& ph = inventory[static_cast<size_t>(u.phoneme_frames[static_cast<size_t>(t)])];
    if (ph.voiced || ph.gain == 0.0f) continue;
    std::fill(buf.begin(), buf.end(), std::complex<float>(0.0f, 0.0f));
    for (int i = 0; i < nwin; ++i) buf[static_cast<size_t>(i)] = static_cast<float>(noise_rng.normal());
    dsp::fft_inplace(buf);
    for (int k = 0; k <= nfft / 2; ++k) {
      const float f = static_cast<float>(k * hz_per_bin);
      const float shape = ph.envelope_at(f) * spk.envelope_at(f, cfg);
      buf[static_cast<size_t>(k)] *= shape;
      if (k > 0 && k < nfft / 2)
        buf[static_cast<size_t>(nfft - k)] = std::conj(buf[static_cast<size_t>(k)]);
    }
    for (auto& v : buf) v = std::conj(v);
    dsp::fft_inplace(buf);
    double energy = 0.0;
    for (int i = 0; i < nwin; ++i) {
      const double y = buf[static_cast<size_t>(i)].real() / nfft;
      energy += y * y;
    }
    const float norm = energy > 0 ? static_cast<float>(0.12 * std::sqrt(nwin / energy)) : 0.0f;
    float* dst = u.wave.samples.data() + static_cast<size_t>(t) * hop;
    const int avail = total_samples - t * hop;
    for (int i = 0; i < std::min(nwin, avail); ++i)
      dst[i] += buf[static_cast<size_t>(i)].real() / nfft * norm * ola_win[static_cast<size_t>(i)];
  }

  // normalize peak, then snap to the 16-bit grid used on disk
  float peak = 0.0f;
  for (float v : u.wave.samples) peak = std::max(peak, std::abs(v));
  const float scale = peak > 0.9f ? 0.9f / peak : 1.0f;
  for (auto& v : u.wave.samples) {
    v = std::clamp(v * scale, -1.0f, 1.0f);
    v = static_cast<float>(std::lrintf(v * 32767.0f)) / 32767.0f;
  }
  u.wave.validate();

  u.mel = dsp::mel_features(u.wave, cfg);
  require(u.mel.frames() == frames, "bad_utterance", "mel frame count mismatch after synthesis");
  u.validate();
  return u;
}

const Tensor& phoneme_mel_signatures(const dsp::AudioConfig& cfg) {
  static thread_local Tensor cache;
  static thread_local int cached_bins = -1;
  if (cached_bins != cfg.mel_bins) {
    const Tensor fb = dsp::mel_filterbank(cfg);
    Tensor t({kNumPhonemes, cfg.mel_bins});
    const double hz_per_bin = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
    const auto& inv = phoneme_inventory();
    for (int p = 0; p < kNumPhonemes; ++p) {
      for (int m = 0; m < cfg.mel_bins; ++m) {
        double acc = 0.0;
        for (int k = 0; k < fb.cols(); ++k)
          acc += fb.at(m, k) *
                 inv[static_cast<size_t>(p)].envelope_at(static_cast<float>(k * hz_per_bin));
        t.at(p, m) = static_cast<float>(std::log(acc + double(cfg.log_floor)));
      }
    }
    cache = std::move(t);
    cached_bins = cfg.mel_bins;
  }
  return cache;
}

std::vector<float> speaker_envelope_estimate(const Utterance& u, const dsp::AudioConfig& cfg) {
  const Tensor& sig = phoneme_mel_signatures(cfg);
  std::vector<double> acc(static_cast<size_t>(cfg.mel_bins), 0.0);
  int used = 0;
  for (int t = 0; t < u.frames(); ++t) {
    const int p = u.phoneme_frames[static_cast<size_t>(t)];
    if (p == kPauseId) continue;
    for (int m = 0; m < cfg.mel_bins; ++m)
      acc[static_cast<size_t>(m)] += u.mel.values.at(t, m) - sig.at(p, m);
    ++used;
  }
  require(used > 0, "bad_utterance", "no non-pause frames");
  std::vector<float> out(static_cast<size_t>(cfg.mel_bins));
  for (int m = 0; m < cfg.mel_bins; ++m)
    out[static_cast<size_t>(m)] = static_cast<float>(acc[static_cast<size_t>(m)] / used);
  return out;
}

void CorpusConfig::validate() const {
  require(pool_speakers >= 2, "bad_config", "need at least 2 pool speakers");
  require(target_speakers >= 1, "bad_config", "need at least 1 target speaker");
  require(pool_asr_train + pool_asr_val + pool_parallel_src + pool_judge_train +
                  pool_spkenc_train + pool_eval_src ==
              pool_utterances,
          "bad_config", "pool split sizes must sum to pool_utterances");
  require(tgt_finetune + tgt_centroid + tgt_spkenc_train + tgt_val == target_utterances,
          "bad_config", "target split sizes must sum to target_utterances");
  require(min_seconds >= 1.0f && max_seconds >= min_seconds, "bad_config", "bad duration range");
}

const SpeakerSpec& CorpusManifest::speaker(const std::string& id) const {
  for (const auto& s : speakers)
    if (s.id == id) return s;
  fail("unknown_speaker", "no such speaker: " + id);
}

int CorpusManifest::speaker_index(const std::string& id) const {
  for (size_t i = 0; i < speakers.size(); ++i)
    if (speakers[i].id == id) return static_cast<int>(i);
  fail("unknown_speaker", "no such speaker: " + id);
}

bool CorpusManifest::is_target(const std::string& id) const {
  return std::find(target_ids.begin(), target_ids.end(), id) != target_ids.end();
}

std::vector<const UttRecord*> CorpusManifest::split(const std::string& name) const {
  auto it = splits.find(name);
  require(it != splits.end(), "unknown_split", "no such split: " + name);
  std::vector<const UttRecord*> out;
  out.reserve(it->second.size());
  for (const auto& r : it->second) out.push_back(&r);
  return out;
}

namespace {

Json speaker_to_json(const SpeakerSpec& s) {
  return Json{{"id", s.id},
              {"envelope", s.envelope},
              {"f0_base", s.f0_base},
              {"f0_range", s.f0_range},
              {"jitter", s.jitter}};
}

SpeakerSpec speaker_from_json(const Json& j) {
  SpeakerSpec s;
  s.id = j.at("id").get<std::string>();
  s.envelope = j.at("envelope").get<std::vector<float>>();
  s.f0_base = j.at("f0_base").get<float>();
  s.f0_range = j.at("f0_range").get<float>();
  s.jitter = j.at("jitter").get<float>();
  return s;
}

Json config_to_json(const CorpusConfig& c) {
  return Json{{"sample_rate", c.audio.sample_rate},
              {"win_ms", c.audio.win_ms},
              {"hop_ms", c.audio.hop_ms},
              {"fft_size", c.audio.fft_size},
              {"mel_bins", c.audio.mel_bins},
              {"pool_speakers", c.pool_speakers},
              {"target_speakers", c.target_speakers},
              {"pool_utterances", c.pool_utterances},
              {"target_utterances", c.target_utterances},
              {"min_seconds", c.min_seconds},
              {"max_seconds", c.max_seconds},
              {"pool_split",
               {{"asr_train", c.pool_asr_train},
                {"asr_val", c.pool_asr_val},
                {"parallel_src", c.pool_parallel_src},
                {"judge_train", c.pool_judge_train},
                {"spkenc_train", c.pool_spkenc_train},
                {"eval_src", c.pool_eval_src}}},
              {"target_split",
               {{"finetune", c.tgt_finetune},
                {"centroid", c.tgt_centroid},
                {"spkenc_train", c.tgt_spkenc_train},
                {"target_val", c.tgt_val}}}};
}

CorpusConfig config_from_json(const Json& j) {
  CorpusConfig c;
  c.audio.sample_rate = j.at("sample_rate").get<int>();
  c.audio.win_ms = j.at("win_ms").get<int>();
  c.audio.hop_ms = j.at("hop_ms").get<int>();
  c.audio.fft_size = j.at("fft_size").get<int>();
  c.audio.mel_bins = j.at("mel_bins").get<int>();
  c.pool_speakers = j.at("pool_speakers").get<int>();
  c.target_speakers = j.at("target_speakers").get<int>();
  c.pool_utterances = j.at("pool_utterances").get<int>();
  c.target_utterances = j.at("target_utterances").get<int>();
  c.min_seconds = j.at("min_seconds").get<float>();
  c.max_seconds = j.at("max_seconds").get<float>();
  const Json& p = j.at("pool_split");
  c.pool_asr_train = p.at("asr_train").get<int>();
  c.pool_asr_val = p.at("asr_val").get<int>();
  c.pool_parallel_src = p.at("parallel_src").get<int>();
  c.pool_judge_train = p.at("judge_train").get<int>();
  c.pool_spkenc_train = p.at("spkenc_train").get<int>();
  c.pool_eval_src = p.at("eval_src").get<int>();
  const Json& t = j.at("target_split");
  c.tgt_finetune = t.at("finetune").get<int>();
  c.tgt_centroid = t.at("centroid").get<int>();
  c.tgt_spkenc_train = t.at("spkenc_train").get<int>();
  c.tgt_val = t.at("target_val").get<int>();
  return c;
}

void write_latents(const std::filesystem::path& path, const Utterance& u) {
  const int frames = u.frames();
  std::string blob;
  blob.reserve(static_cast<size_t>(frames) * 2 * sizeof(float));
  std::vector<float> tmp(static_cast<size_t>(frames));
  for (int t = 0; t < frames; ++t)
    tmp[static_cast<size_t>(t)] = static_cast<float>(u.phoneme_frames[static_cast<size_t>(t)]);
  blob.append(reinterpret_cast<const char*>(tmp.data()), tmp.size() * sizeof(float));
  blob.append(reinterpret_cast<const char*>(u.f0_frames.data()),
              u.f0_frames.size() * sizeof(float));
  write_file_bytes(path, blob);
  Json side{{"id", u.id},
            {"speaker_id", u.speaker_id},
            {"frames", frames},
            {"arrays", {{"phoneme_ids", 0}, {"f0", frames}}},
            {"blob_hash", content_hash(blob)}};
  write_json_file(path.string() + ".json", side);
}

}  // namespace

void CorpusManifest::save(const std::filesystem::path& file) const {
  Json j;
  j["seed"] = seed;
  j["config"] = config_to_json(cfg);
  Json spk = Json::array();
  for (const auto& s : speakers) spk.push_back(speaker_to_json(s));
  j["speakers"] = spk;
  j["target_ids"] = target_ids;
  Json js = Json::object();
  for (const auto& [name, records] : splits) {
    Json arr = Json::array();
    for (const auto& r : records)
      arr.push_back(Json{{"id", r.id},
                         {"speaker_id", r.speaker_id},
                         {"frames", r.frames},
                         {"wav", r.wav_path},
                         {"latents", r.latents_path}});
    js[name] = arr;
  }
  j["splits"] = js;
  write_json_file(file, j);
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& file) {
  const Json j = read_json_file(file);
  CorpusManifest m;
  m.seed = j.at("seed").get<uint64_t>();
  m.cfg = config_from_json(j.at("config"));
  for (const auto& s : j.at("speakers")) m.speakers.push_back(speaker_from_json(s));
  m.target_ids = j.at("target_ids").get<std::vector<std::string>>();
  for (const auto& [name, arr] : j.at("splits").items()) {
    std::vector<UttRecord> recs;
    for (const auto& r : arr) {
      UttRecord rec;
      rec.id = r.at("id").get<std::string>();
      rec.speaker_id = r.at("speaker_id").get<std::string>();
      rec.split = name;
      rec.frames = r.at("frames").get<int>();
      rec.wav_path = r.at("wav").get<std::string>();
      rec.latents_path = r.at("latents").get<std::string>();
      recs.push_back(std::move(rec));
    }
    m.splits[name] = std::move(recs);
  }
  m.root = file.parent_path();
  return m;
}

CorpusManifest build_corpus(const CorpusConfig& cfg, uint64_t seed,
                            const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  CorpusManifest m;
  m.cfg = cfg;
  m.seed = seed;
  m.root = out_dir;
  m.speakers = make_speakers(cfg.pool_speakers + cfg.target_speakers, seed, cfg.audio);
  for (int i = 0; i < cfg.target_speakers; ++i) {
    auto& s = m.speakers[static_cast<size_t>(cfg.pool_speakers + i)];
    s.id = "tgt" + std::to_string(i);
    m.target_ids.push_back(s.id);
  }

  const int min_frames = static_cast<int>(cfg.min_seconds * 1000.0f / cfg.audio.hop_ms);
  const int max_frames = static_cast<int>(cfg.max_seconds * 1000.0f / cfg.audio.hop_ms);

  auto emit = [&](const SpeakerSpec& spk, int utt_idx, const std::string& split) {
    const std::string id = spk.id + "_u" + std::to_string(utt_idx);
    Rng content_rng = Rng(seed).derive("content/" + id);
    Content content = sample_content(content_rng, min_frames, max_frames);
    const uint64_t synth_seed = fnv1a64("synth/" + id, seed);
    Utterance u = synthesize_utterance(content, spk, synth_seed, cfg.audio);
    u.id = id;
    UttRecord rec;
    rec.id = id;
    rec.speaker_id = spk.id;
    rec.split = split;
    rec.frames = u.frames();
    rec.wav_path = "wav/" + id + ".wav";
    rec.latents_path = "latents/" + id + ".bin";
    dsp::write_wav(out_dir / rec.wav_path, u.wave);
    write_latents(out_dir / rec.latents_path, u);
    m.splits[split].push_back(rec);
  };

  for (int si = 0; si < cfg.pool_speakers; ++si) {
    const auto& spk = m.speakers[static_cast<size_t>(si)];
    int idx = 0;
    auto run = [&](const char* split, int count) {
      for (int i = 0; i < count; ++i) emit(spk, idx++, split);
    };
    run("asr_train", cfg.pool_asr_train);
    run("asr_val", cfg.pool_asr_val);
    run("parallel_src", cfg.pool_parallel_src);
    run("judge_train", cfg.pool_judge_train);
    run("spkenc_train", cfg.pool_spkenc_train);
    run("eval_src", cfg.pool_eval_src);
  }
  for (int si = 0; si < cfg.target_speakers; ++si) {
    const auto& spk = m.speakers[static_cast<size_t>(cfg.pool_speakers + si)];
    int idx = 0;
    auto run = [&](const char* split, int count) {
      for (int i = 0; i < count; ++i) emit(spk, idx++, split);
    };
    run("finetune", cfg.tgt_finetune);
    run("centroid", cfg.tgt_centroid);
    run("spkenc_train", cfg.tgt_spkenc_train);
    run("target_val", cfg.tgt_val);
  }

  m.save(out_dir / "manifest.json");
  return m;
}

Utterance load_utterance(const CorpusManifest& manifest, const UttRecord& rec) {
  Utterance u;
  u.id = rec.id;
  u.speaker_id = rec.speaker_id;
  u.wave = dsp::read_wav(manifest.root / rec.wav_path);
  const std::string blob = read_file_bytes(manifest.root / rec.latents_path);
  const size_t n = static_cast<size_t>(rec.frames);
  require(blob.size() == n * 2 * sizeof(float), "corrupt_latents",
          "latent blob size mismatch: " + rec.id);
  std::vector<float> tmp(n);
  std::memcpy(tmp.data(), blob.data(), n * sizeof(float));
  u.phoneme_frames.resize(n);
  for (size_t i = 0; i < n; ++i) u.phoneme_frames[i] = static_cast<int>(tmp[i]);
  u.f0_frames.resize(n);
  std::memcpy(u.f0_frames.data(), blob.data() + n * sizeof(float), n * sizeof(float));
  u.mel = dsp::mel_features(u.wave, manifest.cfg.audio);
  u.validate();
  return u;
}

}  // namespace svc::corpus
