#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "svc/corpus.hpp"
#include "svc/hash.hpp"

using namespace svc;
using namespace svc::corpus;

namespace {

dsp::AudioConfig audio_cfg() { return dsp::AudioConfig{}; }

// Small corpus used by most tests here; full desk scale lives in acceptance.
CorpusConfig small_config() {
  CorpusConfig c;
  c.pool_speakers = 4;
  c.target_speakers = 2;
  c.pool_utterances = 12;
  c.target_utterances = 8;
  c.min_seconds = 2.0f;
  c.max_seconds = 3.0f;
  c.pool_asr_train = 4;
  c.pool_asr_val = 2;
  c.pool_parallel_src = 2;
  c.pool_judge_train = 2;
  c.pool_spkenc_train = 1;
  c.pool_eval_src = 1;
  c.tgt_finetune = 3;
  c.tgt_centroid = 3;
  c.tgt_spkenc_train = 1;
  c.tgt_val = 1;
  return c;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  return dot / (std::sqrt(na * nb) + 1e-12);
}

std::filesystem::path fresh_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("svc_corpus_" + tag);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("make_speakers: deterministic, separated, n>=2 enforced") {
  const auto cfg = audio_cfg();
  auto a = make_speakers(2, 7, cfg);
  auto b = make_speakers(2, 7, cfg);
  REQUIRE(a.size() == 2);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].envelope == b[i].envelope);
    CHECK(a[i].f0_base == b[i].f0_base);
  }
  auto pool = make_speakers(10, 21, cfg);
  for (size_t i = 0; i < pool.size(); ++i)
    for (size_t j = i + 1; j < pool.size(); ++j)
      CHECK(envelope_cosine(pool[i], pool[j]) < 0.95);
  CHECK_THROWS_AS(make_speakers(1, 7, cfg), Error);
}

TEST_CASE("same content, two speakers: identical phoneme labels, shared f0 walk") {
  const auto cfg = audio_cfg();
  auto speakers = make_speakers(2, 13, cfg);
  Rng rng(5);
  Content c = sample_content(rng, 200, 260);
  Utterance ua = synthesize_utterance(c, speakers[0], 99, cfg);
  Utterance ub = synthesize_utterance(c, speakers[1], 99, cfg);
  REQUIRE(ua.frames() == ub.frames());
  CHECK(ua.phoneme_frames == ub.phoneme_frames);
  // Hz contours differ by the speakers' pitch maps (base/range/jitter
  // weights) but are driven by the same latent walk, so they correlate
  // strongly.
  std::vector<float> fa, fb;
  for (int t = 0; t < ua.frames(); ++t) {
    fa.push_back(ua.f0_frames[static_cast<size_t>(t)]);
    fb.push_back(ub.f0_frames[static_cast<size_t>(t)]);
  }
  CHECK(dsp::pearson(fa, fb) > 0.9);
}

TEST_CASE("estimate_f0 recovers the stored contour on voiced frames") {
  const auto cfg = audio_cfg();
  auto speakers = make_speakers(2, 31, cfg);
  Rng rng(8);
  Content c = sample_content(rng, 250, 300);
  Utterance u = synthesize_utterance(c, speakers[0], 123, cfg);
  dsp::F0Track est = estimate_f0(u.wave, 70.0f, 350.0f);
  std::vector<float> errs;
  for (int t = 0; t < std::min<int>(u.frames(), static_cast<int>(est.f0.size())); ++t) {
    if (!u.frame_voiced(t) || !est.voiced[static_cast<size_t>(t)]) continue;
    errs.push_back(std::abs(est.f0[static_cast<size_t>(t)] - u.f0_frames[static_cast<size_t>(t)]));
  }
  REQUIRE(errs.size() > 50);
  std::nth_element(errs.begin(), errs.begin() + static_cast<long>(errs.size() / 2), errs.end());
  CHECK(errs[errs.size() / 2] < 5.0f);
}

TEST_CASE("speaker envelope estimates agree across contents of one speaker") {
  const auto cfg = audio_cfg();
  auto speakers = make_speakers(3, 17, cfg);
  Rng rng(9);
  for (const auto& spk : speakers) {
    Content c1 = sample_content(rng, 220, 280);
    Content c2 = sample_content(rng, 220, 280);
    Utterance u1 = synthesize_utterance(c1, spk, 1001, cfg);
    Utterance u2 = synthesize_utterance(c2, spk, 1002, cfg);
    auto e1 = speaker_envelope_estimate(u1, cfg);
    auto e2 = speaker_envelope_estimate(u2, cfg);
    CHECK(cosine(e1, e2) > 0.9);
  }
}

TEST_CASE("empty content and short durations are rejected") {
  const auto cfg = audio_cfg();
  auto speakers = make_speakers(2, 3, cfg);
  Content empty;
  CHECK_THROWS_AS(synthesize_utterance(empty, speakers[0], 1, cfg), Error);
  Content bad;
  bad.phonemes = {0};
  bad.durations = {2};
  CHECK_THROWS_AS(synthesize_utterance(bad, speakers[0], 1, cfg), Error);
}

TEST_CASE("build_corpus: deterministic manifests, disjoint splits, reloadable") {
  CorpusConfig cfg = small_config();
  auto dir1 = fresh_dir("a");
  auto dir2 = fresh_dir("b");
  CorpusManifest m1 = build_corpus(cfg, 2024, dir1);
  CorpusManifest m2 = build_corpus(cfg, 2024, dir2);

  const std::string j1 = read_file_bytes(dir1 / "manifest.json");
  const std::string j2 = read_file_bytes(dir2 / "manifest.json");
  CHECK(j1 == j2);

  // bit-identical regeneration of one wav and latent file
  const auto& rec = m1.splits.at("asr_train").front();
  CHECK(file_content_hash(dir1 / rec.wav_path) == file_content_hash(dir2 / rec.wav_path));
  CHECK(file_content_hash(dir1 / rec.latents_path) ==
        file_content_hash(dir2 / rec.latents_path));

  // split disjointness
  std::set<std::string> seen;
  for (const auto& [name, records] : m1.splits)
    for (const auto& r : records) {
      CHECK(seen.insert(r.id).second);
    }

  // targets in the designated fine-tune split
  for (const auto& r : m1.splits.at("finetune")) CHECK(m1.is_target(r.speaker_id));

  // reload round trip
  CorpusManifest loaded = CorpusManifest::load(dir1 / "manifest.json");
  CHECK(loaded.speakers.size() == m1.speakers.size());
  Utterance u = load_utterance(loaded, loaded.splits.at("asr_train").front());
  Utterance v = load_utterance(m1, rec);
  CHECK(u.wave.samples == v.wave.samples);
  CHECK(u.phoneme_frames == v.phoneme_frames);
  CHECK(u.mel.values.data == v.mel.values.data);

  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("total speaker duration lands within 10% of the configured budget") {
  CorpusConfig cfg = small_config();
  auto dir = fresh_dir("dur");
  CorpusManifest m = build_corpus(cfg, 77, dir);
  std::map<std::string, double> seconds;
  for (const auto& [name, records] : m.splits)
    for (const auto& r : records)
      seconds[r.speaker_id] += r.frames * cfg.audio.hop_ms / 1000.0;
  const double expected_tgt = cfg.target_utterances * (cfg.min_seconds + cfg.max_seconds) / 2.0;
  for (const auto& id : m.target_ids) {
    CHECK(seconds[id] > 0.9 * expected_tgt);
    CHECK(seconds[id] < 1.1 * expected_tgt);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("phoneme distributions are speaker-independent (chi-square at 0.01)") {
  CorpusConfig cfg = small_config();
  auto dir = fresh_dir("chi");
  CorpusManifest m = build_corpus(cfg, 31337, dir);
  // contingency table: pool speakers x phonemes, counted over segments
  std::map<std::string, std::vector<double>> counts;
  for (const auto& [name, records] : m.splits) {
    for (const auto& r : records) {
      if (m.is_target(r.speaker_id)) continue;
      Utterance u = load_utterance(m, r);
      auto& row = counts[r.speaker_id];
      row.resize(kNumPhonemes, 0.0);
      int prev = -1;
      for (int t = 0; t < u.frames(); ++t) {
        const int p = u.phoneme_frames[static_cast<size_t>(t)];
        if (p != prev) row[static_cast<size_t>(p)] += 1.0;  // count segments, not frames
        prev = p;
      }
    }
  }
  const int S = static_cast<int>(counts.size());
  std::vector<double> col(kNumPhonemes, 0.0), row_tot;
  double total = 0.0;
  for (const auto& [id, row] : counts) {
    double rt = 0.0;
    for (int p = 0; p < kNumPhonemes; ++p) {
      col[static_cast<size_t>(p)] += row[static_cast<size_t>(p)];
      rt += row[static_cast<size_t>(p)];
    }
    row_tot.push_back(rt);
    total += rt;
  }
  double stat = 0.0;
  int ri = 0;
  for (const auto& [id, row] : counts) {
    for (int p = 0; p < kNumPhonemes; ++p) {
      const double expected = row_tot[static_cast<size_t>(ri)] * col[static_cast<size_t>(p)] / total;
      if (expected < 1e-9) continue;
      const double d = row[static_cast<size_t>(p)] - expected;
      stat += d * d / expected;
    }
    ++ri;
  }
  const int dof = (S - 1) * (kNumPhonemes - 1);
  // Wilson-Hilferty critical value at alpha = 0.01
  const double z99 = 2.3263478740408408;
  const double h = 2.0 / (9.0 * dof);
  const double crit = dof * std::pow(1.0 - h + z99 * std::sqrt(h), 3.0);
  INFO("chi-square " << stat << " vs critical " << crit << " (dof " << dof << ")");
  CHECK(stat < crit);
  std::filesystem::remove_all(dir);
}

TEST_CASE("nearest-centroid speaker classification on time-averaged mel exceeds 95%") {
  CorpusConfig cfg = small_config();
  auto dir = fresh_dir("centroid");
  CorpusManifest m = build_corpus(cfg, 555, dir);
  std::map<std::string, std::vector<std::vector<float>>> by_speaker;
  for (const auto& [name, records] : m.splits) {
    for (const auto& r : records) {
      if (m.is_target(r.speaker_id)) continue;
      Utterance u = load_utterance(m, r);
      std::vector<float> avg(static_cast<size_t>(cfg.audio.mel_bins), 0.0f);
      int used = 0;
      for (int t = 0; t < u.frames(); ++t) {
        if (u.phoneme_frames[static_cast<size_t>(t)] == kPauseId) continue;
        for (int b = 0; b < cfg.audio.mel_bins; ++b)
          avg[static_cast<size_t>(b)] += u.mel.values.at(t, b);
        ++used;
      }
      for (auto& v : avg) v /= static_cast<float>(used);
      by_speaker[r.speaker_id].push_back(std::move(avg));
    }
  }
  // centroids from even-indexed utterances, classify odd-indexed ones
  std::map<std::string, std::vector<float>> centroids;
  for (auto& [id, vecs] : by_speaker) {
    std::vector<float> c(vecs[0].size(), 0.0f);
    int n = 0;
    for (size_t i = 0; i < vecs.size(); i += 2) {
      for (size_t b = 0; b < c.size(); ++b) c[b] += vecs[i][b];
      ++n;
    }
    for (auto& v : c) v /= static_cast<float>(n);
    centroids[id] = std::move(c);
  }
  int correct = 0, totaln = 0;
  for (auto& [id, vecs] : by_speaker) {
    for (size_t i = 1; i < vecs.size(); i += 2) {
      double best = -1e30;
      std::string best_id;
      for (const auto& [cid, c] : centroids) {
        double d = 0;
        for (size_t b = 0; b < c.size(); ++b) {
          const double diff = vecs[i][b] - c[b];
          d -= diff * diff;
        }
        if (d > best) {
          best = d;
          best_id = cid;
        }
      }
      correct += best_id == id;
      ++totaln;
    }
  }
  INFO("accuracy " << correct << "/" << totaln);
  CHECK(static_cast<double>(correct) / totaln > 0.95);
  std::filesystem::remove_all(dir);
}
