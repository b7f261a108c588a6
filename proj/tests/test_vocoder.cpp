#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "svc/vocoder.hpp"
#include "svc/corpus.hpp"

using namespace svc;
using namespace svc::vocoder;

namespace {

const dsp::AudioConfig kAudio;

Tensor random_mel(int frames, uint64_t seed) {
  Rng rng(seed);
  Tensor mel({frames, kAudio.mel_bins});
  for (auto& v : mel.data) v = static_cast<float>(rng.uniform(-10.0, 0.5));
  return mel;
}

}  // namespace

TEST_CASE("config: upsample product must equal hop; budget is enforced") {
  VocoderConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.future_rf_frames() == 2);
  CHECK(cfg.future_rf_frames() <= cfg.lookahead_frames);
  VocoderConfig bad = cfg;
  bad.stages[0].upsample = 4;  // 4*4*4 != 80
  CHECK_THROWS_AS(bad.validate(), Error);
  VocoderConfig greedy = cfg;
  greedy.pre.right = 4;  // blows the declared budget
  CHECK_THROWS_AS(greedy.validate(), Error);
  VocoderConfig rt = VocoderConfig::from_json(cfg.to_json());
  CHECK(rt.future_rf_frames() == cfg.future_rf_frames());
  CHECK(rt.stages.size() == cfg.stages.size());
}

TEST_CASE("sample count out is frames times hop exactly") {
  Vocoder voc(VocoderConfig{}, 3);
  Tensor mel = random_mel(11, 5);
  dsp::Waveform w = voc.vocode_offline(mel, kAudio.sample_rate);
  CHECK(w.samples.size() == 11u * 80u);
}

TEST_CASE("mel width mismatch raises") {
  Vocoder voc(VocoderConfig{}, 3);
  Tensor mel({10, 7});
  CHECK_THROWS_AS(voc.vocode_offline(mel, kAudio.sample_rate), Error);
}

TEST_CASE("declared lookahead equals measured lookahead") {
  Vocoder voc(VocoderConfig{}, 17);
  CHECK(measure_lookahead(voc, 23) == voc.config().lookahead_frames);
}

TEST_CASE("perturbing beyond the lookahead leaves earlier blocks untouched, exactly") {
  Vocoder voc(VocoderConfig{}, 29);
  Tensor mel = random_mel(12, 31);
  dsp::Waveform base = voc.vocode_offline(mel, kAudio.sample_rate);
  const int t = 4;
  const int look = voc.config().lookahead_frames;
  Tensor mod = mel;
  for (int f = t + look + 1; f < mel.rows(); ++f)
    for (int c = 0; c < mel.cols(); ++c) mod.at(f, c) = -1.0f - mod.at(f, c);
  dsp::Waveform out = voc.vocode_offline(mod, kAudio.sample_rate);
  for (int n = 0; n < (t + 1) * 80; ++n) CHECK(base.samples[static_cast<size_t>(n)] == out.samples[static_cast<size_t>(n)]);
}

TEST_CASE("streaming output equals offline output bit-exactly") {
  Vocoder voc(VocoderConfig{}, 41);
  Tensor mel = random_mel(23, 43);
  dsp::Waveform offline = voc.vocode_offline(mel, kAudio.sample_rate);
  dsp::Waveform streamed = voc.vocode_streaming(mel, kAudio.sample_rate);
  REQUIRE(streamed.samples.size() == offline.samples.size());
  for (size_t i = 0; i < offline.samples.size(); ++i)
    CHECK(streamed.samples[i] == offline.samples[i]);
}

TEST_CASE("streaming emits blocks once the lookahead is satisfied") {
  Vocoder voc(VocoderConfig{}, 47);
  Tensor mel = random_mel(10, 51);
  auto state = voc.stream();
  std::vector<size_t> emitted;
  for (int t = 0; t < mel.rows(); ++t) emitted.push_back(state.push_frame(mel.row(t)).size());
  // nothing can be emitted until the lookahead frames arrive
  CHECK(emitted[0] == 0);
  CHECK(emitted[1] == 0);
  CHECK(emitted[2] == 80);  // block 0 completes when frame 2 (= 0 + lookahead) lands
  size_t total = 0;
  for (size_t e : emitted) total += e;
  total += state.flush().size();
  CHECK(total == 10u * 80u);
}

TEST_CASE("training reduces the spectral loss on a speech-like signal") {
  auto speakers = corpus::make_speakers(2, 7, kAudio);
  Rng rng(13);
  corpus::Content c = corpus::sample_content(rng, 120, 150);
  corpus::Utterance u = corpus::synthesize_utterance(c, speakers[0], 71, kAudio);
  VocoderTrainItem item = vocoder_item_from(u);
  VocoderTrainConfig tcfg;
  tcfg.steps = 120;
  tcfg.crop_frames = 24;
  tcfg.seed = 5;
  VocoderTrainStats stats;
  train_vocoder({item}, {item}, VocoderConfig{}, tcfg, &stats);
  REQUIRE(stats.losses.size() == 120);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 20; ++i) {
    early += stats.losses[static_cast<size_t>(i)];
    late += stats.losses[stats.losses.size() - 1 - static_cast<size_t>(i)];
  }
  INFO("early " << early / 20 << " late " << late / 20 << " heldout " << stats.heldout_loss);
  CHECK(late < 0.8 * early);
  CHECK(stats.heldout_loss > 0.0);
}
