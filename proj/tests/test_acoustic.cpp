#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "svc/acoustic.hpp"

using namespace svc;
using namespace svc::acoustic;
using recognizer::EncoderConfig;
using recognizer::EncoderMode;
using recognizer::Recognizer;

namespace {

const dsp::AudioConfig kAudio;

AcousticConfig student_cfg(int k, int ibf_width) {
  AcousticConfig c;
  c.kind = AmKind::student;
  c.ibf_layer = k;
  c.ibf_width = ibf_width;
  c.enc_width = 32;
  c.dec_width = 32;
  c.target_ids = {"tgt0", "tgt1"};
  return c;
}

corpus::Utterance quick_utterance(uint64_t seed, int min_frames = 180) {
  auto speakers = corpus::make_speakers(3, 19, kAudio);
  Rng rng(seed);
  corpus::Content c = corpus::sample_content(rng, min_frames, min_frames + 40);
  return corpus::synthesize_utterance(c, speakers[seed % speakers.size()], seed, kAudio);
}

Recognizer& stream_rec() {
  static Recognizer rec = [] {
    EncoderConfig cfg;
    cfg.layers = 4;
    cfg.width = 24;
    cfg.mode = EncoderMode::streaming;
    return Recognizer(cfg, 77);  // untrained weights; contracts are structural
  }();
  return rec;
}

}  // namespace

TEST_CASE("config json round trip and validation") {
  AcousticConfig c = student_cfg(3, 24);
  AcousticConfig r = AcousticConfig::from_json(c.to_json());
  CHECK(r.kind == AmKind::student);
  CHECK(r.ibf_layer == 3);
  CHECK(r.target_ids == c.target_ids);
  AcousticConfig bad = c;
  bad.target_ids.clear();
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("frames in equals frames out; unknown target and tap mismatch raise") {
  corpus::Utterance u = quick_utterance(5);
  recognizer::IBF ibf = stream_rec().extract_ibf(u.mel.values, 3);
  AcousticModel am(student_cfg(3, 24), 9);
  Tensor mel = am.forward(ibf, "tgt0");
  CHECK(mel.rows() == ibf.features.rows());
  CHECK(mel.cols() == kAudio.mel_bins);
  CHECK_THROWS_AS(am.forward(ibf, "nobody"), Error);
  recognizer::IBF wrong = stream_rec().extract_ibf(u.mel.values, 2);
  wrong.k = 2;
  CHECK_THROWS_AS(am.forward(wrong, "tgt0"), Error);
}

TEST_CASE("student causality: perturbing a future chunk leaves past output unchanged") {
  corpus::Utterance u = quick_utterance(8, 200);
  AcousticModel am(student_cfg(3, 24), 11);
  recognizer::IBF ibf = stream_rec().extract_ibf(u.mel.values, 3);
  const int chunk = am.config().chunk_frames;
  const int chunks = ibf.features.rows() / chunk;
  REQUIRE(chunks >= 4);
  Tensor trimmed({chunks * chunk, ibf.features.cols()});
  for (int t = 0; t < trimmed.rows(); ++t)
    std::copy_n(ibf.features.row(t), trimmed.cols(), trimmed.row(t));
  recognizer::IBF base{trimmed, 3, EncoderMode::streaming};
  Tensor out0 = am.forward(base, "tgt1");
  Tensor perturbed = trimmed;
  for (int t = 3 * chunk; t < trimmed.rows(); ++t)
    for (int c = 0; c < trimmed.cols(); ++c) perturbed.at(t, c) = -perturbed.at(t, c) + 1.0f;
  recognizer::IBF mod{perturbed, 3, EncoderMode::streaming};
  Tensor out1 = am.forward(mod, "tgt1");
  for (int t = 0; t < 3 * chunk; ++t)
    for (int c = 0; c < out0.cols(); ++c) CHECK(out0.at(t, c) == out1.at(t, c));
}

TEST_CASE("incremental student inference matches offline free-running bit-exactly") {
  corpus::Utterance u = quick_utterance(13, 200);
  AcousticModel am(student_cfg(2, 24), 21);
  recognizer::IBF ibf = stream_rec().extract_ibf(u.mel.values, 2);
  const int chunk = am.config().chunk_frames;
  const int chunks = ibf.features.rows() / chunk;
  Tensor trimmed({chunks * chunk, ibf.features.cols()});
  for (int t = 0; t < trimmed.rows(); ++t)
    std::copy_n(ibf.features.row(t), trimmed.cols(), trimmed.row(t));
  recognizer::IBF whole{trimmed, 2, EncoderMode::streaming};
  Tensor offline = am.forward(whole, "tgt0");

  AcousticModel::StreamState state(am, "tgt0");
  for (int c = 0; c < chunks; ++c) {
    Tensor mc({chunk, trimmed.cols()});
    for (int t = 0; t < chunk; ++t)
      std::copy_n(trimmed.row(c * chunk + t), trimmed.cols(), mc.row(t));
    Tensor out = state.push_chunk(mc);
    for (int t = 0; t < chunk; ++t)
      for (int j = 0; j < out.cols(); ++j) CHECK(out.at(t, j) == offline.at(c * chunk + t, j));
  }
}

TEST_CASE("bundle round trip preserves outputs and architecture hash") {
  corpus::Utterance u = quick_utterance(23);
  AcousticModel am(student_cfg(3, 24), 31);
  recognizer::IBF ibf = stream_rec().extract_ibf(u.mel.values, 3);
  Tensor a = am.forward(ibf, "tgt0");
  const auto dir = std::filesystem::temp_directory_path() / "svc_am_bundle";
  std::filesystem::remove_all(dir);
  am.to_bundle().save(dir / "am");
  AcousticModel am2(ModelBundle::load(dir / "am"));
  Tensor b = am2.forward(ibf, "tgt0");
  CHECK(a.data == b.data);
  CHECK(am.to_bundle().arch_hash() == am2.to_bundle().arch_hash());
  std::filesystem::remove_all(dir);
}

TEST_CASE("student memorizes a single pair: TG loss under 0.05 per cell") {
  corpus::Utterance u = quick_utterance(42, 160);
  TgItem item;
  item.ibf = stream_rec().extract_ibf(u.mel.values, 3).features;
  item.teacher_mel = u.mel.values;  // any fixed target works for memorization
  item.target_id = "tgt0";
  item.src_speaker_id = u.speaker_id;
  TgTrainConfig tcfg;
  tcfg.steps = 2000;
  tcfg.crop_frames = 10000;  // whole utterance: memorization needs one alignment
  tcfg.lr = 3e-3f;
  tcfg.seed = 3;
  AmTrainStats stats;
  AcousticConfig mcfg = student_cfg(3, 24);
  mcfg.enc_width = 48;
  mcfg.dec_width = 48;
  AcousticModel model = train_student_tg(mcfg, {item}, {item}, tcfg, &stats);
  INFO("memorization TF L1 " << stats.heldout_l1);
  CHECK(stats.heldout_l1 < 0.05);

  // speaker conditioning reaches the output: a different embedding shifts it
  recognizer::IBF ibf{item.ibf, 3, EncoderMode::streaming};
  Tensor y0 = model.forward(ibf, "tgt0");
  Tensor y1 = model.forward(ibf, "tgt1");
  double gap = 0.0;
  for (size_t i = 0; i < y0.data.size(); ++i) gap += std::abs(y0.data[i] - y1.data[i]);
  gap /= static_cast<double>(y0.numel());
  CHECK(gap > 0.01);
}

TEST_CASE("use_lsgan=false reproduces the pure reconstruction objective") {
  corpus::Utterance u = quick_utterance(51, 160);
  ReconItem item;
  item.ibf = stream_rec().extract_ibf(u.mel.values, 3).features;
  item.mel = u.mel.values;
  item.speaker_id = "tgt0";
  AcousticConfig cfg = student_cfg(3, 24);
  ReconTrainConfig rc;
  rc.steps = 40;
  rc.seed = 6;
  rc.use_lsgan = false;
  AcousticModel a = train_reconstruction(cfg, {item}, {}, rc, nullptr);
  AcousticModel b = train_reconstruction(cfg, {item}, {}, rc, nullptr);
  // pure-L1 training is fully deterministic
  for (size_t i = 0; i < a.params().size(); ++i)
    CHECK(a.params().tensor(i).data == b.params().tensor(i).data);
  rc.use_lsgan = true;
  AcousticModel c = train_reconstruction(cfg, {item}, {}, rc, nullptr);
  bool differs = false;
  for (size_t i = 0; i < a.params().size() && !differs; ++i)
    differs = a.params().tensor(i).data != c.params().tensor(i).data;
  CHECK(differs);  // the adversarial term actually reaches the generator
}

TEST_CASE("reconstruction rejects speakers missing from the target table") {
  corpus::Utterance u = quick_utterance(61, 160);
  ReconItem item;
  item.ibf = stream_rec().extract_ibf(u.mel.values, 3).features;
  item.mel = u.mel.values;
  item.speaker_id = "someone_else";
  ReconTrainConfig rc;
  rc.steps = 5;
  CHECK_THROWS_AS(train_reconstruction(student_cfg(3, 24), {item}, {}, rc, nullptr), Error);
}

TEST_CASE("parallel generation: coverage, determinism, persistence round trip") {
  corpus::CorpusConfig ccfg;
  ccfg.pool_speakers = 3;
  ccfg.target_speakers = 2;
  ccfg.pool_utterances = 4;
  ccfg.target_utterances = 4;
  ccfg.min_seconds = 2.0f;
  ccfg.max_seconds = 2.5f;
  ccfg.pool_asr_train = 1;
  ccfg.pool_asr_val = 1;
  ccfg.pool_parallel_src = 1;
  ccfg.pool_judge_train = 1;
  ccfg.pool_spkenc_train = 0;
  ccfg.pool_eval_src = 0;
  ccfg.tgt_finetune = 1;
  ccfg.tgt_centroid = 1;
  ccfg.tgt_spkenc_train = 1;
  ccfg.tgt_val = 1;
  const auto dir = std::filesystem::temp_directory_path() / "svc_parallel_corpus";
  std::filesystem::remove_all(dir);
  corpus::CorpusManifest m = corpus::build_corpus(ccfg, 99, dir);

  EncoderConfig ecfg;
  ecfg.layers = 4;
  ecfg.width = 24;
  ecfg.mode = EncoderMode::non_streaming;
  Recognizer rec(ecfg, 5);
  AcousticConfig tcfg = student_cfg(3, 24);
  tcfg.kind = AmKind::teacher;
  AcousticModel teacher(tcfg, 7);

  ParallelSet p1 = generate_parallel(teacher, rec, m, "parallel_src", {"tgt0", "tgt1"});
  ParallelSet p2 = generate_parallel(teacher, rec, m, "parallel_src", {"tgt0", "tgt1"});
  REQUIRE(p1.items.size() == p2.items.size());
  std::set<std::string> sources;
  for (size_t i = 0; i < p1.items.size(); ++i) {
    CHECK(p1.items[i].teacher_mel.data == p2.items[i].teacher_mel.data);
    sources.insert(p1.items[i].src_speaker_id);
    CHECK(p1.items[i].src_speaker_id != p1.items[i].target_id);
  }
  CHECK(sources.size() == 3);  // every pool speaker appears as a source

  const auto pdir = dir / "parallel";
  p1.save(pdir);
  ParallelSet loaded = ParallelSet::load(pdir);
  REQUIRE(loaded.items.size() == p1.items.size());
  for (size_t i = 0; i < p1.items.size(); ++i)
    CHECK(loaded.items[i].teacher_mel.data == p1.items[i].teacher_mel.data);
  CHECK(loaded.teacher_arch_hash == p1.teacher_arch_hash);

  CHECK_THROWS_AS(generate_parallel(teacher, rec, m, "parallel_src", {"ghost"}), Error);
  std::filesystem::remove_all(dir);
}
