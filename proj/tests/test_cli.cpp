#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>

#include "spliceguard/spliceguard.hpp"

namespace fs = std::filesystem;
using namespace spliceguard;

namespace {

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("sg_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write_text_file(dir_ / "config.json", R"({
  "seed": 5,
  "corpus": {"num_genuine": 14, "num_fake_donors": 4, "val_sources": 3, "test_sources": 3,
             "words_min": 3, "words_max": 4},
  "model": {"channels": 8, "res_blocks": 1, "emb_dim": 8, "heads": 2, "ffn": 16, "lstm_hidden": 4},
  "train": {"batch": 2, "epochs": 1, "steps_per_epoch": 4, "validate_every": 2, "keep_best": 2}
})");
  }

  void TearDown() override {
    if (!HasFailure()) fs::remove_all(dir_);
  }

  CmdResult run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(SPLICEGUARD_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    CmdResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text_file(out);
    r.err = read_text_file(err);
    return r;
  }

  std::string cfg() const { return "--config " + (dir_ / "config.json").string(); }

  fs::path synth(const std::string& name = "corpus") const {
    const auto out = dir_ / name;
    const auto r = run("synth " + cfg() + " --out " + out.string());
    EXPECT_EQ(r.code, 0) << r.err;
    return out;
  }

  fs::path train(const fs::path& corpus, const std::string& name = "train") const {
    const auto out = dir_ / name;
    const auto r = run("train " + cfg() + " --train " + (corpus / "train.jsonl").string() + " --val " +
                       (corpus / "val.jsonl").string() + " --out " + out.string());
    EXPECT_EQ(r.code, 0) << r.err;
    return out;
  }

  fs::path dir_;
};

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_text_file(e.path());
  return out;
}

std::set<std::string> sources(const fs::path& manifest) {
  std::set<std::string> s;
  for (const auto& e : read_manifest(manifest)) s.insert(e.source.empty() ? e.id : e.source);
  return s;
}

}  // namespace

TEST_F(CliTest, SynthWritesValidManifests) {
  const auto corpus = synth();
  for (const auto& name : experiment_manifest_names()) {
    const auto records = load_manifest_records(corpus / name, 16000);
    EXPECT_FALSE(records.empty()) << name;
  }
  EXPECT_EQ(load_manifest_records(corpus / "genuine.jsonl", 16000).size(), 14u);
  const auto cfg_echo = load_run_config(corpus / "config.json");
  EXPECT_EQ(cfg_echo.seed, 5u);
}

TEST_F(CliTest, SynthSplitsAreDisjoint) {
  const auto corpus = synth();
  const auto tr = sources(corpus / "train.jsonl"), va = sources(corpus / "val.jsonl"), te = sources(corpus / "test.jsonl");
  for (const auto& s : va) EXPECT_FALSE(tr.count(s) || te.count(s)) << s;
  for (const auto& s : te) EXPECT_FALSE(tr.count(s)) << s;
  EXPECT_EQ(tr.size() + va.size() + te.size(), 14u);
}

TEST_F(CliTest, SynthIsDeterministicAndGuardsOutput) {
  const auto a = synth("a");
  const auto b = synth("b");
  EXPECT_EQ(tree_bytes(a), tree_bytes(b));

  const auto refused = run("synth " + cfg() + " --out " + a.string());
  EXPECT_EQ(refused.code, 1);
  EXPECT_NE(refused.err.find("--force"), std::string::npos);

  write_text_file(a / "keep.txt", "mine");
  const auto forced = run("synth " + cfg() + " --force --out " + a.string());
  ASSERT_EQ(forced.code, 0) << forced.err;
  auto after = tree_bytes(a);
  EXPECT_EQ(after.at("keep.txt"), "mine");
  after.erase("keep.txt");
  EXPECT_EQ(after, tree_bytes(b));

  const auto reseeded = run("synth " + cfg() + " --seed 6 --out " + (dir_ / "c").string());
  ASSERT_EQ(reseeded.code, 0);
  EXPECT_NE(tree_bytes(dir_ / "c").at("wav/utt00000.wav"), tree_bytes(b).at("wav/utt00000.wav"));
}

TEST_F(CliTest, TrainWritesCheckpointsAndResumes) {
  const auto corpus = synth();
  const auto out = train(corpus);
  for (const char* f : {"final.sgck", "last.sgck", "train_log.csv"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_FALSE(fs::is_empty(out / "best"));
  const auto final_ck = nn::load_checkpoint(out / "final.sgck");
  EXPECT_TRUE(final_ck.meta.contains("threshold"));
  EXPECT_EQ(final_ck.meta.at("run_config").at("seed"), 5);
  EXPECT_EQ(final_ck.step, 4);
  EXPECT_FALSE(final_ck.optimizer.has_value());
  EXPECT_TRUE(nn::load_checkpoint(out / "last.sgck").optimizer.has_value());

  // Continue to 8 steps: the counter picks up at step 5.
  auto c2 = load_run_config(dir_ / "config.json");
  c2.train.epochs = 2;
  write_text_file(dir_ / "config2.json", to_json(c2).dump());
  const auto ok = run("train --config " + (dir_ / "config2.json").string() + " --train " +
                      (corpus / "train.jsonl").string() + " --val " + (corpus / "val.jsonl").string() + " --out " +
                      (dir_ / "resumed").string() + " --resume " + (out / "last.sgck").string());
  ASSERT_EQ(ok.code, 0) << ok.err;
  const std::string log = read_text_file(dir_ / "resumed" / "train_log.csv");
  EXPECT_EQ(log.substr(log.find('\n') + 1, 2), "5,");
  EXPECT_EQ(nn::load_checkpoint(dir_ / "resumed" / "last.sgck").step, 8);
}

TEST_F(CliTest, TrainRejectsManifestWithoutClass) {
  const auto corpus = synth();
  std::string text = read_text_file(corpus / "train.jsonl");
  const auto pos = text.find(",\"class\":\"genuine\"");
  ASSERT_NE(pos, std::string::npos);
  text.erase(pos, std::string(",\"class\":\"genuine\"").size());
  write_text_file(corpus / "broken.jsonl", text);
  const auto r = run("train " + cfg() + " --train " + (corpus / "broken.jsonl").string() + " --val " +
                     (corpus / "val.jsonl").string() + " --out " + (dir_ / "t").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("class"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvalReportIsDeterministicWithProvenance) {
  const auto corpus = synth();
  const auto model = train(corpus);
  const std::string base = "eval " + cfg() + " --checkpoint " + (model / "final.sgck").string() + " --manifest " +
                           (corpus / "test.jsonl").string() + " --out ";
  ASSERT_EQ(run(base + (dir_ / "e1").string()).code, 0);
  ASSERT_EQ(run(base + (dir_ / "e2").string()).code, 0);
  const std::string report = read_text_file(dir_ / "e1" / "report.json");
  EXPECT_EQ(report, read_text_file(dir_ / "e2" / "report.json"));
  EXPECT_EQ(read_text_file(dir_ / "e1" / "det.csv"), read_text_file(dir_ / "e2" / "det.csv"));
  const auto rep = decode_report(report);
  EXPECT_EQ(rep.config.at("checkpoint_sha256").get<std::string>().size(), 64u);
  EXPECT_EQ(rep.config.at("run_config").at("seed"), 5);
  EXPECT_TRUE(rep.metrics.eer.has_value());
  EXPECT_EQ(rep.utterances.size(), read_manifest(corpus / "test.jsonl").size());
  const double thr = nn::load_checkpoint(model / "final.sgck").meta.at("threshold").get<double>();
  EXPECT_EQ(rep.metrics.threshold, thr);

  const auto summary = run("report " + (dir_ / "e1" / "report.json").string());
  EXPECT_EQ(summary.code, 0);
  EXPECT_NE(summary.out.find("EER"), std::string::npos);
}

TEST_F(CliTest, FeaturesExportFeedsEval) {
  const auto corpus = synth();
  const auto model = train(corpus);
  const auto r = run("features " + cfg() + " --manifest " + (corpus / "test.jsonl").string() + " --out " +
                     (dir_ / "feats").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto recs = load_manifest_records(dir_ / "feats" / "test.jsonl", 16000);
  ASSERT_FALSE(recs.empty());
  EXPECT_TRUE(recs[0].features != nullptr);
  EXPECT_EQ(recs[0].features->dim(), kFbankDim);
  const std::string base = "eval " + cfg() + " --checkpoint " + (model / "final.sgck").string() + " --out ";
  ASSERT_EQ(run(base + (dir_ / "ew").string() + " --manifest " + (corpus / "test.jsonl").string()).code, 0);
  ASSERT_EQ(run(base + (dir_ / "ef").string() + " --manifest " + (dir_ / "feats" / "test.jsonl").string()).code, 0);
  const auto a = decode_report(read_text_file(dir_ / "ew" / "report.json"));
  const auto b = decode_report(read_text_file(dir_ / "ef" / "report.json"));
  ASSERT_EQ(a.utterances.size(), b.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) EXPECT_EQ(a.utterances[i].probs, b.utterances[i].probs);
}

TEST_F(CliTest, InferOnWavAndErrors) {
  const auto corpus = synth();
  const auto model = train(corpus);
  const auto wav = corpus / "wav" / "utt00000.wav";
  const auto r = run("infer --checkpoint " + (model / "final.sgck").string() + " " + wav.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("id"), "utt00000");
  EXPECT_EQ(j.at("feature"), "fbank");
  const auto frames = FeaturePipeline().frames_for(read_wav(wav).size());
  EXPECT_EQ(static_cast<std::int64_t>(j.at("probs").size()), frames);

  write_text_file(dir_ / "bad.wav", std::string("RIFF\x04\x00\x00\x00WAVE", 12));
  const auto bad = run("infer --checkpoint " + (model / "final.sgck").string() + " " + (dir_ / "bad.wav").string());
  EXPECT_EQ(bad.code, 2);
  const auto err = nlohmann::json::parse(bad.err);
  EXPECT_EQ(err.at("error").at("kind"), "format");
  EXPECT_FALSE(err.at("error").at("message").get<std::string>().empty());

  const auto missing = run("infer --checkpoint " + (dir_ / "none.sgck").string() + " " + wav.string());
  EXPECT_EQ(missing.code, 2);
}

TEST_F(CliTest, InferFeatureFileSelectsExternalModel) {
  DetectorConfig dc = DetectorConfig::toy(kExternalDim);
  dc.channels = 8;
  dc.emb_dim = 8;
  dc.ffn = 16;
  dc.lstm_hidden = 4;
  dc.heads = 2;
  Detector<float> det(dc);
  det.initialize(3);
  nn::save_checkpoint(make_checkpoint(det), dir_ / "ext.sgck");
  FeatureMatrix fm;
  fm.kind = FeatureKind::external;
  fm.frame_shift = kExternalFrameShift;
  fm.values = RowMatrix<float>::Constant(40, kExternalDim, 0.1f);
  write_features(fm, dir_ / "emb.sgft");

  const auto r = run("infer --checkpoint " + (dir_ / "ext.sgck").string() + " --feature-file " +
                     (dir_ / "emb.sgft").string() + " --out " + (dir_ / "o.json").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read_text_file(dir_ / "o.json"));
  EXPECT_EQ(j.at("feature"), "external");
  EXPECT_EQ(j.at("probs").size(), 40u);
  EXPECT_DOUBLE_EQ(j.at("frame_shift").get<double>(), static_cast<double>(static_cast<float>(kExternalFrameShift)));

  // A 768-d stream into a 240-d model is a shape error.
  Detector<float> fb(DetectorConfig::toy());
  fb.initialize(1);
  nn::save_checkpoint(make_checkpoint(fb), dir_ / "fb.sgck");
  const auto mism = run("infer --checkpoint " + (dir_ / "fb.sgck").string() + " --feature-file " + (dir_ / "emb.sgft").string());
  EXPECT_EQ(mism.code, 2);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("synth --feature mfcc").code, 1);
  write_text_file(dir_ / "unknown.json", R"({"trian": {}})");
  const auto r = run("synth --config " + (dir_ / "unknown.json").string() + " --out " + (dir_ / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("trian"), std::string::npos);
  EXPECT_EQ(run("--help").code, 0);
}
