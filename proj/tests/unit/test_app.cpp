#include <algorithm>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "mynd/app/corpus.hpp"
#include "mynd/app/decode.hpp"
#include "mynd/app/simulate.hpp"
#include "support.hpp"

using namespace mynd;
using namespace mynd::app;
using mynd::test::TempDir;
namespace fs = std::filesystem;

namespace {

const datastore::KeyPair& keys() {
  static const datastore::KeyPair kp = datastore::KeyPair::generate();
  return kp;
}

SimulateConfig day_config(const fs::path& out, int day = 3) {
  SimulateConfig cfg;
  cfg.days = {day};
  cfg.seed = 11;
  cfg.subject = "subjectA";
  cfg.out = out;
  cfg.public_key = keys().public_key;
  return cfg;
}

// Decrypted payloads of every envelope in `dir`, sorted.
std::vector<Bytes> payloads(const fs::path& dir) {
  std::vector<Bytes> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".env") out.push_back(datastore::decrypt_envelope(read_file(e.path()), keys().secret_key));
  std::sort(out.begin(), out.end());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

TEST(Simulate, DayThreeRunsRestingAndMusicImagery) {
  TempDir dir("sim");
  std::ostringstream log;
  const auto rep = simulate_session(day_config(dir.path()), log);
  std::map<std::string, std::size_t> blocks;
  for (const auto& b : rep.blocks) {
    ++blocks[b.scenario];
    EXPECT_EQ(b.day, 3);
    EXPECT_GT(b.mean_quality, 0.5);
  }
  EXPECT_EQ(blocks, (std::map<std::string, std::size_t>{{"d3-resting", 3}, {"d3-music_imagery", 3}}));
  EXPECT_EQ(rep.questionnaires.size(), 1u);
  EXPECT_EQ(rep.envelopes, 7u);
  EXPECT_EQ(rep.uploaded, 7u);
  EXPECT_TRUE(rep.upload_errors.empty());
  EXPECT_EQ(rep.last_day, 3);
  EXPECT_FALSE(rep.study_complete);
  EXPECT_EQ(payloads(dir / "server/recordings").size(), 7u);
  EXPECT_TRUE(fs::exists(dir / "blocks.tsv"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["command"], "simulate");
  EXPECT_EQ(manifest["seed"], 11);
}

TEST(Simulate, SameSeedGivesIdenticalPlaintext) {
  TempDir a("sim"), b("sim"), c("sim");
  std::ostringstream log;
  simulate_session(day_config(a.path()), log);
  simulate_session(day_config(b.path()), log);
  auto other = day_config(c.path());
  other.seed = 12;
  simulate_session(other, log);
  const auto pa = payloads(a / "queue"), pb = payloads(b / "queue"), pc = payloads(c / "queue");
  ASSERT_EQ(pa.size(), 7u);
  EXPECT_EQ(pa, pb);
  EXPECT_NE(pa, pc);
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
}

TEST(Simulate, RecordingsCarryTrialsAndQualityTrace) {
  TempDir dir("sim");
  std::ostringstream log;
  simulate_session(day_config(dir.path()), log);
  std::size_t trials = 0;
  for (const auto& p : payloads(dir / "queue")) {
    if (datastore::looks_like_questionnaire(p)) {
      const auto q = datastore::read_questionnaire_result(to_string(p));
      EXPECT_EQ(q.questionnaire_id, "daily");
      ASSERT_TRUE(q.int_value("motivation"));
      continue;
    }
    const auto ds = datastore::read_dataset(p);
    EXPECT_EQ(ds.subject_id, "subjectA");
    EXPECT_FALSE(ds.metadata.quality_trace.empty());
    EXPECT_GT(ds.metadata.fitting_time_s, 0.0);
    const auto marks = datastore::marked_trials(ds);
    trials += marks.size();
    EXPECT_EQ(dataset_trials(ds).size(), marks.size());
  }
  EXPECT_EQ(trials, 6u + 18u);
}

TEST(Simulate, LowBatteryRefusesRecording) {
  TempDir dir("sim");
  auto cfg = day_config(dir.path(), 1);
  cfg.battery = 0.05;
  std::ostringstream log;
  EXPECT_THROW(simulate_session(cfg, log), SimulationError);
  EXPECT_NE(log.str().find("battery"), std::string::npos);
}

TEST(Simulate, ConfigurationErrors) {
  TempDir dir("sim");
  std::ostringstream log;
  auto cfg = day_config(dir.path());
  cfg.days = {2, 4};
  EXPECT_THROW(SessionSimulator(cfg, log), ContractError);
  cfg = day_config(dir.path());
  cfg.subject.clear();
  EXPECT_THROW(SessionSimulator(cfg, log), ContractError);
  cfg = day_config(dir.path());
  cfg.days = {8};
  EXPECT_THROW(SessionSimulator(cfg, log), ContractError);
  cfg = day_config(dir.path());
  cfg.transport = "http";
  EXPECT_THROW(SessionSimulator(cfg, log), ContractError);
}

TEST(Simulate, UnreachableServerKeepsEntriesQueued) {
  TempDir dir("sim");
  auto cfg = day_config(dir.path());
  std::ostringstream log;
  cfg.transport = "http";
  cfg.server_url = "http://127.0.0.1:9";
  const auto rep = simulate_session(cfg, log);
  EXPECT_EQ(rep.uploaded, 0u);
  EXPECT_FALSE(rep.upload_errors.empty());
  datastore::UploadQueue q(dir / "queue");
  EXPECT_EQ(q.pending().size(), 7u);
}

TEST(Decode, SimulatedDayYieldsOneRowPerStrategy) {
  TempDir dir("sim"), out("dec");
  std::ostringstream log;
  simulate_session(day_config(dir.path()), log);
  DecodeConfig dc;
  dc.recordings = dir / "server/recordings";
  dc.private_key = keys().secret_key;
  dc.out = out.path();
  const auto res = decode_recordings(dc, log);
  ASSERT_EQ(res.rows.size(), 1u);
  EXPECT_EQ(res.rows[0].strategy, "music_imagery");
  EXPECT_EQ(res.rows[0].day, 3);
  EXPECT_EQ(res.rows[0].trials, 18u);
  EXPECT_FALSE(std::isnan(res.rows[0].motivation));
  EXPECT_EQ(res.questionnaires, 1u);
  for (const char* f : {"results.csv", "accuracy_by_day.csv", "accuracy_vs_quality.csv", "r2_map.csv", "features.tsv",
                        "manifest.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
}

TEST(Decode, MissingInputs) {
  TempDir empty("dec");
  std::ostringstream log;
  DecodeConfig dc;
  dc.recordings = empty.path();
  EXPECT_THROW(decode_recordings(dc, log), NoRecordings);
  dc.recordings = empty / "absent";
  EXPECT_THROW(decode_recordings(dc, log), NoRecordings);
  write_file(empty / "x.env", Bytes{1, 2, 3});
  dc.recordings = empty.path();
  EXPECT_THROW(decode_recordings(dc, log), ContractError);
}

TEST(Corpus, GenerateAndLoad) {
  TempDir dir("corpus");
  CorpusConfig cc;
  cc.subjects = 3;
  cc.trials = 8;
  cc.options.trial_seconds = 8.0;
  cc.out = dir.path();
  std::ostringstream log;
  const auto files = generate_corpus(cc, log);
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[0].filename(), "lab01.mynd");
  const auto tasks = load_corpus(dir.path());
  ASSERT_EQ(tasks.size(), 3u);
  EXPECT_EQ(tasks[0].trials(), 8);
  EXPECT_TRUE(tasks[2].has_both_labels());
  cc.subjects = 1;
  EXPECT_THROW(generate_corpus(cc, log), ContractError);
}

TEST(LearnPrior, SingleSubjectCorpusIsRejected) {
  TempDir dir("corpus");
  CorpusConfig cc;
  cc.subjects = 2;
  cc.trials = 6;
  cc.options.trial_seconds = 4.0;
  cc.out = dir.path();
  std::ostringstream log;
  const auto files = generate_corpus(cc, log);
  fs::remove(files[1]);
  LearnPriorConfig lc;
  lc.corpus = dir.path();
  lc.out = dir / "prior.bin";
  try {
    learn_prior_from_corpus(lc, log);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("at least 2"), std::string::npos);
  }
}

TEST(LearnPrior, RerunsAreByteIdentical) {
  TempDir dir("corpus");
  CorpusConfig cc;
  cc.subjects = 4;
  cc.trials = 10;
  cc.options.trial_seconds = 8.0;
  cc.out = dir / "corpus";
  std::ostringstream log;
  generate_corpus(cc, log);
  LearnPriorConfig lc;
  lc.corpus = cc.out;
  lc.options.max_iterations = 50;
  lc.out = dir / "a.prior";
  learn_prior_from_corpus(lc, log);
  lc.out = dir / "b.prior";
  learn_prior_from_corpus(lc, log);
  EXPECT_EQ(slurp(dir / "a.prior"), slurp(dir / "b.prior"));
  const auto pf = decoder::load_prior((dir / "a.prior").string());
  EXPECT_EQ(pf.iterations, 50u);
  EXPECT_EQ(pf.feature_names.back(), "bias");
  EXPECT_TRUE(fs::exists(dir / "a.prior.manifest.json"));
}
