#include "memlab/errors.hpp"
#include "memlab/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

using namespace memlab;

namespace {

const char* kSmallMlp = R"({
  "seed": 4,
  "dataset": {"kind": "synthetic_blobs", "n": 120, "d": 6, "classes": 3, "spread": 0.5, "test_n": 60},
  "noise": {"kind": "symmetric", "level": 0.4},
  "model": {"kind": "mlp", "hidden_sizes": [16]},
  "optimizer": {"eta": 0.1, "momentum": 0.9, "batch_size": 20, "epochs": 4},
  "probe": {"batch_size": 32}
})";

const char* kSmallTwoLayer = R"({
  "seed": 5,
  "dataset": {"kind": "synthetic_sphere", "n": 40, "d": 8, "test_n": 20},
  "noise": {"level": 0.2},
  "model": {"kind": "two_layer_relu", "m": 256, "kappa": 1.0},
  "optimizer": {"eta": 0.2, "epochs": 3},
  "probe": {"batch_size": 16}
})";

void expect_invalid(const std::string& json, const std::string& fragment) {
  try {
    parse_run_config(json);
    FAIL() << "expected InvalidArgument for " << json;
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

}  // namespace

// --- config ----------------------------------------------------------------------

TEST(RunConfig, ParsesAllSections) {
  const auto c = parse_run_config(kSmallMlp);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.effective_run_id(), "run-4");
  EXPECT_EQ(c.dataset.n, 120u);
  EXPECT_EQ(c.dataset.test_n, 60u);
  EXPECT_EQ(c.noise.level, 0.4);
  EXPECT_EQ(c.model.hidden_sizes, std::vector<std::size_t>{16});
  EXPECT_EQ(c.optimizer.batch_size, 20u);
  EXPECT_EQ(c.probe.batch_size, 32u);
}

TEST(RunConfig, UnknownKeysRejectedWithPath) {
  expect_invalid(R"({"seed": 1, "bogus": 2})", "bogus");
  expect_invalid(R"({"optimizer": {"eta": 0.1, "lr": 0.2}})", "optimizer.lr");
}

TEST(RunConfig, TypeAndRangeErrors) {
  expect_invalid(R"({"seed": "one"})", "seed");
  expect_invalid(R"({"dataset": {"n": -5}})", "dataset.n");
  expect_invalid(R"({"dataset": {"n": 2.5}})", "dataset.n");
  expect_invalid(R"({"optimizer": {"eta": 0}})", "eta");
  expect_invalid(R"({"noise": {"level": 1.5}})", "noise");
  expect_invalid(R"({"model": {"kind": "cnn"}})", "model.kind");
  EXPECT_THROW(parse_run_config("{not json"), InvalidArgument);
}

TEST(RunConfig, OverridesApplyAndValidate) {
  auto c = parse_run_config(kSmallMlp);
  apply_override(c, "optimizer.eta=0.05");
  apply_override(c, "seed=9");
  apply_override(c, "model.hidden_sizes=[8,8]");
  apply_override(c, "run_id=custom");
  EXPECT_EQ(c.optimizer.eta, 0.05);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.model.hidden_sizes, (std::vector<std::size_t>{8, 8}));
  EXPECT_EQ(c.effective_run_id(), "custom");
  EXPECT_THROW(apply_override(c, "optimizer.nope=1"), InvalidArgument);
  EXPECT_THROW(apply_override(c, "no_equals_sign"), InvalidArgument);
  EXPECT_THROW(apply_override(c, "optimizer.eta=-1"), InvalidArgument);
}

TEST(RunConfig, JsonRoundTrip) {
  const auto c = parse_run_config(kSmallTwoLayer);
  const auto back = parse_run_config(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.model.m, 256u);
}

// --- run-log CSV ---------------------------------------------------------------

TEST(RunLog, FormatReal) {
  EXPECT_EQ(format_real(0.1), "0.10000000000000001");
  EXPECT_EQ(format_real(1.0), "1");
  EXPECT_EQ(std::stod(format_real(M_PI)), M_PI);
}

TEST(RunLog, RoundTripWithAbsentFields) {
  CheckpointRecord a;
  a.run_id = "x";
  a.epoch = 1;
  a.lr = 0.1;
  a.train_loss = 1.0 / 3.0;
  a.train_acc = 0.5;
  a.train_acc_clean = 0.75;
  a.test_acc = 0.25;
  a.zeta_increment = -1e-300;
  a.zeta = 2.0 / 7.0;
  CheckpointRecord b = a;
  b.epoch = 2;
  b.train_acc_clean.reset();
  b.test_acc.reset();
  b.zeta.reset();
  b.zeta_increment.reset();
  std::stringstream buf;
  write_run_log(buf, {a, b});
  const std::string text = buf.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), kRunLogHeader);
  const auto back = read_run_log(buf, "mem");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].train_loss, a.train_loss);
  EXPECT_EQ(back[0].zeta, a.zeta);
  EXPECT_EQ(back[0].zeta_increment, a.zeta_increment);
  EXPECT_FALSE(back[0].train_acc_noisy);
  EXPECT_FALSE(back[1].test_acc);
  EXPECT_FALSE(back[1].zeta);
  EXPECT_EQ(back[1].run_id, "x");
}

TEST(RunLog, MalformedInputNamesLine) {
  std::stringstream bad_header("run_id,epoch\n");
  EXPECT_THROW(read_run_log(bad_header, "f.csv"), FormatError);
  std::stringstream bad_row(std::string(kRunLogHeader) + "\nr,1,0.1,abc,0.5,,,,,\n");
  try {
    read_run_log(bad_row, "f.csv");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("f.csv:2"), std::string::npos) << e.what();
  }
  std::stringstream short_row(std::string(kRunLogHeader) + "\nr,1,0.1\n");
  EXPECT_THROW(read_run_log(short_row, "f.csv"), FormatError);
}

TEST(RunLog, WritesToNewDirectory) {
  const auto dir = std::filesystem::temp_directory_path() / "memlab_test_runlog" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  const auto path = dir / "log.csv";
  write_run_log(path, {});
  EXPECT_TRUE(read_run_log(path).empty());
}

// --- execution -------------------------------------------------------------------

TEST(ExecuteRun, MlpRecordsComplete) {
  const auto c = parse_run_config(kSmallMlp);
  const auto records = execute_run(c);
  ASSERT_EQ(records.size(), 4u);
  double sum = 0.0;
  for (std::size_t e = 0; e < records.size(); ++e) {
    const auto& r = records[e];
    EXPECT_EQ(r.epoch, e + 1);
    EXPECT_EQ(r.run_id, "run-4");
    ASSERT_TRUE(r.test_acc && r.zeta && r.zeta_increment && r.train_acc_clean && r.train_acc_noisy);
    sum += *r.zeta_increment;
    EXPECT_NEAR(*r.zeta, sum / double(e + 1), 1e-12);
    EXPECT_GE(r.train_acc, 0.0);
    EXPECT_LE(r.train_acc, 1.0);
  }
}

TEST(ExecuteRun, TwoLayerRecordsComplete) {
  const auto records = execute_run(parse_run_config(kSmallTwoLayer));
  ASSERT_EQ(records.size(), 3u);
  for (const auto& r : records) {
    EXPECT_TRUE(r.test_acc && r.zeta && r.train_acc_noisy);
    EXPECT_TRUE(std::isfinite(r.train_loss));
  }
}

TEST(ExecuteRun, ZeroEpochsGivesHeaderOnly) {
  auto c = parse_run_config(kSmallMlp);
  apply_override(c, "optimizer.epochs=0");
  const auto records = execute_run(c);
  EXPECT_TRUE(records.empty());
  std::stringstream buf;
  write_run_log(buf, records);
  EXPECT_EQ(buf.str(), std::string(kRunLogHeader) + "\n");
}

TEST(ExecuteRun, ByteIdenticalReruns) {
  const auto c = parse_run_config(kSmallMlp);
  std::stringstream a, b;
  write_run_log(a, execute_run(c));
  write_run_log(b, execute_run(c));
  EXPECT_EQ(a.str(), b.str());
}

TEST(ExecuteRun, ProbeDoesNotChangeTraining) {
  auto on = parse_run_config(kSmallMlp);
  auto off = on;
  apply_override(off, "probe.enabled=false");
  const auto a = execute_run(on), b = execute_run(off);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t e = 0; e < a.size(); ++e) {
    EXPECT_EQ(a[e].train_loss, b[e].train_loss);
    EXPECT_EQ(a[e].test_acc, b[e].test_acc);
    EXPECT_FALSE(b[e].zeta);
  }
}

TEST(ExecuteRun, DivergenceIsNumericError) {
  auto c = parse_run_config(kSmallMlp);
  apply_override(c, "optimizer.eta=1e12");
  apply_override(c, "optimizer.momentum=0");
  apply_override(c, "optimizer.epochs=20");
  EXPECT_THROW(execute_run(c), NumericError);
}

TEST(BuildRunData, NoiseOnTrainOnly) {
  const auto data = build_run_data(parse_run_config(kSmallMlp));
  EXPECT_EQ(data.train.size(), 120u);
  ASSERT_TRUE(data.test);
  EXPECT_EQ(data.test->size(), 60u);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    flipped += data.train.assigned_labels[i] != data.train.true_labels[i];
  }
  EXPECT_GT(flipped, 0u);
  EXPECT_EQ(data.test->assigned_labels, data.test->true_labels);
}
