// Copyright 2026 The strokeseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "strokeseg/errors.hpp"
#include "strokeseg/optimizer.hpp"
#include "strokeseg/synthetic.hpp"
#include "strokeseg/training.hpp"
#include "strokeseg/weights_archive.hpp"
#include "unit/test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

using namespace strokeseg;
using namespace strokeseg::train;
using testutil::TempDir;

namespace {

io::DatasetManifest ids_only(int n) {
  io::DatasetManifest m;
  for (int i = 0; i < n; ++i) {
    const std::string id = "c" + std::to_string(i);
    m.cases.push_back({id, id + "_dwi.nii", id + "_adc.nii", std::nullopt, id + "_msk.nii"});
  }
  return m;
}

TrainConfig tiny_config(const std::filesystem::path& ckpt) {
  TrainConfig c;
  c.epochs = 4;
  c.batch_size_global = 2;
  c.folds = 2;
  c.val_interval = 2;
  c.seed = 11;
  c.checkpoint_dir = ckpt;
  c.network.init_filters = 4;
  c.network.blocks_down = {1, 1};
  c.network.blocks_up = {1};
  c.network.ds_heads = 1;
  c.loss.num_ds_levels = 2;
  c.crop.size = {16, 16, 16};
  c.augment = aug::AugmentConfig::none();
  return c;
}

std::vector<prep::PreprocessedCase> tiny_cases(const std::filesystem::path& dir, int n) {
  synth::SyntheticOptions o;
  o.dims = {16, 16, 16};
  o.spacing = Vec3(1, 1, 1);
  o.min_radius_mm = 2.0;
  o.max_radius_mm = 4.0;
  const auto m = synth::write_dataset(dir, n, o, 3);
  std::vector<prep::PreprocessedCase> out;
  for (const auto& c : m.cases) out.push_back(prep::preprocess_case(c));
  return out;
}

std::vector<std::vector<float>> snapshot(nn::SegResNet<float>& net) {
  std::vector<std::vector<float>> v;
  for (const auto* p : net.parameters()) v.push_back(p->value);
  return v;
}

}  // namespace

TEST(AdamW, SingleStepMatchesHandComputation) {
  nn::Parameter<double> p("w", {2});
  p.value = {1.0, -2.0};
  p.grad = {0.5, 0.0};
  nn::AdamW<double> opt({0.9, 0.999, 1e-8, 0.01});
  opt.step({&p}, 0.1);
  // Bias-corrected m/sqrt(v) is sign(g) on the first step.
  EXPECT_NEAR(p.value[0], 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value[1], -2.0 * (1 - 0.1 * 0.01), 1e-15);
  EXPECT_EQ(opt.step_count(), 1);
  EXPECT_NEAR(opt.state().at("w").m[0], 0.05, 1e-15);
  EXPECT_NEAR(opt.state().at("w").v[0], 0.00025, 1e-15);

  // Second step with the same gradient: mhat = 0.5, vhat = 0.25 again.
  const double before = p.value[0];
  opt.step({&p}, 0.1);
  EXPECT_NEAR(p.value[0], before * (1 - 0.001) - 0.1 * 0.5 / (0.5 + 1e-8), 1e-14);
}

TEST(AdamW, GradScaleAppliesBeforeMoments) {
  nn::Parameter<double> a("w", {1}), b("w", {1});
  a.value = b.value = {0.0};
  a.grad = {4.0};
  b.grad = {1.0};
  nn::AdamW<double> oa({0.9, 0.999, 1e-8, 0.0}), ob({0.9, 0.999, 1e-8, 0.0});
  oa.step({&a}, 0.1, 0.25);
  ob.step({&b}, 0.1);
  EXPECT_DOUBLE_EQ(oa.state().at("w").m[0], ob.state().at("w").m[0]);
}

TEST(CosineLr, EndpointsAndMidpoint) {
  EXPECT_EQ(cosine_lr(0, 1000, 2e-4), 2e-4);
  EXPECT_EQ(cosine_lr(1000, 1000, 2e-4), 0.0);
  EXPECT_NEAR(cosine_lr(500, 1000, 2e-4), 1e-4, 1e-12);
  double prev = 1.0;
  for (int e = 0; e <= 1000; ++e) {
    const double lr = cosine_lr(e, 1000, 2e-4);
    ASSERT_LE(lr, prev);
    prev = lr;
  }
  EXPECT_THROW(cosine_lr(-1, 10, 1e-3), PreconditionError);
  EXPECT_THROW(cosine_lr(11, 10, 1e-3), PreconditionError);
  EXPECT_THROW(cosine_lr(0, 0, 1e-3), ValidationError);
}

TEST(Folds, BalancedPartition) {
  const auto m = make_folds(ids_only(250), 5, 1);
  for (int f = 0; f < 5; ++f) EXPECT_EQ(m.cases_in_fold(f).size(), 50u);
  const auto m7 = make_folds(ids_only(7), 5, 1);
  std::multiset<std::size_t> sizes;
  for (int f = 0; f < 5; ++f) sizes.insert(m7.cases_in_fold(f).size());
  EXPECT_EQ(sizes, (std::multiset<std::size_t>{1, 1, 1, 2, 2}));
}

TEST(Folds, SeedDeterminism) {
  EXPECT_EQ(make_folds(ids_only(40), 5, 9).fold_of, make_folds(ids_only(40), 5, 9).fold_of);
  EXPECT_NE(make_folds(ids_only(40), 5, 9).fold_of, make_folds(ids_only(40), 5, 10).fold_of);
}

TEST(Folds, TooFewCasesAndUnlabeledCases) {
  EXPECT_THROW(make_folds(ids_only(3), 5, 0), ValidationError);
  EXPECT_THROW(make_folds(ids_only(10), 1, 0), ValidationError);
  auto m = ids_only(6);
  m.cases.push_back({"test", "t_dwi.nii", "t_adc.nii", std::nullopt, std::nullopt});
  const auto split = make_folds(m, 3, 0);
  EXPECT_EQ(split.fold_of.size(), 6u);
  EXPECT_EQ(split.fold_of.count("test"), 0u);
}

TEST(Folds, HygieneHoldsAndDetectsBrokenPartition) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = make_folds(ids_only(23), 5, seed);
    for (int f = 0; f < 5; ++f) EXPECT_NO_THROW(check_split_hygiene(m, f));
  }
  auto m = make_folds(ids_only(10), 5, 0);
  EXPECT_THROW(check_split_hygiene(m, 5), ValidationError);
  m.fold_of.erase("c0");
  EXPECT_THROW(check_split_hygiene(m, 0), ValidationError);
}

TEST(TrainConfigTest, Validation) {
  TempDir dir("train");
  auto c = tiny_config(dir.path());
  EXPECT_NO_THROW(c.validate());
  c.loss.num_ds_levels = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config(dir.path());
  c.crop.size = {16, 16, 15};
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config(dir.path());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(TrainerTest, ResumeMatchesUninterruptedRun) {
  TempDir dir("train");
  const auto cfg = tiny_config(dir / "ckpt");
  const auto cases = tiny_cases(dir / "data", 2);

  Trainer full(cfg, cases, 5);
  std::vector<double> full_losses;
  for (int e = 1; e <= 4; ++e) full_losses.push_back(full.train_epoch(e));

  Trainer first(cfg, cases, 5);
  CheckpointState st;
  for (int e = 1; e <= 2; ++e) EXPECT_EQ(first.train_epoch(e), full_losses[e - 1]);
  st.epoch = 2;
  st.config_hash = config_hash(cfg);
  save_checkpoint(dir / "mid.ckpt", first.network(), first.optimizer(), st);

  Trainer second(cfg, cases, 77);  // different init, overwritten by the checkpoint
  const auto restored = load_checkpoint(dir / "mid.ckpt", second.network(), second.optimizer());
  EXPECT_EQ(restored.epoch, 2);
  EXPECT_EQ(second.optimizer().step_count(), first.optimizer().step_count());
  for (int e = 3; e <= 4; ++e) {
    const double l = second.train_epoch(e);
    EXPECT_NEAR(l, full_losses[e - 1], 1e-6 * std::abs(full_losses[e - 1]));
  }
  const auto a = snapshot(full.network()), b = snapshot(second.network());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      ASSERT_NEAR(a[i][j], b[i][j], 1e-6 * std::max(1.0f, std::abs(a[i][j])));
    }
  }
}

TEST(TrainerTest, WorkerCountDoesNotChangeResult) {
  TempDir dir("train");
  auto cfg = tiny_config(dir / "ckpt");
  cfg.augment = aug::AugmentConfig{};
  const auto cases = tiny_cases(dir / "data", 3);
  Trainer a(cfg, cases, 1);
  cfg.workers = 3;
  Trainer b(cfg, cases, 1);
  EXPECT_EQ(a.train_epoch(1), b.train_epoch(1));
  EXPECT_EQ(snapshot(a.network()), snapshot(b.network()));
}

TEST(TrainerTest, RejectsUnlabeledCaseAndBadEpoch) {
  TempDir dir("train");
  const auto cfg = tiny_config(dir / "ckpt");
  auto cases = tiny_cases(dir / "data", 1);
  Trainer t(cfg, cases, 1);
  EXPECT_THROW(t.train_epoch(0), PreconditionError);
  EXPECT_THROW(t.train_epoch(5), PreconditionError);
  cases[0].mask.reset();
  EXPECT_THROW(Trainer(cfg, cases, 1), ValidationError);
  EXPECT_THROW(Trainer(cfg, {}, 1), ValidationError);
}

TEST(TrainFold, SingleEpochWritesArtifactsAndResumes) {
  TempDir dir("train");
  auto cfg = tiny_config(dir / "ckpt");
  cfg.epochs = 1;
  synth::SyntheticOptions o;
  o.dims = {16, 16, 16};
  o.spacing = Vec3(1, 1, 1);
  const auto m = make_folds(synth::write_dataset(dir / "data", 4, o, 2), 2, 0);
  std::vector<std::string> log;
  const auto r = train_fold(m, 1, cfg, 0, [&](const std::string& s) { log.push_back(s); });
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].epoch, 1);
  EXPECT_DOUBLE_EQ(r.history[0].lr, 2e-4);
  ASSERT_TRUE(r.history[0].val_dice.has_value());
  EXPECT_TRUE(std::filesystem::exists(r.checkpoint_path));
  EXPECT_TRUE(std::filesystem::exists(run_directory(cfg, 1, 0) / "history.csv"));
  EXPECT_EQ(r.checkpoint_path.parent_path(), run_directory(cfg, 1, 0));

  // Rerunning picks up the finished checkpoint and trains nothing more.
  const auto again = train_fold(m, 1, cfg, 0);
  EXPECT_EQ(again.history.size(), 1u);
  EXPECT_EQ(again.best_val_dice, r.best_val_dice);

  EXPECT_THROW(train_fold(m, 2, cfg, 0), ValidationError);
  EXPECT_THROW(train_fold(ids_only(4), 0, cfg, 0), ValidationError);
}

TEST(Checkpoint, WeightsArchiveIsNotACheckpoint) {
  TempDir dir("train");
  const auto cfg = tiny_config(dir.path());
  nn::SegResNet<float> net(cfg.network, 1);
  nn::AdamW<float> opt;
  nn::save_weights(net, dir / "w.ssw");
  EXPECT_THROW(load_checkpoint(dir / "w.ssw", net, opt), ArchiveError);
}

TEST(Summary, TableAndMean) {
  std::vector<FoldResult> rs;
  for (int r = 0; r < 2; ++r)
    for (int f = 0; f < 3; ++f) {
      FoldResult x;
      x.fold = f;
      x.repeat = r;
      x.best_val_dice = 0.5 + 0.1 * f + 0.01 * r;
      rs.push_back(x);
    }
  EXPECT_NEAR(mean_best_dice(rs), 0.605, 1e-12);
  EXPECT_EQ(mean_best_dice({}), 0.0);
  const auto table = summary_table(rs);
  EXPECT_NE(table.find("fold 3"), std::string::npos);
  EXPECT_NE(table.find("0.6000"), std::string::npos);  // repeat 0 average
  EXPECT_NE(table.find("mean over 6 models: 0.6050"), std::string::npos) << table;
}

TEST(ConfigHash, StableAndSensitive) {
  TempDir dir("train");
  auto a = tiny_config(dir.path());
  auto b = a;
  b.workers = 4;
  b.checkpoint_dir = "/elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.lr0 = 1e-3;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(History, CsvHasHeaderAndBlankForSkippedValidation) {
  TempDir dir("train");
  write_history_csv({{1, 2e-4, 0.5, std::nullopt}, {2, 1e-4, 0.25, 0.75}}, dir / "h.csv");
  std::ifstream in(dir / "h.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "epoch,lr,train_loss,val_dice\n1,0.0002,0.5,\n2,0.0001,0.25,0.750000\n");
}
