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

#pragma once

#include "strokeseg/augmentation.hpp"
#include "strokeseg/inference.hpp"
#include "strokeseg/loss.hpp"
#include "strokeseg/manifest.hpp"
#include "strokeseg/optimizer.hpp"
#include "strokeseg/preprocessing.hpp"
#include "strokeseg/segresnet.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace strokeseg::train {

struct TrainConfig {
  int epochs = 1000;
  double lr0 = 2e-4;
  double weight_decay = 1e-5;
  /// Samples per optimizer step, realised by gradient accumulation.
  int batch_size_global = 8;
  int folds = 5;
  std::uint64_t seed = 0;
  int val_interval = 5;
  int crops_per_case = 1;
  /// Parallel sample preparation threads; results are assembled by index.
  int workers = 1;
  /// Continue from latest.ckpt when one with the same config hash exists.
  bool resume = true;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::optional<std::filesystem::path> pretrained_weights;

  nn::NetworkConfig network;
  loss::LossConfig loss;
  aug::AugmentConfig augment;
  prep::CropSpec crop;
  prep::PreprocessOptions preprocess;
  /// Tile overlap for whole-volume validation; the window is the crop size.
  double validation_overlap = 0.5;

  void validate() const;
};

/// lr0 * (1 + cos(pi * epoch / epochs)) / 2 for epoch in [0, epochs].
double cosine_lr(int epoch, int epochs, double lr0);
double cosine_lr(int epoch, const TrainConfig& cfg);

/// Random partition of the labeled cases into k folds whose sizes differ by
/// at most one. Unlabeled cases are kept but not assigned.
io::DatasetManifest make_folds(const io::DatasetManifest& manifest, int k, std::uint64_t seed);

/// Throws ValidationError unless train and validation ids for `fold` are
/// disjoint and the folds partition the labeled cases.
void check_split_hygiene(const io::DatasetManifest& manifest, int fold);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_dice;
};

struct FoldResult {
  int fold = 0;
  int repeat = 0;
  double best_val_dice = 0.0;
  int best_epoch = 0;
  std::filesystem::path checkpoint_path;  // best.ckpt
  std::filesystem::path latest_path;
  std::vector<EpochRecord> history;
};

using Logger = std::function<void(const std::string&)>;

/// Optimisation state over a fixed set of preprocessed training cases.
///
/// Sample i of epoch e is drawn from its own random stream, so results do
/// not depend on `workers` or on where a run was resumed.
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<prep::PreprocessedCase> cases, std::uint64_t seed);

  /// Runs epoch `epoch` (1-based) at lr = cosine_lr(epoch - 1). Returns the
  /// mean per-sample loss. Throws TrainingError on a non-finite loss.
  double train_epoch(int epoch);

  /// Mean Dice of argmax predictions over whole volumes, on the working grid.
  double evaluate(const std::vector<prep::PreprocessedCase>& cases);

  nn::SegResNet<float>& network() { return net_; }
  nn::AdamW<float>& optimizer() { return opt_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t samples_per_epoch() const;

  void set_logger(Logger log) { log_ = std::move(log); }

 private:
  struct Sample {
    nn::Tensor<float> image;
    loss::LabelBatch target;
  };
  Sample make_sample(int epoch, std::size_t index) const;

  TrainConfig cfg_;
  std::vector<prep::PreprocessedCase> cases_;
  std::uint64_t seed_;
  nn::SegResNet<float> net_;
  nn::AdamW<float> opt_;
  Logger log_;
};

struct CheckpointState {
  int epoch = 0;
  double val_dice = 0.0;
  double best_val_dice = 0.0;
  int best_epoch = 0;
  std::string config_hash;
  std::vector<EpochRecord> history;
};

void save_checkpoint(const std::filesystem::path& path, const nn::SegResNet<float>& net,
                     const nn::AdamW<float>& opt, const CheckpointState& state);
/// Restores weights and optimizer moments strictly; returns the metadata.
CheckpointState load_checkpoint(const std::filesystem::path& path, nn::SegResNet<float>& net,
                                nn::AdamW<float>& opt);

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

/// Content hash of the training-relevant configuration.
std::string config_hash(const TrainConfig& cfg);

/// `<checkpoint_dir>/fold<fold>_r<repeat>`.
std::filesystem::path run_directory(const TrainConfig& cfg, int fold, int repeat);

/// Trains on every labeled case outside `fold` and validates on the cases in
/// it. `repeat` only selects the run directory and seed (cfg.seed ^ repeat).
FoldResult train_fold(const io::DatasetManifest& manifest, int fold, const TrainConfig& cfg, int repeat = 0,
                      const Logger& log = {});

std::vector<FoldResult> run_crossval(const io::DatasetManifest& manifest, const TrainConfig& cfg, int repeats,
                                     const Logger& log = {});

/// Per-run rows of per-fold best Dice plus a mean column, and an overall mean.
std::string summary_table(const std::vector<FoldResult>& results);
double mean_best_dice(const std::vector<FoldResult>& results);

}  // namespace strokeseg::train
