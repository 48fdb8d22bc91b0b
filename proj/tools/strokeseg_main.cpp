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

// strokeseg: split | train | infer | evaluate | synth

#include "strokeseg/config.hpp"
#include "strokeseg/errors.hpp"
#include "strokeseg/inference.hpp"
#include "strokeseg/manifest.hpp"
#include "strokeseg/metrics.hpp"
#include "strokeseg/nifti.hpp"
#include "strokeseg/synthetic.hpp"
#include "strokeseg/training.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace strokeseg;

namespace {

void log_line(const std::string& msg) { std::cerr << "[strokeseg] " << msg << std::endl; }

// Persists the resolved configuration and its hash next to the outputs.
void echo_config(const config::PipelineConfig& cfg, const fs::path& dir, const std::string& command) {
  fs::create_directories(dir);
  const auto doc = config::to_json(cfg);
  const auto hash = config::content_hash(doc);
  nlohmann::json out = {{"command", command}, {"config_hash", hash}, {"config", doc}};
  std::ofstream(dir / ("resolved_config." + command + ".json")) << out.dump(2) << "\n";
  log_line("config hash " + hash);
}

int cmd_split(const fs::path& in, int k, std::uint64_t seed, const fs::path& out) {
  const auto manifest = io::load_manifest(in);
  const auto split = train::make_folds(manifest, k, seed);
  io::save_manifest(split, out);
  for (int f = 0; f < k; ++f) {
    log_line("fold " + std::to_string(f) + ": " + std::to_string(split.cases_in_fold(f).size()) + " cases");
  }
  return 0;
}

int cmd_train(const fs::path& config_path, std::optional<int> fold, bool all_folds, int repeats) {
  const auto cfg = config::load_config(config_path);
  if (cfg.manifest.empty()) throw ConfigError("config.manifest is required for training");
  const auto manifest = io::load_manifest(cfg.manifest);
  manifest.validate(cfg.train.folds);
  manifest.check_files_exist();
  echo_config(cfg, cfg.output_dir, "train");

  std::vector<train::FoldResult> results;
  if (all_folds) {
    results = train::run_crossval(manifest, cfg.train, repeats, log_line);
  } else {
    for (int r = 0; r < repeats; ++r) results.push_back(train::train_fold(manifest, *fold, cfg.train, r, log_line));
  }
  const auto table = train::summary_table(results);
  std::cout << table;
  std::ofstream(cfg.output_dir / "crossval_summary.txt") << table;
  std::ofstream list(cfg.output_dir / "best_checkpoints.txt");
  for (const auto& r : results) list << fs::absolute(r.checkpoint_path).string() << "\n";
  return 0;
}

int cmd_infer(const fs::path& config_path, const std::vector<fs::path>& checkpoints,
              const std::optional<fs::path>& manifest_path, const fs::path& out_dir, bool keep_going,
              bool probabilities) {
  const auto cfg = config::load_config(config_path);
  const fs::path mpath = manifest_path ? *manifest_path : cfg.manifest;
  if (mpath.empty()) throw ConfigError("no manifest given (--manifest or config.manifest)");
  const auto manifest = io::load_manifest(mpath);

  // Loads every checkpoint before touching any case.
  infer::Ensemble ensemble(infer::EnsembleSpec{checkpoints, cfg.train.network});
  log_line("ensemble of " + std::to_string(ensemble.size()) + " model(s)");
  echo_config(cfg, out_dir, "infer");

  int failures = 0;
  for (const auto& rec : manifest.cases) {
    try {
      const auto pc = prep::preprocess_case(rec, cfg.train.preprocess);
      const auto pm = ensemble.predict(pc.image, cfg.inference.window);
      const auto mask = infer::restore_native(infer::binarize(pm), pc.native);
      io::save_volume(mask, out_dir / (rec.case_id + ".nii.gz"));
      if (probabilities || cfg.inference.export_probabilities) {
        io::save_volume(infer::foreground_probability(pm), out_dir / (rec.case_id + "_prob.nii.gz"),
                        io::StorageType::Float32);
      }
      log_line(rec.case_id + ": " + std::to_string(mask.foreground_count()) + " lesion voxels");
    } catch (const Error& e) {
      ++failures;
      log_line(rec.case_id + ": FAILED: " + e.what());
      if (!keep_going) throw;
    }
  }
  return failures == 0 ? 0 : 1;
}

int cmd_evaluate(const fs::path& pred_dir, const fs::path& manifest_path, const std::optional<fs::path>& config_path,
                 std::optional<int> connectivity, std::optional<std::string> matching, bool allow_missing,
                 const std::optional<fs::path>& out_dir) {
  metrics::EvaluateOptions opts;
  if (config_path) {
    const auto cfg = config::load_config(*config_path);
    opts.connectivity = cfg.metrics.connectivity;
    opts.matching = cfg.metrics.matching;
    echo_config(cfg, out_dir.value_or(pred_dir), "evaluate");
  }
  if (connectivity) opts.connectivity = metrics::connectivity_from_int(*connectivity);
  if (matching) {
    if (*matching == "any_overlap") opts.matching = metrics::LesionMatching::AnyOverlap;
    else if (*matching == "one_to_one") opts.matching = metrics::LesionMatching::OneToOne;
    else throw ConfigError("--matching must be any_overlap or one_to_one");
  }
  opts.allow_missing = allow_missing;
  const auto manifest = io::load_manifest(manifest_path);
  const auto report = metrics::evaluate_cases(pred_dir, manifest, opts);
  metrics::write_report(report, out_dir.value_or(pred_dir));
  for (const auto& id : report.missing) log_line("missing prediction: " + id);
  std::cout << "dice lesion_f1 avd_ml lesion_count_diff\n" << report.summary_row() << "\n";
  return 0;
}

int cmd_synth(const fs::path& out, int cases, std::uint64_t seed, const std::vector<std::int64_t>& dims,
              const std::vector<double>& spacing) {
  synth::SyntheticOptions opts;
  opts.dims = {dims[0], dims[1], dims[2]};
  opts.spacing = Vec3(spacing[0], spacing[1], spacing[2]);
  const auto m = synth::write_dataset(out, cases, opts, seed);
  log_line("wrote " + std::to_string(m.cases.size()) + " cases and " + (out / "manifest.json").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D stroke lesion segmentation: split, train, infer, evaluate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "strokeseg 0.1.0");

  auto* split = app.add_subcommand("split", "assign labeled cases to k random folds");
  fs::path split_in, split_out;
  int split_k = 5;
  std::uint64_t split_seed = 0;
  split->add_option("--manifest", split_in, "input manifest")->required()->check(CLI::ExistingFile);
  split->add_option("--k", split_k, "number of folds")->capture_default_str();
  split->add_option("--seed", split_seed, "random seed")->capture_default_str();
  split->add_option("--out", split_out, "output manifest")->required();

  auto* trn = app.add_subcommand("train", "train one fold or full cross-validation");
  fs::path train_cfg;
  std::optional<int> train_fold;
  bool train_all = false;
  int train_repeats = 1;
  trn->add_option("--config", train_cfg, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  auto* fold_opt = trn->add_option("--fold", train_fold, "fold index");
  auto* all_opt = trn->add_flag("--all-folds", train_all, "train every fold");
  fold_opt->excludes(all_opt);
  trn->add_option("--repeats", train_repeats, "independent runs per fold")->capture_default_str()->check(CLI::PositiveNumber);

  auto* inf = app.add_subcommand("infer", "predict native-space masks with a checkpoint ensemble");
  fs::path infer_cfg, infer_out;
  std::vector<fs::path> infer_ckpts;
  std::optional<fs::path> infer_manifest;
  bool keep_going = false, export_probs = false;
  inf->add_option("--config", infer_cfg, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  inf->add_option("--checkpoint", infer_ckpts, "checkpoint or weights file (repeatable)")->required()->check(CLI::ExistingFile);
  inf->add_option("--manifest", infer_manifest, "cases to predict (default: config manifest)")->check(CLI::ExistingFile);
  inf->add_option("--out", infer_out, "output directory")->required();
  inf->add_flag("--keep-going", keep_going, "continue past unreadable cases");
  inf->add_flag("--probabilities", export_probs, "also write foreground probability maps");

  auto* ev = app.add_subcommand("evaluate", "score predictions against ground truth");
  fs::path eval_pred, eval_manifest;
  std::optional<fs::path> eval_cfg, eval_out;
  std::optional<int> eval_conn;
  std::optional<std::string> eval_matching;
  bool allow_missing = false;
  ev->add_option("--pred", eval_pred, "directory of <case_id>.nii.gz masks")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--manifest", eval_manifest, "ground-truth manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("--config", eval_cfg, "pipeline config (metrics section)")->check(CLI::ExistingFile);
  ev->add_option("--connectivity", eval_conn, "6, 18 or 26");
  ev->add_option("--matching", eval_matching, "any_overlap or one_to_one");
  ev->add_flag("--allow-missing", allow_missing, "score available predictions only");
  ev->add_option("--out", eval_out, "report directory (default: --pred)");

  auto* syn = app.add_subcommand("synth", "write a synthetic sphere-lesion dataset");
  fs::path synth_out;
  int synth_cases = 8;
  std::uint64_t synth_seed = 0;
  std::vector<std::int64_t> synth_dims{32, 32, 24};
  std::vector<double> synth_spacing{2.0, 2.0, 2.0};
  syn->add_option("--out", synth_out, "output directory")->required();
  syn->add_option("--cases", synth_cases, "number of cases")->capture_default_str();
  syn->add_option("--seed", synth_seed, "random seed")->capture_default_str();
  syn->add_option("--dims", synth_dims, "voxels x y z")->expected(3)->capture_default_str();
  syn->add_option("--spacing", synth_spacing, "mm x y z")->expected(3)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (const char* dev = std::getenv("STROKESEG_DEVICE"); dev && std::string(dev) != "cpu") {
    std::cerr << "strokeseg: unsupported device '" << dev << "' (only 'cpu' is available)\n";
    return 2;
  }

  try {
    if (*split) return cmd_split(split_in, split_k, split_seed, split_out);
    if (*trn) {
      if (!train_fold && !train_all) throw ConfigError("train needs --fold or --all-folds");
      return cmd_train(train_cfg, train_fold, train_all, train_repeats);
    }
    if (*inf) return cmd_infer(infer_cfg, infer_ckpts, infer_manifest, infer_out, keep_going, export_probs);
    if (*ev) return cmd_evaluate(eval_pred, eval_manifest, eval_cfg, eval_conn, eval_matching, allow_missing, eval_out);
    if (*syn) return cmd_synth(synth_out, synth_cases, synth_seed, synth_dims, synth_spacing);
  } catch (const std::exception& e) {
    std::cerr << "strokeseg: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
