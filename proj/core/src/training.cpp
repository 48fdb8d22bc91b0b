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

#include "strokeseg/training.hpp"

#include "strokeseg/config.hpp"
#include "strokeseg/errors.hpp"
#include "strokeseg/metrics.hpp"
#include "strokeseg/random.hpp"
#include "strokeseg/weights_archive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numbers>
#include <numeric>
#include <set>

namespace strokeseg::train {

namespace {

// Unbiased draw in [0, n) that does not depend on the standard library's
// distribution implementation, so fold splits match across toolchains.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

template <typename V>
void shuffle(std::vector<V>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(rng, i)]);
}

void emit(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

nlohmann::json history_to_json(const std::vector<EpochRecord>& h) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : h) {
    a.push_back({{"epoch", r.epoch},
                 {"lr", r.lr},
                 {"train_loss", r.train_loss},
                 {"val_dice", r.val_dice ? nlohmann::json(*r.val_dice) : nlohmann::json(nullptr)}});
  }
  return a;
}

std::vector<EpochRecord> history_from_json(const nlohmann::json& a) {
  std::vector<EpochRecord> h;
  for (const auto& e : a) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<int>();
    r.lr = e.at("lr").get<double>();
    r.train_loss = e.at("train_loss").get<double>();
    if (!e.at("val_dice").is_null()) r.val_dice = e.at("val_dice").get<double>();
    h.push_back(r);
  }
  return h;
}

// Brings a case up to the crop size so every crop position is valid.
prep::PreprocessedCase pad_for_crop(prep::PreprocessedCase c, const Extent3& crop) {
  c.image = prep::pad_to_min(c.image, crop, 0.0f).first;
  if (c.mask) c.mask = prep::pad_to_min(*c.mask, crop, 0).first;
  return c;
}

std::vector<prep::PreprocessedCase> load_cases(const std::vector<const io::CaseRecord*>& records,
                                               const TrainConfig& cfg) {
  std::vector<prep::PreprocessedCase> out(records.size());
  auto load = [&](std::size_t i) { out[i] = prep::preprocess_case(*records[i], cfg.preprocess); };
  if (cfg.workers <= 1) {
    for (std::size_t i = 0; i < records.size(); ++i) load(i);
  } else {
    for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(cfg.workers)) {
      std::vector<std::future<void>> jobs;
      for (std::size_t i = start; i < std::min(records.size(), start + cfg.workers); ++i) {
        jobs.push_back(std::async(std::launch::async, load, i));
      }
      for (auto& j : jobs) j.get();
    }
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train.epochs must be >= 1");
  if (!(lr0 > 0.0)) throw ValidationError("train.lr0 must be > 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be >= 0");
  if (folds < 2) throw ValidationError("train.folds must be >= 2");
  if (batch_size_global < 1) throw ValidationError("train.batch_size_global must be >= 1");
  if (val_interval < 1) throw ValidationError("train.val_interval must be >= 1");
  if (crops_per_case < 1) throw ValidationError("train.crops_per_case must be >= 1");
  if (workers < 1) throw ValidationError("train.workers must be >= 1");
  if (!(validation_overlap >= 0.0 && validation_overlap < 1.0)) {
    throw ValidationError("train.validation_overlap must lie in [0, 1)");
  }
  if (!(preprocess.target_spacing.minCoeff() > 0.0)) throw ValidationError("preprocess.target_spacing must be > 0");
  network.validate();
  loss.validate();
  augment.validate();
  crop.validate();
  if (loss.num_ds_levels != network.ds_heads + 1) {
    throw ValidationError("loss.num_ds_levels (" + std::to_string(loss.num_ds_levels) +
                          ") must equal network.ds_heads + 1 (" + std::to_string(network.ds_heads + 1) + ")");
  }
  for (int a = 0; a < 3; ++a) {
    if (crop.size[a] % network.divisor() != 0) {
      throw ValidationError("crop.size axis " + std::string(1, "xyz"[a]) + " must be divisible by " +
                            std::to_string(network.divisor()));
    }
  }
}

double cosine_lr(int epoch, int epochs, double lr0) {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (epoch < 0 || epoch > epochs) {
    throw PreconditionError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(epochs) + "]");
  }
  if (epoch == 0) return lr0;
  if (epoch == epochs) return 0.0;
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
}

double cosine_lr(int epoch, const TrainConfig& cfg) { return cosine_lr(epoch, cfg.epochs, cfg.lr0); }

io::DatasetManifest make_folds(const io::DatasetManifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("k must be >= 2");
  std::vector<std::string> ids;
  for (const auto* c : manifest.labeled_cases()) ids.push_back(c->case_id);
  if (static_cast<int>(ids.size()) < k) {
    throw ValidationError("cannot split " + std::to_string(ids.size()) + " labeled cases into " + std::to_string(k) +
                          " folds");
  }
  auto rng = make_stream(seed, StreamPurpose::FoldSplit);
  shuffle(ids, rng);
  io::DatasetManifest out = manifest;
  out.fold_of.clear();
  for (std::size_t i = 0; i < ids.size(); ++i) out.fold_of[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  out.validate(k);
  return out;
}

void check_split_hygiene(const io::DatasetManifest& manifest, int fold) {
  manifest.validate();
  if (fold < 0 || fold >= manifest.fold_count()) {
    throw ValidationError("fold " + std::to_string(fold) + " outside [0, " + std::to_string(manifest.fold_count()) + ")");
  }
  std::set<std::string> train_ids, val_ids;
  for (const auto* c : manifest.cases_outside_fold(fold)) train_ids.insert(c->case_id);
  for (const auto* c : manifest.cases_in_fold(fold)) val_ids.insert(c->case_id);
  for (const auto& id : val_ids) {
    if (train_ids.count(id)) throw ValidationError("case '" + id + "' is in both train and validation of fold " + std::to_string(fold));
  }
  std::set<std::string> labeled;
  for (const auto* c : manifest.labeled_cases()) labeled.insert(c->case_id);
  std::set<std::string> all = train_ids;
  all.insert(val_ids.begin(), val_ids.end());
  if (all != labeled) throw ValidationError("folds do not partition the labeled cases");
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, std::vector<prep::PreprocessedCase> cases, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      seed_(seed),
      net_(cfg_.network, make_stream(seed, StreamPurpose::WeightInit)()),
      opt_(nn::AdamWConfig{0.9, 0.999, 1e-8, cfg_.weight_decay}) {
  cfg_.validate();
  if (cases.empty()) throw ValidationError("training needs at least one case");
  for (auto& c : cases) {
    if (!c.mask) throw ValidationError("training case '" + c.case_id + "' has no label");
    if (c.image.channels() != cfg_.network.in_channels) {
      throw ShapeError("case '" + c.case_id + "' has " + std::to_string(c.image.channels()) +
                       " channels, network expects " + std::to_string(cfg_.network.in_channels));
    }
    cases_.push_back(pad_for_crop(std::move(c), cfg_.crop.size));
  }
}

std::size_t Trainer::samples_per_epoch() const {
  return cases_.size() * static_cast<std::size_t>(cfg_.crops_per_case);
}

Trainer::Sample Trainer::make_sample(int epoch, std::size_t index) const {
  auto order_rng = make_stream(seed_, StreamPurpose::Shuffle, {static_cast<std::uint64_t>(epoch)});
  std::vector<std::size_t> order(samples_per_epoch());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, order_rng);
  const auto& c = cases_[order[index] % cases_.size()];

  auto rng = make_stream(seed_, StreamPurpose::Sample, {static_cast<std::uint64_t>(epoch), index});
  auto cr = prep::sample_crop(c.image, &*c.mask, cfg_.crop, rng);
  aug::Sample s{std::move(cr.image), std::move(cr.mask)};
  s = aug::augment(std::move(s), cfg_.augment, rng);

  Sample out;
  const Extent3 size = s.image.dims();
  out.image = nn::Tensor<float>(1, s.image.channels(), size);
  std::copy(s.image.data.begin(), s.image.data.end(), out.image.data.begin());
  out.target = loss::LabelBatch(1, size);
  std::copy(s.mask->labels.begin(), s.mask->labels.end(), out.target.labels.begin());
  return out;
}

double Trainer::train_epoch(int epoch) {
  if (epoch < 1 || epoch > cfg_.epochs) throw PreconditionError("epoch outside [1, epochs]");
  const double lr = cosine_lr(epoch - 1, cfg_);
  const std::size_t n = samples_per_epoch();
  const std::size_t batch = static_cast<std::size_t>(cfg_.batch_size_global);
  double loss_sum = 0.0;

  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    std::vector<Sample> samples(end - start);
    if (cfg_.workers <= 1) {
      for (std::size_t i = start; i < end; ++i) samples[i - start] = make_sample(epoch, i);
    } else {
      std::vector<std::future<Sample>> jobs;
      for (std::size_t i = start; i < end; ++i) {
        jobs.push_back(std::async(std::launch::async, [this, epoch, i] { return make_sample(epoch, i); }));
      }
      for (std::size_t i = 0; i < jobs.size(); ++i) samples[i] = jobs[i].get();
    }

    net_.zero_grad();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto outputs = net_.forward(samples[i].image, nn::Mode::Train);
      nn::DeepSupervisionOutput<float> grads;
      const double value = loss::deep_supervision_loss(outputs, samples[i].target, cfg_.loss, &grads);
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                            std::to_string(start + i) + " (lr " + fmt("%.3g", lr) + ")");
      }
      net_.backward(grads);
      loss_sum += value;
    }
    opt_.step(net_.parameters(), lr, 1.0 / static_cast<double>(samples.size()));
  }
  net_.release_cache();
  return loss_sum / static_cast<double>(n);
}

double Trainer::evaluate(const std::vector<prep::PreprocessedCase>& cases) {
  if (cases.empty()) throw ValidationError("evaluation needs at least one case");
  const infer::SlidingWindowOptions opts{cfg_.crop.size, cfg_.validation_overlap};
  double sum = 0.0;
  for (const auto& c : cases) {
    if (!c.mask) throw ValidationError("validation case '" + c.case_id + "' has no label");
    const auto pm = infer::sliding_window_predict(net_, c.image, opts);
    sum += metrics::dice_score(infer::binarize(pm), *c.mask);
  }
  return sum / static_cast<double>(cases.size());
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const nn::SegResNet<float>& net,
                     const nn::AdamW<float>& opt, const CheckpointState& state) {
  nn::Archive a = nn::make_weights_archive(net);
  a.kind = "checkpoint";
  for (const auto* p : net.parameters()) {
    auto it = opt.state().find(p->name);
    if (it == opt.state().end()) continue;
    a.tensors.push_back({"optim.m." + p->name, p->shape, nn::DType::Float64, it->second.m});
    a.tensors.push_back({"optim.v." + p->name, p->shape, nn::DType::Float64, it->second.v});
  }
  a.meta = {{"epoch", state.epoch},
            {"val_dice", state.val_dice},
            {"best_val_dice", state.best_val_dice},
            {"best_epoch", state.best_epoch},
            {"optimizer_step", opt.step_count()},
            {"config_hash", state.config_hash},
            {"history", history_to_json(state.history)}};
  nn::write_archive(a, path);
}

CheckpointState load_checkpoint(const std::filesystem::path& path, nn::SegResNet<float>& net,
                                nn::AdamW<float>& opt) {
  const nn::Archive a = nn::read_archive(path);
  if (a.kind != "checkpoint") throw ArchiveError(path.string() + " is a '" + a.kind + "' archive, not a checkpoint");
  if (!(a.network == net.config())) throw ArchiveError(path.string() + ": network configuration differs");
  nn::load_parameters(net, a, true);
  opt.state().clear();
  for (const auto* p : net.parameters()) {
    const auto* m = a.find("optim.m." + p->name);
    const auto* v = a.find("optim.v." + p->name);
    if (!m || !v) continue;
    if (m->values.size() != p->numel() || v->values.size() != p->numel()) {
      throw ArchiveError(path.string() + ": optimizer state for '" + p->name + "' has the wrong size");
    }
    opt.state()[p->name] = {m->values, v->values};
  }
  CheckpointState s;
  try {
    s.epoch = a.meta.at("epoch").get<int>();
    s.val_dice = a.meta.at("val_dice").get<double>();
    s.best_val_dice = a.meta.at("best_val_dice").get<double>();
    s.best_epoch = a.meta.at("best_epoch").get<int>();
    s.config_hash = a.meta.at("config_hash").get<std::string>();
    s.history = history_from_json(a.meta.at("history"));
    opt.set_step_count(a.meta.at("optimizer_step").get<std::int64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(path.string() + ": malformed checkpoint metadata: " + e.what());
  }
  return s;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,lr,train_loss,val_dice\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,", r.epoch, r.lr, r.train_loss);
    out << buf;
    if (r.val_dice) out << fmt("%.6f", *r.val_dice);
    out << "\n";
  }
}

std::string config_hash(const TrainConfig& cfg) {
  config::PipelineConfig p;
  p.train = cfg;
  nlohmann::json j = config::to_json(p);
  // Settings that do not change the numbers produced.
  j["train"].erase("workers");
  j["train"].erase("resume");
  j["train"].erase("checkpoint_dir");
  nlohmann::json relevant = {{"network", j["network"]}, {"train", j["train"]},   {"loss", j["loss"]},
                             {"augment", j["augment"]}, {"crop", j["crop"]},     {"preprocess", j["preprocess"]}};
  return config::content_hash(relevant);
}

std::filesystem::path run_directory(const TrainConfig& cfg, int fold, int repeat) {
  return cfg.checkpoint_dir / ("fold" + std::to_string(fold) + "_r" + std::to_string(repeat));
}

FoldResult train_fold(const io::DatasetManifest& manifest, int fold, const TrainConfig& cfg, int repeat,
                      const Logger& log) {
  cfg.validate();
  if (fold < 0 || fold >= cfg.folds) {
    throw ValidationError("fold " + std::to_string(fold) + " outside [0, " + std::to_string(cfg.folds) + ")");
  }
  manifest.validate(cfg.folds);
  if (manifest.fold_count() == 0) throw ValidationError("manifest has no fold assignment (run split first)");
  check_split_hygiene(manifest, fold);
  const auto train_records = manifest.cases_outside_fold(fold);
  const auto val_records = manifest.cases_in_fold(fold);
  if (train_records.empty()) throw ValidationError("fold " + std::to_string(fold) + " has no training cases");
  if (val_records.empty()) throw ValidationError("fold " + std::to_string(fold) + " has no validation cases");
  for (const auto* r : train_records) {
    if (!r->labeled()) throw ValidationError("training case '" + r->case_id + "' has no label");
  }

  const std::uint64_t seed = cfg.seed ^ static_cast<std::uint64_t>(repeat);
  const std::uint64_t run_seed = make_stream(seed, StreamPurpose::WeightInit, {static_cast<std::uint64_t>(fold)})();
  emit(log, "fold " + std::to_string(fold) + " repeat " + std::to_string(repeat) + ": " +
                std::to_string(train_records.size()) + " train / " + std::to_string(val_records.size()) + " val cases");

  Trainer trainer(cfg, load_cases(train_records, cfg), run_seed);
  trainer.set_logger(log);
  const auto val_cases = load_cases(val_records, cfg);

  const auto dir = run_directory(cfg, fold, repeat);
  std::filesystem::create_directories(dir);
  const auto latest = dir / "latest.ckpt";
  const auto best = dir / "best.ckpt";
  const auto hash = config_hash(cfg);

  CheckpointState state;
  state.config_hash = hash;
  state.best_val_dice = -1.0;
  if (cfg.pretrained_weights) {
    const auto report = nn::load_parameters(trainer.network(), nn::read_archive(*cfg.pretrained_weights), false);
    emit(log, "pretrained: loaded " + std::to_string(report.loaded.size()) + ", skipped " +
                  std::to_string(report.skipped.size()) + ", missing " + std::to_string(report.missing.size()));
    for (const auto& name : report.skipped) emit(log, "  skipped " + name);
  }
  if (cfg.resume && std::filesystem::exists(latest)) {
    const auto saved = nn::read_archive(latest);
    if (saved.meta.value("config_hash", std::string()) == hash) {
      state = load_checkpoint(latest, trainer.network(), trainer.optimizer());
      emit(log, "resuming from " + latest.string() + " at epoch " + std::to_string(state.epoch + 1));
    } else {
      emit(log, "ignoring " + latest.string() + " (config changed)");
    }
  }

  for (int epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cosine_lr(epoch - 1, cfg);
    rec.train_loss = trainer.train_epoch(epoch);
    const bool validate_now = epoch % cfg.val_interval == 0 || epoch == cfg.epochs;
    if (validate_now) rec.val_dice = trainer.evaluate(val_cases);
    state.history.push_back(rec);
    state.epoch = epoch;

    std::string line = "epoch " + std::to_string(epoch) + "/" + std::to_string(cfg.epochs) + " lr " +
                       fmt("%.3e", rec.lr) + " loss " + fmt("%.4f", rec.train_loss);
    if (rec.val_dice) {
      line += " val_dice " + fmt("%.4f", *rec.val_dice);
      state.val_dice = *rec.val_dice;
      if (*rec.val_dice > state.best_val_dice) {
        state.best_val_dice = *rec.val_dice;
        state.best_epoch = epoch;
        save_checkpoint(best, trainer.network(), trainer.optimizer(), state);
        line += " (best)";
      }
    }
    emit(log, line);
    save_checkpoint(latest, trainer.network(), trainer.optimizer(), state);
    write_history_csv(state.history, dir / "history.csv");
  }

  FoldResult res;
  res.fold = fold;
  res.repeat = repeat;
  res.best_val_dice = std::max(0.0, state.best_val_dice);
  res.best_epoch = state.best_epoch;
  res.checkpoint_path = best;
  res.latest_path = latest;
  res.history = state.history;
  return res;
}

std::vector<FoldResult> run_crossval(const io::DatasetManifest& manifest, const TrainConfig& cfg, int repeats,
                                     const Logger& log) {
  if (repeats < 1) throw ValidationError("repeats must be >= 1");
  if (manifest.fold_count() != cfg.folds) {
    throw ValidationError("manifest has " + std::to_string(manifest.fold_count()) + " folds, config expects " +
                          std::to_string(cfg.folds));
  }
  std::vector<FoldResult> results;
  for (int r = 0; r < repeats; ++r) {
    for (int f = 0; f < cfg.folds; ++f) results.push_back(train_fold(manifest, f, cfg, r, log));
  }
  return results;
}

double mean_best_dice(const std::vector<FoldResult>& results) {
  if (results.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : results) s += r.best_val_dice;
  return s / static_cast<double>(results.size());
}

std::string summary_table(const std::vector<FoldResult>& results) {
  int folds = 0, repeats = 0;
  for (const auto& r : results) {
    folds = std::max(folds, r.fold + 1);
    repeats = std::max(repeats, r.repeat + 1);
  }
  std::string out = "run   ";
  char buf[64];
  for (int f = 0; f < folds; ++f) {
    std::snprintf(buf, sizeof(buf), " %-8s", ("fold " + std::to_string(f + 1)).c_str());
    out += buf;
  }
  out += " average\n";
  for (int r = 0; r < repeats; ++r) {
    std::snprintf(buf, sizeof(buf), "%-6d", r);
    out += buf;
    double sum = 0.0;
    int n = 0;
    for (int f = 0; f < folds; ++f) {
      auto it = std::find_if(results.begin(), results.end(), [&](const FoldResult& x) { return x.fold == f && x.repeat == r; });
      if (it == results.end()) {
        out += "  -      ";
        continue;
      }
      std::snprintf(buf, sizeof(buf), " %-8.4f", it->best_val_dice);
      out += buf;
      sum += it->best_val_dice;
      ++n;
    }
    std::snprintf(buf, sizeof(buf), " %.4f\n", n ? sum / n : 0.0);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "mean over %zu models: %.4f\n", results.size(), mean_best_dice(results));
  out += buf;
  return out;
}

}  // namespace strokeseg::train
