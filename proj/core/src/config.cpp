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

#include "strokeseg/config.hpp"

#include "strokeseg/errors.hpp"
#include "strokeseg/weights_archive.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace strokeseg::config {

namespace {

using json = nlohmann::json;
using Handler = std::function<void(const json&)>;

void read_section(const json& j, const std::string& section, const std::map<std::string, Handler>& handlers) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError("unknown key '" + section + "." + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError(section + "." + key + ": " + e.what());
    }
  }
}

Extent3 extent_from(const json& j) {
  const auto v = j.get<std::vector<std::int64_t>>();
  if (v.size() != 3) throw ConfigError("expected a 3-element list");
  return {v[0], v[1], v[2]};
}
json extent_to(const Extent3& e) { return json::array({e.x, e.y, e.z}); }

aug::Range range_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw ConfigError("expected [min, max]");
  return {v[0], v[1]};
}
json range_to(const aug::Range& r) { return json::array({r.min, r.max}); }

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

const char* norm_region_name(prep::NormRegion r) { return r == prep::NormRegion::All ? "all" : "nonzero"; }
const char* matching_name(metrics::LesionMatching m) {
  return m == metrics::LesionMatching::AnyOverlap ? "any_overlap" : "one_to_one";
}

}  // namespace

void PipelineConfig::validate() const {
  train.validate();
  inference.window.validate();
  for (int a = 0; a < 3; ++a) {
    if (inference.window.window[a] % train.network.divisor() != 0) {
      throw ConfigError("inference.window must be divisible by " + std::to_string(train.network.divisor()));
    }
  }
}

PipelineConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  auto& t = c.train;
  bool window_set = false;
  std::string checkpoint_dir;

  read_section(doc, "config",
               {
                   {"manifest", [&](const json& v) { c.manifest = v.get<std::string>(); }},
                   {"output_dir", [&](const json& v) { c.output_dir = v.get<std::string>(); }},
                   {"network", [&](const json& v) { t.network = nn::network_from_json(v); }},
                   {"train",
                    [&](const json& v) {
                      read_section(v, "train",
                                   {
                                       {"epochs", [&](const json& x) { t.epochs = x.get<int>(); }},
                                       {"lr0", [&](const json& x) { t.lr0 = x.get<double>(); }},
                                       {"weight_decay", [&](const json& x) { t.weight_decay = x.get<double>(); }},
                                       {"batch_size_global", [&](const json& x) { t.batch_size_global = x.get<int>(); }},
                                       {"folds", [&](const json& x) { t.folds = x.get<int>(); }},
                                       {"seed", [&](const json& x) { t.seed = x.get<std::uint64_t>(); }},
                                       {"val_interval", [&](const json& x) { t.val_interval = x.get<int>(); }},
                                       {"crops_per_case", [&](const json& x) { t.crops_per_case = x.get<int>(); }},
                                       {"workers", [&](const json& x) { t.workers = x.get<int>(); }},
                                       {"resume", [&](const json& x) { t.resume = x.get<bool>(); }},
                                       {"checkpoint_dir", [&](const json& x) { checkpoint_dir = x.get<std::string>(); }},
                                       {"pretrained_weights",
                                        [&](const json& x) {
                                          if (x.is_null()) t.pretrained_weights.reset();
                                          else t.pretrained_weights = resolve(x.get<std::string>(), base_dir);
                                        }},
                                       {"validation_overlap", [&](const json& x) { t.validation_overlap = x.get<double>(); }},
                                   });
                    }},
                   {"loss",
                    [&](const json& v) {
                      auto& l = t.loss;
                      read_section(v, "loss",
                                   {
                                       {"focal_gamma", [&](const json& x) { l.focal_gamma = x.get<double>(); }},
                                       {"dice_smooth", [&](const json& x) { l.dice_smooth = x.get<double>(); }},
                                       {"include_background", [&](const json& x) { l.include_background = x.get<bool>(); }},
                                       {"dice_batch", [&](const json& x) { l.dice_batch = x.get<bool>(); }},
                                       {"num_ds_levels", [&](const json& x) { l.num_ds_levels = x.get<int>(); }},
                                       {"focal_eps", [&](const json& x) { l.focal_eps = x.get<double>(); }},
                                   });
                    }},
                   {"augment",
                    [&](const json& v) {
                      auto& a = t.augment;
                      read_section(v, "augment",
                                   {
                                       {"flip_prob_per_axis", [&](const json& x) { a.flip_prob_per_axis = x.get<double>(); }},
                                       {"affine_prob", [&](const json& x) { a.affine_prob = x.get<double>(); }},
                                       {"rot_range_deg", [&](const json& x) { a.rot_range_deg = x.get<double>(); }},
                                       {"scale_range", [&](const json& x) { a.scale_range = x.get<double>(); }},
                                       {"smooth_prob", [&](const json& x) { a.smooth_prob = x.get<double>(); }},
                                       {"smooth_sigma", [&](const json& x) { a.smooth_sigma = range_from(x); }},
                                       {"noise_prob", [&](const json& x) { a.noise_prob = x.get<double>(); }},
                                       {"noise_std", [&](const json& x) { a.noise_std = range_from(x); }},
                                       {"intensity_scale_prob", [&](const json& x) { a.intensity_scale_prob = x.get<double>(); }},
                                       {"intensity_scale", [&](const json& x) { a.intensity_scale = range_from(x); }},
                                       {"intensity_shift_prob", [&](const json& x) { a.intensity_shift_prob = x.get<double>(); }},
                                       {"intensity_shift", [&](const json& x) { a.intensity_shift = range_from(x); }},
                                   });
                    }},
                   {"crop",
                    [&](const json& v) {
                      read_section(v, "crop",
                                   {
                                       {"size", [&](const json& x) { t.crop.size = extent_from(x); }},
                                       {"foreground_bias", [&](const json& x) { t.crop.foreground_bias = x.get<double>(); }},
                                   });
                    }},
                   {"preprocess",
                    [&](const json& v) {
                      read_section(v, "preprocess",
                                   {
                                       {"target_spacing",
                                        [&](const json& x) {
                                          const auto s = x.get<std::vector<double>>();
                                          if (s.size() != 3) throw ConfigError("preprocess.target_spacing: expected 3 values");
                                          t.preprocess.target_spacing = Vec3(s[0], s[1], s[2]);
                                        }},
                                       {"norm_region",
                                        [&](const json& x) {
                                          const auto s = x.get<std::string>();
                                          if (s == "all") t.preprocess.norm_region = prep::NormRegion::All;
                                          else if (s == "nonzero") t.preprocess.norm_region = prep::NormRegion::NonZero;
                                          else throw ConfigError("preprocess.norm_region must be 'all' or 'nonzero'");
                                        }},
                                   });
                    }},
                   {"inference",
                    [&](const json& v) {
                      auto& w = c.inference.window;
                      read_section(v, "inference",
                                   {
                                       {"window",
                                        [&](const json& x) {
                                          w.window = extent_from(x);
                                          window_set = true;
                                        }},
                                       {"overlap", [&](const json& x) { w.overlap = x.get<double>(); }},
                                       {"sigma_scale", [&](const json& x) { w.sigma_scale = x.get<double>(); }},
                                       {"export_probabilities",
                                        [&](const json& x) { c.inference.export_probabilities = x.get<bool>(); }},
                                   });
                    }},
                   {"metrics",
                    [&](const json& v) {
                      read_section(v, "metrics",
                                   {
                                       {"connectivity",
                                        [&](const json& x) {
                                          try {
                                            c.metrics.connectivity = metrics::connectivity_from_int(x.get<int>());
                                          } catch (const ValidationError& e) {
                                            throw ConfigError(std::string("metrics.connectivity: ") + e.what());
                                          }
                                        }},
                                       {"matching",
                                        [&](const json& x) {
                                          const auto s = x.get<std::string>();
                                          if (s == "any_overlap") c.metrics.matching = metrics::LesionMatching::AnyOverlap;
                                          else if (s == "one_to_one") c.metrics.matching = metrics::LesionMatching::OneToOne;
                                          else throw ConfigError("metrics.matching must be 'any_overlap' or 'one_to_one'");
                                        }},
                                   });
                    }},
               });

  c.manifest = resolve(c.manifest, base_dir);
  c.output_dir = resolve(c.output_dir, base_dir);
  t.checkpoint_dir = resolve(checkpoint_dir.empty() ? std::filesystem::path("checkpoints") : std::filesystem::path(checkpoint_dir), c.output_dir);
  if (!window_set) c.inference.window.window = t.crop.size;
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc, std::filesystem::absolute(path).parent_path());
}

json train_to_json(const train::TrainConfig& t) {
  json j;
  j["epochs"] = t.epochs;
  j["lr0"] = t.lr0;
  j["weight_decay"] = t.weight_decay;
  j["batch_size_global"] = t.batch_size_global;
  j["folds"] = t.folds;
  j["seed"] = t.seed;
  j["val_interval"] = t.val_interval;
  j["crops_per_case"] = t.crops_per_case;
  j["workers"] = t.workers;
  j["resume"] = t.resume;
  j["checkpoint_dir"] = t.checkpoint_dir.string();
  j["pretrained_weights"] = t.pretrained_weights ? json(t.pretrained_weights->string()) : json(nullptr);
  j["validation_overlap"] = t.validation_overlap;
  return j;
}

json to_json(const PipelineConfig& c) {
  const auto& t = c.train;
  json j;
  j["manifest"] = c.manifest.string();
  j["output_dir"] = c.output_dir.string();
  j["network"] = nn::network_to_json(t.network);
  j["train"] = train_to_json(t);
  j["loss"] = {{"focal_gamma", t.loss.focal_gamma},         {"dice_smooth", t.loss.dice_smooth},
               {"include_background", t.loss.include_background}, {"dice_batch", t.loss.dice_batch},
               {"num_ds_levels", t.loss.num_ds_levels},     {"focal_eps", t.loss.focal_eps}};
  const auto& a = t.augment;
  j["augment"] = {{"flip_prob_per_axis", a.flip_prob_per_axis},
                  {"affine_prob", a.affine_prob},
                  {"rot_range_deg", a.rot_range_deg},
                  {"scale_range", a.scale_range},
                  {"smooth_prob", a.smooth_prob},
                  {"smooth_sigma", range_to(a.smooth_sigma)},
                  {"noise_prob", a.noise_prob},
                  {"noise_std", range_to(a.noise_std)},
                  {"intensity_scale_prob", a.intensity_scale_prob},
                  {"intensity_scale", range_to(a.intensity_scale)},
                  {"intensity_shift_prob", a.intensity_shift_prob},
                  {"intensity_shift", range_to(a.intensity_shift)}};
  j["crop"] = {{"size", extent_to(t.crop.size)}, {"foreground_bias", t.crop.foreground_bias}};
  const Vec3& s = t.preprocess.target_spacing;
  j["preprocess"] = {{"target_spacing", json::array({s[0], s[1], s[2]})},
                     {"norm_region", norm_region_name(t.preprocess.norm_region)}};
  j["inference"] = {{"window", extent_to(c.inference.window.window)},
                    {"overlap", c.inference.window.overlap},
                    {"sigma_scale", c.inference.window.sigma_scale},
                    {"export_probabilities", c.inference.export_probabilities}};
  j["metrics"] = {{"connectivity", static_cast<int>(c.metrics.connectivity)},
                  {"matching", matching_name(c.metrics.matching)}};
  return j;
}

std::string content_hash(const json& doc) {
  const std::string text = doc.dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace strokeseg::config
