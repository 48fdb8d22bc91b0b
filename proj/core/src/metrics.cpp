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

#include "strokeseg/metrics.hpp"

#include "strokeseg/errors.hpp"
#include "strokeseg/nifti.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

namespace strokeseg::metrics {

namespace {

struct Offset {
  int di, dj, dk;
};

// Neighbours that precede a voxel in x-fastest scan order.
std::vector<Offset> causal_offsets(Connectivity c) {
  std::vector<Offset> out;
  const int max_nonzero = c == Connectivity::Face ? 1 : (c == Connectivity::Edge ? 2 : 3);
  for (int dk = -1; dk <= 0; ++dk) {
    for (int dj = -1; dj <= 1; ++dj) {
      for (int di = -1; di <= 1; ++di) {
        const bool before = dk < 0 || (dk == 0 && (dj < 0 || (dj == 0 && di < 0)));
        if (!before) continue;
        if ((di != 0) + (dj != 0) + (dk != 0) > max_nonzero) continue;
        out.push_back({di, dj, dk});
      }
    }
  }
  return out;
}

std::int64_t find_root(std::vector<std::int64_t>& parent, std::int64_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

void check_aligned(const SegmentationMask& a, const SegmentationMask& b) {
  if (!(a.geom.dims == b.geom.dims)) {
    throw AlignmentError("mask grids differ: " + to_string(a.geom.dims) + " vs " + to_string(b.geom.dims));
  }
  if (!same_grid(a.geom, b.geom, 1e-4)) throw AlignmentError("mask geometries differ beyond 1e-4 mm");
}

std::int64_t count_foreground(const SegmentationMask& m) {
  return std::count_if(m.labels.begin(), m.labels.end(), [](std::uint8_t v) { return v != 0; });
}

}  // namespace

Connectivity connectivity_from_int(int n) {
  switch (n) {
    case 6: return Connectivity::Face;
    case 18: return Connectivity::Edge;
    case 26: return Connectivity::Vertex;
    default: throw ValidationError("connectivity must be 6, 18 or 26, got " + std::to_string(n));
  }
}

LabeledComponents connected_components(const SegmentationMask& mask, Connectivity connectivity) {
  const Extent3& d = mask.geom.dims;
  const std::int64_t v = d.voxels();
  const auto offsets = causal_offsets(connectivity);
  std::vector<std::int64_t> parent(static_cast<std::size_t>(v), -1);

  for (std::int64_t k = 0; k < d.z; ++k) {
    for (std::int64_t j = 0; j < d.y; ++j) {
      for (std::int64_t i = 0; i < d.x; ++i) {
        const std::int64_t idx = d.index(i, j, k);
        if (!mask.labels[idx]) continue;
        parent[idx] = idx;
        for (const Offset& o : offsets) {
          const std::int64_t ni = i + o.di, nj = j + o.dj, nk = k + o.dk;
          if (ni < 0 || nj < 0 || nk < 0 || ni >= d.x || nj >= d.y) continue;
          const std::int64_t n = d.index(ni, nj, nk);
          if (parent[n] < 0) continue;
          const std::int64_t a = find_root(parent, idx);
          const std::int64_t b = find_root(parent, n);
          // Keep the earlier voxel as root.
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
      }
    }
  }

  LabeledComponents out;
  out.dims = d;
  out.connectivity = connectivity;
  out.component_map.assign(static_cast<std::size_t>(v), 0);
  std::vector<std::int32_t> id_of_root(static_cast<std::size_t>(v), 0);
  for (std::int64_t idx = 0; idx < v; ++idx) {
    if (parent[idx] < 0) continue;
    const std::int64_t r = find_root(parent, idx);
    if (id_of_root[r] == 0) {
      id_of_root[r] = ++out.count;
      out.voxel_counts.push_back(0);
    }
    out.component_map[idx] = id_of_root[r];
    ++out.voxel_counts[id_of_root[r] - 1];
  }
  return out;
}

double dice_score(const SegmentationMask& pred, const SegmentationMask& gt) {
  check_aligned(pred, gt);
  std::int64_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool a = pred.labels[i] != 0, b = gt.labels[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double lesion_f1(const SegmentationMask& pred, const SegmentationMask& gt, Connectivity connectivity,
                 LesionMatching matching) {
  check_aligned(pred, gt);
  const auto pc = connected_components(pred, connectivity);
  const auto gc = connected_components(gt, connectivity);
  if (pc.count == 0 && gc.count == 0) return 1.0;

  std::int64_t tp = 0, fp = 0, fn = 0;
  if (matching == LesionMatching::AnyOverlap) {
    std::vector<bool> gt_hit(static_cast<std::size_t>(gc.count), false);
    std::vector<bool> pred_hit(static_cast<std::size_t>(pc.count), false);
    for (std::size_t i = 0; i < pc.component_map.size(); ++i) {
      const auto a = pc.component_map[i], b = gc.component_map[i];
      if (a && b) {
        pred_hit[a - 1] = true;
        gt_hit[b - 1] = true;
      }
    }
    tp = std::count(gt_hit.begin(), gt_hit.end(), true);
    fn = gc.count - tp;
    fp = std::count(pred_hit.begin(), pred_hit.end(), false);
  } else {
    std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> overlap;
    for (std::size_t i = 0; i < pc.component_map.size(); ++i) {
      const auto a = pc.component_map[i], b = gc.component_map[i];
      if (a && b) ++overlap[{a, b}];
    }
    std::vector<std::tuple<std::int64_t, std::int32_t, std::int32_t>> pairs;
    for (const auto& [key, n] : overlap) pairs.emplace_back(n, key.second, key.first);
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) { return std::get<0>(x) > std::get<0>(y); });
    std::vector<bool> gt_used(static_cast<std::size_t>(gc.count), false);
    std::vector<bool> pred_used(static_cast<std::size_t>(pc.count), false);
    for (const auto& [n, g, p] : pairs) {
      if (gt_used[g - 1] || pred_used[p - 1]) continue;
      gt_used[g - 1] = pred_used[p - 1] = true;
      ++tp;
    }
    fn = gc.count - tp;
    fp = pc.count - tp;
  }
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double abs_volume_difference(const SegmentationMask& pred, const SegmentationMask& gt, const Vec3& spacing) {
  check_aligned(pred, gt);
  if (!(spacing.minCoeff() > 0.0)) throw ValidationError("spacing must be positive");
  const std::int64_t diff = std::llabs(count_foreground(pred) - count_foreground(gt));
  return static_cast<double>(diff) * spacing.prod() / 1000.0;
}

double abs_volume_difference(const SegmentationMask& pred, const SegmentationMask& gt) {
  return abs_volume_difference(pred, gt, gt.geom.spacing);
}

std::int64_t lesion_count_difference(const SegmentationMask& pred, const SegmentationMask& gt,
                                     Connectivity connectivity) {
  check_aligned(pred, gt);
  return std::llabs(static_cast<std::int64_t>(connected_components(pred, connectivity).count) -
                    connected_components(gt, connectivity).count);
}

void MetricsReport::aggregate() {
  mean_dice = mean_lesion_f1 = mean_avd_ml = mean_lesion_count_diff = 0.0;
  if (rows.empty()) return;
  for (const auto& r : rows) {
    mean_dice += r.dice;
    mean_lesion_f1 += r.lesion_f1;
    mean_avd_ml += r.avd_ml;
    mean_lesion_count_diff += static_cast<double>(r.lesion_count_diff);
  }
  const double n = static_cast<double>(rows.size());
  mean_dice /= n;
  mean_lesion_f1 /= n;
  mean_avd_ml /= n;
  mean_lesion_count_diff /= n;
}

std::string MetricsReport::summary_row() const {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.3f %.3f %.3f %g", mean_dice, mean_lesion_f1, mean_avd_ml, mean_lesion_count_diff);
  return buf;
}

CaseMetrics evaluate_case(const std::string& case_id, const SegmentationMask& pred, const SegmentationMask& gt,
                          Connectivity connectivity, LesionMatching matching) {
  CaseMetrics m;
  m.case_id = case_id;
  m.dice = dice_score(pred, gt);
  m.lesion_f1 = lesion_f1(pred, gt, connectivity, matching);
  m.avd_ml = abs_volume_difference(pred, gt);
  m.lesion_count_diff = lesion_count_difference(pred, gt, connectivity);
  return m;
}

MetricsReport evaluate_cases(const std::filesystem::path& pred_dir, const io::DatasetManifest& manifest,
                             const EvaluateOptions& options) {
  MetricsReport report;
  auto cases = manifest.labeled_cases();
  std::sort(cases.begin(), cases.end(), [](const auto* a, const auto* b) { return a->case_id < b->case_id; });
  std::vector<std::pair<const io::CaseRecord*, std::filesystem::path>> present;
  for (const auto* c : cases) {
    const auto path = pred_dir / (c->case_id + ".nii.gz");
    if (std::filesystem::exists(path)) {
      present.emplace_back(c, path);
    } else {
      report.missing.push_back(c->case_id);
    }
  }
  if (!report.missing.empty() && !options.allow_missing) {
    std::string msg = "missing predictions for " + std::to_string(report.missing.size()) + " case(s):";
    for (const auto& id : report.missing) msg += " " + id;
    throw LoadError(msg);
  }
  for (const auto& [c, path] : present) {
    const SegmentationMask gt = io::load_mask(*c->label);
    const SegmentationMask pred = io::load_mask(path);
    try {
      report.rows.push_back(evaluate_case(c->case_id, pred, gt, options.connectivity, options.matching));
    } catch (const AlignmentError& e) {
      throw AlignmentError(c->case_id + ": prediction is not on the ground-truth grid: " + e.what());
    }
  }
  report.aggregate();
  return report;
}

void write_report(const MetricsReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  {
    std::ofstream csv(out_dir / "metrics.csv");
    if (!csv) throw IoError("cannot write " + (out_dir / "metrics.csv").string());
    csv << "case_id,dice,lesion_f1,avd_ml,lesion_count_diff\n";
    char buf[256];
    for (const auto& r : report.rows) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%lld\n", r.case_id.c_str(), r.dice, r.lesion_f1, r.avd_ml,
                    static_cast<long long>(r.lesion_count_diff));
      csv << buf;
    }
  }
  nlohmann::json j;
  j["cases"] = report.rows.size();
  j["missing"] = report.missing;
  j["mean"] = {{"dice", report.mean_dice},
               {"lesion_f1", report.mean_lesion_f1},
               {"avd_ml", report.mean_avd_ml},
               {"lesion_count_diff", report.mean_lesion_count_diff}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"case_id", r.case_id},
                    {"dice", r.dice},
                    {"lesion_f1", r.lesion_f1},
                    {"avd_ml", r.avd_ml},
                    {"lesion_count_diff", r.lesion_count_diff}});
  }
  j["per_case"] = rows;
  std::ofstream out(out_dir / "summary.json");
  if (!out) throw IoError("cannot write " + (out_dir / "summary.json").string());
  out << j.dump(2) << "\n";
}

}  // namespace strokeseg::metrics
