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

#include "strokeseg/weights_archive.hpp"

#include "strokeseg/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

namespace strokeseg::nn {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'S', 'E', 'G', 'A', 'R', 'C', '\0'};

const char* dtype_name(DType d) { return d == DType::Float32 ? "float32" : "float64"; }

DType dtype_from_name(const std::string& s) {
  if (s == "float32") return DType::Float32;
  if (s == "float64") return DType::Float64;
  throw ArchiveError("unsupported tensor dtype '" + s + "'");
}

std::size_t element_size(DType d) { return d == DType::Float32 ? 4 : 8; }

std::size_t element_count(const std::vector<std::int64_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ArchiveError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::Float32 : DType::Float64;
}

}  // namespace

const NamedTensor* Archive::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

nlohmann::json network_to_json(const NetworkConfig& cfg) {
  return {{"in_channels", cfg.in_channels},   {"out_channels", cfg.out_channels},
          {"init_filters", cfg.init_filters}, {"blocks_down", cfg.blocks_down},
          {"blocks_up", cfg.blocks_up},       {"ds_heads", cfg.ds_heads}};
}

NetworkConfig network_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("network: expected an object");
  NetworkConfig cfg;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "in_channels") cfg.in_channels = value.get<int>();
      else if (key == "out_channels") cfg.out_channels = value.get<int>();
      else if (key == "init_filters") cfg.init_filters = value.get<int>();
      else if (key == "blocks_down") cfg.blocks_down = value.get<std::vector<int>>();
      else if (key == "blocks_up") cfg.blocks_up = value.get<std::vector<int>>();
      else if (key == "ds_heads") cfg.ds_heads = value.get<int>();
      else throw ConfigError("network: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("network." + key + ": " + e.what());
    }
  }
  return cfg;
}

void write_archive(const Archive& archive, const std::filesystem::path& path) {
  nlohmann::json header;
  header["kind"] = archive.kind;
  header["format_version"] = kArchiveVersion;
  header["network"] = network_to_json(archive.network);
  header["meta"] = archive.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : archive.tensors) {
    if (element_count(t.shape) != t.values.size()) {
      throw ArchiveError("tensor '" + t.name + "' has " + std::to_string(t.values.size()) +
                         " values for shape " + shape_str(t.shape));
    }
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", dtype_name(t.dtype)}, {"offset", offset}});
    offset += t.values.size() * element_size(t.dtype);
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  // Write to a sibling temp file so an interrupted save never leaves a torn archive.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    const std::uint32_t version = kArchiveVersion;
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : archive.tensors) {
      if (t.dtype == DType::Float32) {
        std::vector<float> buf(t.values.begin(), t.values.end());
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
      } else {
        out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * 8));
      }
    }
    if (!out) throw IoError("short write to " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move archive into place at " + path.string() + ": " + ec.message());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open archive " + path.string());
  const auto file_size = static_cast<std::uint64_t>(std::filesystem::file_size(path));

  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw ArchiveError(path.string() + " is not a strokeseg archive");
  }
  if (!in.read(reinterpret_cast<char*>(&version), 4) || !in.read(reinterpret_cast<char*>(&len), 8)) {
    throw ArchiveError(path.string() + ": truncated header");
  }
  if (version != kArchiveVersion) {
    throw ArchiveError(path.string() + ": unsupported format version " + std::to_string(version));
  }
  const std::uint64_t payload_start = 20 + len;
  if (payload_start > file_size) throw ArchiveError(path.string() + ": truncated header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));

  Archive a;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    a.kind = header.at("kind").get<std::string>();
    if (header.at("format_version").get<std::uint32_t>() != kArchiveVersion) {
      throw ArchiveError(path.string() + ": header version disagrees with preamble");
    }
    a.network = network_from_json(header.at("network"));
    a.meta = header.value("meta", nlohmann::json::object());
    for (const auto& e : header.at("tensors")) {
      NamedTensor t;
      t.name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<std::vector<std::int64_t>>();
      t.dtype = dtype_from_name(e.at("dtype").get<std::string>());
      const auto offset = e.at("offset").get<std::uint64_t>();
      const std::size_t count = element_count(t.shape);
      const std::uint64_t bytes = count * element_size(t.dtype);
      if (payload_start + offset + bytes > file_size) {
        throw ArchiveError(path.string() + ": truncated payload at tensor '" + t.name + "'");
      }
      in.seekg(static_cast<std::streamoff>(payload_start + offset));
      if (t.dtype == DType::Float32) {
        std::vector<float> buf(count);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
        t.values.assign(buf.begin(), buf.end());
      } else {
        t.values.resize(count);
        in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(bytes));
      }
      if (!in) throw ArchiveError(path.string() + ": read failed at tensor '" + t.name + "'");
      a.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(path.string() + ": malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw ArchiveError(path.string() + ": " + e.what());
  }
  return a;
}

template <typename T>
Archive make_weights_archive(const SegResNet<T>& net) {
  Archive a;
  a.kind = "weights";
  a.network = net.config();
  for (const Parameter<T>* p : net.parameters()) {
    a.tensors.push_back({p->name, p->shape, dtype_of<T>(), std::vector<double>(p->value.begin(), p->value.end())});
  }
  return a;
}

template <typename T>
void save_weights(const SegResNet<T>& net, const std::filesystem::path& path) {
  write_archive(make_weights_archive(net), path);
}

template <typename T>
LoadReport load_parameters(SegResNet<T>& net, const Archive& archive, bool strict) {
  LoadReport report;
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : archive.tensors) {
    if (t.name.rfind("optim.", 0) == 0) continue;
    by_name[t.name] = &t;
  }
  std::set<std::string> known;
  std::vector<std::pair<Parameter<T>*, const NamedTensor*>> plan;
  std::vector<std::string> problems;
  for (Parameter<T>* p : net.parameters()) {
    known.insert(p->name);
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      report.missing.push_back(p->name);
      problems.push_back(p->name + ": missing from archive");
    } else if (it->second->shape != p->shape) {
      report.skipped.push_back(p->name);
      problems.push_back(p->name + ": archive shape " + shape_str(it->second->shape) + " vs expected " +
                         shape_str(p->shape));
    } else {
      plan.emplace_back(p, it->second);
    }
  }
  for (const auto& [name, t] : by_name) {
    if (!known.count(name)) {
      report.unexpected.push_back(name);
      problems.push_back(name + ": not a parameter of this network");
    }
  }
  if (strict && !problems.empty()) {
    std::string msg = "strict weight load failed (" + std::to_string(problems.size()) + " mismatches):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ArchiveError(msg);
  }
  for (auto& [p, t] : plan) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(t->values[i]);
    report.loaded.push_back(p->name);
  }
  return report;
}

template <typename T>
SegResNet<T> load_weights(const std::filesystem::path& path, const NetworkConfig& cfg, bool strict,
                          LoadReport* report, std::uint64_t init_seed) {
  const Archive archive = read_archive(path);
  if (strict && !(archive.network == cfg)) {
    throw ArchiveError(path.string() + ": network configuration differs from the expected one\n  archive: " +
                       network_to_json(archive.network).dump() + "\n  expected: " + network_to_json(cfg).dump());
  }
  SegResNet<T> net(cfg, init_seed);
  LoadReport r = load_parameters(net, archive, strict);
  if (report) *report = std::move(r);
  return net;
}

#define STROKESEG_INSTANTIATE(T)                                                                     \
  template Archive make_weights_archive<T>(const SegResNet<T>&);                                     \
  template void save_weights<T>(const SegResNet<T>&, const std::filesystem::path&);                  \
  template LoadReport load_parameters<T>(SegResNet<T>&, const Archive&, bool);                       \
  template SegResNet<T> load_weights<T>(const std::filesystem::path&, const NetworkConfig&, bool, \
                                        LoadReport*, std::uint64_t);

STROKESEG_INSTANTIATE(float)
STROKESEG_INSTANTIATE(double)

#undef STROKESEG_INSTANTIATE

}  // namespace strokeseg::nn
