#pragma once

// Checkpoint directory layout:
//   manifest.json          stage, epoch, seed, best metric, configs, module
//                          parameter shapes and blob checksums
//   <module>.bin           parameters of one module, float32 little-endian,
//                          concatenated in the module's parameter order
//   optimizer_m.bin        Adam moments over all parameters in module order
//   optimizer_v.bin        (present when the optimizer state was saved)
//   imputer.json           {attr_name: fill_value}, when preprocessing state is present

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionprog/augment.hpp"
#include "fusionprog/core/error.hpp"
#include "fusionprog/core/hash.hpp"
#include "fusionprog/dataset.hpp"
#include "fusionprog/model.hpp"
#include "fusionprog/nn/adam.hpp"

namespace fusionprog {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian float32");

inline constexpr int kCheckpointFormat = 1;

struct ParamBlob {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;  // in floats within the module blob
  std::size_t count = 0;
};

struct ModuleBlob {
  std::string name;
  std::vector<ParamBlob> params;
  std::vector<float> data;

  std::uint64_t checksum() const {
    Fnv1a h;
    h.update(std::span<const float>(data));
    return h.digest();
  }
};

struct Checkpoint {
  Stage stage = Stage::Stage1;
  int epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
  std::string metric_name;  // "val_loss" (stage 1) or "val_auc" (stage 2)
  double best_metric = 0;
  int best_epoch = -1;
  ModelConfig model;
  nlohmann::ordered_json train_config = nlohmann::ordered_json::object();
  nlohmann::ordered_json preprocess = nlohmann::ordered_json::object();  // PreprocessConfig + StructuredPipeline
  std::vector<ModuleBlob> modules;
  long long optimizer_steps = 0;
  std::vector<float> adam_m, adam_v;  // empty when not saved

  const ModuleBlob* module(const std::string& n) const {
    for (const auto& m : modules)
      if (m.name == n) return &m;
    return nullptr;
  }
};

/// Snapshot of the network's parameters (and optimizer state when given).
template <class T>
Checkpoint capture(nn::FusionNetwork<T>& net, const nn::Adam<T>* adam) {
  Checkpoint c;
  c.model = net.config();
  for (const auto& name : net.module_names()) {
    ModuleBlob mb;
    mb.name = name;
    for (auto* p : net.module_params(name)) {
      mb.params.push_back({p->name, p->shape, mb.data.size(), p->size()});
      for (T v : p->value) mb.data.push_back(static_cast<float>(v));
    }
    c.modules.push_back(std::move(mb));
  }
  if (adam) {
    c.optimizer_steps = adam->steps();
    auto& self = const_cast<nn::Adam<T>&>(*adam);
    for (const auto& m : self.first_moments())
      for (T v : m) c.adam_m.push_back(static_cast<float>(v));
    for (const auto& v2 : self.second_moments())
      for (T v : v2) c.adam_v.push_back(static_cast<float>(v));
  }
  return c;
}

/// Copies the named modules (all modules of the checkpoint when `only` is
/// empty, minus `skip`) into the network. Shape mismatches name the blobs.
template <class T>
void restore(nn::FusionNetwork<T>& net, const Checkpoint& c, const std::set<std::string>& only = {},
             const std::set<std::string>& skip = {}) {
  std::vector<std::string> problems;
  for (const auto& mb : c.modules) {
    if ((!only.empty() && !only.count(mb.name)) || skip.count(mb.name)) continue;
    if (!net.has_module(mb.name)) {
      problems.push_back(mb.name + ": not present in the target model");
      continue;
    }
    auto params = net.module_params(mb.name);
    if (params.size() != mb.params.size()) {
      problems.push_back(mb.name + ": " + std::to_string(mb.params.size()) + " blobs in checkpoint, model has " +
                         std::to_string(params.size()));
      continue;
    }
    for (std::size_t k = 0; k < params.size(); ++k)
      if (params[k]->shape != mb.params[k].shape) {
        auto fmt = [](const std::vector<int>& s) {
          std::string o = "(";
          for (std::size_t i = 0; i < s.size(); ++i) o += (i ? "," : "") + std::to_string(s[i]);
          return o + ")";
        };
        problems.push_back(mb.params[k].name + ": checkpoint shape " + fmt(mb.params[k].shape) + " vs model " +
                           fmt(params[k]->shape));
      }
  }
  if (!problems.empty()) {
    std::string msg = "incompatible checkpoint:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ShapeError(msg);
  }
  for (const auto& mb : c.modules) {
    if ((!only.empty() && !only.count(mb.name)) || skip.count(mb.name)) continue;
    auto params = net.module_params(mb.name);
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < mb.params[k].count; ++i)
        params[k]->value[i] = static_cast<T>(mb.data[mb.params[k].offset + i]);
  }
}

/// Restores Adam moments saved by capture(); the optimizer must cover the
/// same parameters in the same order.
template <class T>
void restore_optimizer(nn::Adam<T>& adam, const Checkpoint& c) {
  auto& m = adam.first_moments();
  auto& v = adam.second_moments();
  std::size_t total = 0;
  for (const auto& x : m) total += x.size();
  if (c.adam_m.size() != total || c.adam_v.size() != total)
    throw ShapeError("checkpoint optimizer state has " + std::to_string(c.adam_m.size()) + " entries, optimizer needs " +
                     std::to_string(total));
  std::size_t k = 0;
  for (std::size_t p = 0; p < m.size(); ++p)
    for (std::size_t i = 0; i < m[p].size(); ++i, ++k) {
      m[p][i] = static_cast<T>(c.adam_m[k]);
      v[p][i] = static_cast<T>(c.adam_v[k]);
    }
  adam.set_steps(c.optimizer_steps);
}

namespace detail {

inline void write_floats(const std::filesystem::path& p, const std::vector<float>& v) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ResolutionError("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!out) throw ResolutionError("short write to " + p.string());
}

inline std::vector<float> read_floats(const std::filesystem::path& p, std::size_t expected) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ResolutionError("missing checkpoint blob " + p.string());
  std::vector<float> v(expected);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(expected * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(expected * sizeof(float)) || in.peek() != EOF)
    throw ParseError("checkpoint blob " + p.string() + " does not hold " + std::to_string(expected) + " floats");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["stage"] = static_cast<int>(c.stage);
  j["epoch"] = c.epoch;
  j["seed"] = c.seed;
  j["metric_name"] = c.metric_name;
  j["best_metric"] = c.best_metric;
  j["best_epoch"] = c.best_epoch;
  j["model"] = to_json(c.model);
  j["train_config"] = c.train_config;
  j["preprocess"] = c.preprocess;
  auto& mods = j["modules"] = nlohmann::ordered_json::array();
  for (const auto& mb : c.modules) {
    nlohmann::ordered_json m;
    m["name"] = mb.name;
    m["file"] = mb.name + ".bin";
    m["checksum"] = hex64(mb.checksum());
    auto& ps = m["params"] = nlohmann::ordered_json::array();
    for (const auto& p : mb.params) ps.push_back({{"name", p.name}, {"shape", p.shape}});
    mods.push_back(m);
    detail::write_floats(dir / (mb.name + ".bin"), mb.data);
  }
  j["optimizer"] = {{"steps", c.optimizer_steps}, {"saved", !c.adam_m.empty()}};
  if (!c.adam_m.empty()) {
    detail::write_floats(dir / "optimizer_m.bin", c.adam_m);
    detail::write_floats(dir / "optimizer_v.bin", c.adam_v);
  } else {
    std::filesystem::remove(dir / "optimizer_m.bin");
    std::filesystem::remove(dir / "optimizer_v.bin");
  }
  if (c.preprocess.contains("structured") && c.preprocess.at("structured").contains("imputer"))
    std::ofstream(dir / "imputer.json") << c.preprocess.at("structured").at("imputer").dump(2) << "\n";
  std::ofstream out(dir / "manifest.json");
  if (!out) throw ResolutionError("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ResolutionError("not a checkpoint directory (no manifest.json): " + dir.string());
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
  if (j.value("format", 0) != kCheckpointFormat) throw ParseError("unsupported checkpoint format in " + dir.string());
  Checkpoint c;
  c.stage = static_cast<Stage>(j.at("stage").get<int>());
  c.epoch = j.at("epoch");
  c.seed = j.at("seed");
  c.metric_name = j.at("metric_name");
  c.best_metric = j.at("best_metric");
  c.best_epoch = j.at("best_epoch");
  c.model = model_config_from_json(j.at("model"));
  c.train_config = j.at("train_config");
  c.preprocess = j.at("preprocess");
  for (const auto& m : j.at("modules")) {
    ModuleBlob mb;
    mb.name = m.at("name");
    std::size_t n = 0;
    for (const auto& p : m.at("params")) {
      ParamBlob pb{p.at("name"), p.at("shape").get<std::vector<int>>(), n, 1};
      for (int d : pb.shape) pb.count *= static_cast<std::size_t>(d);
      n += pb.count;
      mb.params.push_back(std::move(pb));
    }
    mb.data = detail::read_floats(dir / m.at("file").get<std::string>(), n);
    if (hex64(mb.checksum()) != m.at("checksum").get<std::string>())
      throw ParseError("checksum mismatch for blob " + mb.name + " in " + dir.string());
    c.modules.push_back(std::move(mb));
  }
  c.optimizer_steps = j.at("optimizer").at("steps");
  if (j.at("optimizer").at("saved").get<bool>()) {
    std::size_t n = 0;
    for (const auto& mb : c.modules) n += mb.data.size();
    c.adam_m = detail::read_floats(dir / "optimizer_m.bin", n);
    c.adam_v = detail::read_floats(dir / "optimizer_v.bin", n);
  }
  return c;
}

}  // namespace fusionprog
