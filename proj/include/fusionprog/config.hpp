#pragma once

// Run configuration as flat `key = value` text with one section per module:
// [synth] [preprocess] [model] [train] [contrastive] [augment] [experiment].
// Unknown sections and keys are rejected. write_config emits every key, so a
// written snapshot reproduces the run on its own.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fusionprog/core/error.hpp"
#include "fusionprog/eval.hpp"
#include "fusionprog/synthgen.hpp"

namespace fusionprog {

struct RunConfig {
  SynthConfig synth;
  ExperimentConfig exp;
};

namespace detail {

// Shortest text that parses back to the same double.
inline std::string format_value(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: " + key + " expects a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  }
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<T>(parse_int(key, item)));
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

/// Binds every config key to a getter and setter on a RunConfig.
class Binder {
 public:
  using Get = std::function<std::string(const RunConfig&)>;
  using Set = std::function<void(RunConfig&, const std::string& key, const std::string&)>;

  void add(const std::string& key, Get g, Set s) {
    order_.push_back(key);
    entries_[key] = {std::move(g), std::move(s)};
  }
  void dbl(const std::string& key, std::function<double&(RunConfig&)> f) {
    add(
        key, [f](const RunConfig& c) { return format_value(f(const_cast<RunConfig&>(c))); },
        [f](RunConfig& c, const std::string& k, const std::string& v) { f(c) = parse_double(k, v); });
  }
  template <class I>
  void integer(const std::string& key, std::function<I&(RunConfig&)> f) {
    add(
        key, [f](const RunConfig& c) { return std::to_string(f(const_cast<RunConfig&>(c))); },
        [f](RunConfig& c, const std::string& k, const std::string& v) { f(c) = static_cast<I>(parse_int(k, v)); });
  }
  void boolean(const std::string& key, std::function<bool&(RunConfig&)> f) {
    add(
        key, [f](const RunConfig& c) { return std::string(f(const_cast<RunConfig&>(c)) ? "true" : "false"); },
        [f](RunConfig& c, const std::string& k, const std::string& v) { f(c) = parse_bool(k, v); });
  }

  const std::vector<std::string>& keys() const { return order_; }
  bool has(const std::string& k) const { return entries_.count(k) > 0; }
  std::string get(const RunConfig& c, const std::string& k) const { return entries_.at(k).first(c); }
  void set(RunConfig& c, const std::string& k, const std::string& v) const { entries_.at(k).second(c, k, v); }

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::pair<Get, Set>> entries_;
};

inline const Binder& binder() {
  static const Binder b = [] {
    Binder b;
    // synth
    b.integer<int>("synth.n_patients", [](RunConfig& c) -> int& { return c.synth.n_patients; });
    b.integer<int>("synth.n_slices", [](RunConfig& c) -> int& { return c.synth.n_slices; });
    b.integer<int>("synth.height", [](RunConfig& c) -> int& { return c.synth.height; });
    b.integer<int>("synth.width", [](RunConfig& c) -> int& { return c.synth.width; });
    b.integer<int>("synth.n_attrs", [](RunConfig& c) -> int& { return c.synth.n_attrs; });
    b.integer<int>("synth.n_informative_attrs", [](RunConfig& c) -> int& { return c.synth.n_informative_attrs; });
    b.dbl("synth.adc_signal_strength", [](RunConfig& c) -> double& { return c.synth.adc_signal_strength; });
    b.dbl("synth.dwi_signal_strength", [](RunConfig& c) -> double& { return c.synth.dwi_signal_strength; });
    b.dbl("synth.tabular_signal_strength", [](RunConfig& c) -> double& { return c.synth.tabular_signal_strength; });
    b.dbl("synth.missing_rate_max", [](RunConfig& c) -> double& { return c.synth.missing_rate_max; });
    b.dbl("synth.class_prior", [](RunConfig& c) -> double& { return c.synth.class_prior; });
    b.dbl("synth.overlap_fraction", [](RunConfig& c) -> double& { return c.synth.overlap_fraction; });
    b.dbl("synth.noise_std", [](RunConfig& c) -> double& { return c.synth.noise_std; });
    b.dbl("synth.bias_field_strength", [](RunConfig& c) -> double& { return c.synth.bias_field_strength; });
    b.integer<std::uint64_t>("synth.seed", [](RunConfig& c) -> std::uint64_t& { return c.synth.seed; });
    // preprocess
    b.boolean("preprocess.bias_correct_adc", [](RunConfig& c) -> bool& { return c.exp.preprocess.bias_correct_adc; });
    b.boolean("preprocess.bias_correct_dwi", [](RunConfig& c) -> bool& { return c.exp.preprocess.bias_correct_dwi; });
    b.integer<int>("preprocess.bias_grid", [](RunConfig& c) -> int& { return c.exp.preprocess.bias_grid; });
    b.integer<int>("preprocess.target_h", [](RunConfig& c) -> int& { return c.exp.preprocess.target_h; });
    b.integer<int>("preprocess.target_w", [](RunConfig& c) -> int& { return c.exp.preprocess.target_w; });
    b.integer<int>("preprocess.n_slices", [](RunConfig& c) -> int& { return c.exp.preprocess.n_slices; });
    b.boolean("preprocess.normalize_intensity",
              [](RunConfig& c) -> bool& { return c.exp.preprocess.normalize_intensity; });
    b.boolean("preprocess.drop_nihss", [](RunConfig& c) -> bool& { return c.exp.preprocess.drop_nihss; });
    b.dbl("preprocess.split_train", [](RunConfig& c) -> double& { return c.exp.preprocess.split.ratios[0]; });
    b.dbl("preprocess.split_val", [](RunConfig& c) -> double& { return c.exp.preprocess.split.ratios[1]; });
    b.dbl("preprocess.split_test", [](RunConfig& c) -> double& { return c.exp.preprocess.split.ratios[2]; });
    b.integer<std::uint64_t>("preprocess.split_seed",
                             [](RunConfig& c) -> std::uint64_t& { return c.exp.preprocess.split.seed; });
    b.boolean("preprocess.split_stratified", [](RunConfig& c) -> bool& { return c.exp.preprocess.split.stratified; });
    // model
    b.add(
        "model.backbone", [](const RunConfig& c) { return to_string(c.exp.model.image.backbone); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "small_cnn")
            c.exp.model.image.backbone = Backbone::SmallCnn;
          else if (v == "resnet50_style")
            c.exp.model.image.backbone = Backbone::Resnet50Style;
          else
            throw ConfigError("config: " + k + " expects small_cnn or resnet50_style, got '" + v + "'");
        });
    b.add(
        "model.cnn_channels", [](const RunConfig& c) { return join(c.exp.model.image.cnn_channels); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.exp.model.image.cnn_channels = parse_list<int>(k, v);
        });
    b.add(
        "model.resnet_blocks", [](const RunConfig& c) { return join(c.exp.model.image.resnet_blocks); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.exp.model.image.resnet_blocks = parse_list<int>(k, v);
        });
    b.integer<int>("model.resnet_width", [](RunConfig& c) -> int& { return c.exp.model.image.resnet_width; });
    b.integer<int>("model.projection_hidden", [](RunConfig& c) -> int& { return c.exp.model.projection_hidden; });
    b.add(
        "model.structured_hidden", [](const RunConfig& c) { return join(c.exp.model.structured.hidden_dims); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.exp.model.structured.hidden_dims = parse_list<int>(k, v);
        });
    b.add(
        "model.fusion", [](const RunConfig& c) { return to_string(c.exp.model.fusion.mode); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "hierarchical")
            c.exp.model.fusion.mode = FusionMode::Hierarchical;
          else if (v == "average")
            c.exp.model.fusion.mode = FusionMode::Average;
          else
            throw ConfigError("config: " + k + " expects hierarchical or average, got '" + v + "'");
        });
    b.add(
        "model.branches", [](const RunConfig& c) { return c.exp.model.branches.to_string(); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          Branches br{false, false, false};
          std::stringstream ss(v);
          for (std::string item; std::getline(ss, item, ',');) {
            item = trim(item);
            if (item == "adc")
              br.adc = true;
            else if (item == "dwi")
              br.dwi = true;
            else if (item == "structured")
              br.structured = true;
            else
              throw ConfigError("config: " + k + " has unknown branch '" + item + "'");
          }
          c.exp.model.branches = br;
        });
    b.boolean("model.normalize_embeddings", [](RunConfig& c) -> bool& { return c.exp.model.normalize_embeddings; });
    b.boolean("model.normalize_fused", [](RunConfig& c) -> bool& { return c.exp.model.normalize_fused; });
    // train
    b.integer<int>("train.epochs", [](RunConfig& c) -> int& { return c.exp.train.epochs; });
    b.integer<int>("train.batch_size", [](RunConfig& c) -> int& { return c.exp.train.batch_size; });
    b.dbl("train.lr_stage1", [](RunConfig& c) -> double& { return c.exp.train.lr_stage1; });
    b.dbl("train.lr_stage2", [](RunConfig& c) -> double& { return c.exp.train.lr_stage2; });
    b.dbl("train.lr_decay_factor", [](RunConfig& c) -> double& { return c.exp.train.lr_decay_factor; });
    b.integer<int>("train.lr_decay_every", [](RunConfig& c) -> int& { return c.exp.train.lr_decay_every; });
    b.dbl("train.adam_beta1", [](RunConfig& c) -> double& { return c.exp.train.adam_beta1; });
    b.dbl("train.adam_beta2", [](RunConfig& c) -> double& { return c.exp.train.adam_beta2; });
    b.dbl("train.adam_eps", [](RunConfig& c) -> double& { return c.exp.train.adam_eps; });
    b.integer<std::uint64_t>("train.seed", [](RunConfig& c) -> std::uint64_t& { return c.exp.train.seed; });
    b.integer<int>("train.views_per_sample", [](RunConfig& c) -> int& { return c.exp.train.views_per_sample; });
    b.boolean("train.image_raw_anchor", [](RunConfig& c) -> bool& { return c.exp.train.image_raw_anchor; });
    b.boolean("train.structured_raw_anchor", [](RunConfig& c) -> bool& { return c.exp.train.structured_raw_anchor; });
    // contrastive
    b.dbl("contrastive.temperature", [](RunConfig& c) -> double& { return c.exp.train.contrastive.temperature; });
    b.add(
        "contrastive.strategy", [](const RunConfig& c) { return to_string(c.exp.train.contrastive.strategy); },
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.exp.train.contrastive.strategy = parse_strategy(v);
        });
    b.integer<std::uint64_t>("contrastive.rng_seed",
                             [](RunConfig& c) -> std::uint64_t& { return c.exp.train.contrastive.rng_seed; });
    b.boolean("contrastive.use_intra", [](RunConfig& c) -> bool& { return c.exp.train.losses.intra; });
    b.boolean("contrastive.use_inter", [](RunConfig& c) -> bool& { return c.exp.train.losses.inter; });
    b.boolean("contrastive.use_fmcl", [](RunConfig& c) -> bool& { return c.exp.train.losses.fmcl; });
    // augment
    b.dbl("augment.flip_prob", [](RunConfig& c) -> double& { return c.exp.train.augment.flip_prob; });
    b.dbl("augment.blur_std_min", [](RunConfig& c) -> double& { return c.exp.train.augment.blur_std_range.first; });
    b.dbl("augment.blur_std_max", [](RunConfig& c) -> double& { return c.exp.train.augment.blur_std_range.second; });
    b.dbl("augment.noise_prob", [](RunConfig& c) -> double& { return c.exp.train.augment.noise_prob; });
    b.dbl("augment.noise_std", [](RunConfig& c) -> double& { return c.exp.train.augment.noise_std; });
    b.integer<int>("augment.patch_size", [](RunConfig& c) -> int& { return c.exp.train.augment.patch_size; });
    b.dbl("augment.patch_mask_prob", [](RunConfig& c) -> double& { return c.exp.train.augment.patch_mask_prob; });
    b.dbl("augment.structured_dropout",
          [](RunConfig& c) -> double& { return c.exp.train.augment.structured_dropout; });
    // experiment
    b.add(
        "experiment.seeds", [](const RunConfig& c) { return join(c.exp.seeds); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.exp.seeds = parse_list<std::uint64_t>(k, v);
          if (c.exp.seeds.empty()) throw ConfigError("config: " + k + " must list at least one seed");
        });
    return b;
  }();
  return b;
}

}  // namespace detail

/// Applies `section.key = value` on top of `base`.
inline void set_config_value(RunConfig& c, const std::string& dotted_key, const std::string& value) {
  const auto& b = detail::binder();
  if (!b.has(dotted_key)) throw ConfigError("config: unknown key '" + dotted_key + "'");
  b.set(c, dotted_key, detail::trim(value));
}

inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config: key '" + section + "' must be inside a [section]");
    for (const auto& [key, value] : body) set_config_value(base, section + "." + key, value.data());
  }
  base.synth.validate();
  base.exp.preprocess.validate();
  base.exp.train.validate();
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ResolutionError("cannot read config file: " + path.string());
  return parse_config(in);
}

inline void write_config(const RunConfig& c, std::ostream& out) {
  std::string section;
  for (const auto& key : detail::binder().keys()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << detail::binder().get(c, key) << "\n";
  }
}

inline std::string config_to_string(const RunConfig& c) {
  std::ostringstream os;
  write_config(c, os);
  return os.str();
}

}  // namespace fusionprog
