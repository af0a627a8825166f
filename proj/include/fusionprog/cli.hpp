#pragma once

// Command-line front end: synth, describe, train, eval, ablate, verify.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fusionprog/checkpoint.hpp"
#include "fusionprog/config.hpp"
#include "fusionprog/dataset.hpp"
#include "fusionprog/eval.hpp"
#include "fusionprog/synthgen.hpp"
#include "fusionprog/training.hpp"
#include "fusionprog/verify/suites.hpp"

namespace fusionprog::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kFailure = 2;

namespace fs = std::filesystem;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::vector<std::string> overrides;  // section.key=value
};

namespace detail {

inline RunConfig effective_config(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : load_config(g.config);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    set_config_value(c, fusionprog::detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  c.synth.validate();
  c.exp.preprocess.validate();
  c.exp.train.validate();
  return c;
}

inline void apply_train_seed(RunConfig& c, const Globals& g) {
  if (!g.seed) return;
  c.exp.train.seed = *g.seed;
  c.exp.train.contrastive.rng_seed = *g.seed;
}

/// `path` may name a manifest file or the directory holding manifest.csv.
inline Manifest load_data(const fs::path& path) {
  return load_manifest(fs::is_directory(path) ? path / "manifest.csv" : path);
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  if (!f) throw ResolutionError("cannot write " + p.string());
  f << text;
}

/// Every command that has an output directory records the effective config
/// and the command line there.
inline void snapshot(const fs::path& out, const RunConfig& c, const std::vector<std::string>& argv) {
  fs::create_directories(out);
  std::string cmd = "fusionprog";
  for (std::size_t i = 1; i < argv.size(); ++i) cmd += " " + argv[i];
  write_text(out / "config.ini", "; " + cmd + "\n" + config_to_string(c));
}

inline std::string json_line(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

inline std::pair<Checkpoint, std::optional<Checkpoint>> load_resume(const fs::path& dir) {
  const fs::path state = fs::exists(dir / "last" / "manifest.json") ? dir / "last" : dir;
  Checkpoint s = load_checkpoint(state);
  std::optional<Checkpoint> best;
  if (state != dir && fs::exists(dir / "best" / "manifest.json")) best = load_checkpoint(dir / "best");
  return {std::move(s), std::move(best)};
}

/// Rebuilds the preprocessing that produced `ckpt` and applies it to `manifest`.
inline PreparedData prepare_like(const Manifest& manifest, const Checkpoint& ckpt) {
  if (!ckpt.preprocess.contains("config") || !ckpt.preprocess.contains("structured"))
    throw ConfigError("checkpoint has no preprocessing state");
  const auto cfg = preprocess_config_from_json(ckpt.preprocess.at("config"));
  const auto pipeline = StructuredPipeline::from_json(ckpt.preprocess.at("structured"));
  return prepare_data(manifest, cfg, &pipeline);
}

inline void print_warnings(const PreparedData& d, std::ostream& err) {
  if (d.warnings.empty()) return;
  err << d.warnings.size() << " preprocessing warning(s); first: " << d.warnings.front() << "\n";
}

}  // namespace detail

/// Runs the CLI on `args` (args[0] is the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Two-stage cross-modality contrastive fusion network: data synthesis, training, evaluation, ablation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed override (synth.seed, or train seed for train/ablate)");
  app.add_option("--config", g.config, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--set", g.overrides, "Config override section.key=value (repeatable)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort (manifest + volumes)");

  auto* describe = app.add_subcommand("describe", "Per-class cohort summary of a dataset");
  std::string data_dir;
  describe->add_option("--data", data_dir, "Dataset directory or manifest")->required();

  auto* train = app.add_subcommand("train", "Train stage 1 (contrastive) or stage 2 (classification)");
  int stage = 0;
  std::string init_dir, resume_dir;
  train->add_option("--stage", stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--data", data_dir, "Dataset directory or manifest")->required();
  train->add_option("--init", init_dir, "Stage-1 checkpoint for stage 2")->check(CLI::ExistingDirectory);
  train->add_option("--resume", resume_dir, "Output dir (or checkpoint) of an interrupted run of the same stage")
      ->check(CLI::ExistingDirectory);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  std::string ckpt_dir, split_name = "test";
  eval->add_option("--ckpt", ckpt_dir, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--data", data_dir, "Dataset directory or manifest")->required();
  eval->add_option("--split", split_name, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  auto* ablate = app.add_subcommand("ablate", "Run an ablation table over all configured seeds");
  std::string grid;
  ablate->add_option("--grid", grid, "table3, table4 or table5")->required()->check(
      CLI::IsMember({"table3", "table4", "table5"}));
  ablate->add_option("--data", data_dir, "Dataset directory or manifest")->required();

  auto* verify_cmd = app.add_subcommand("verify", "Oracle, closed-form, gradient and augmentation checks");
  std::string suite = "all";
  verify_cmd->add_option("--suite", suite, "losses, metrics, gradients, augment or all")
      ->check(CLI::IsMember({"losses", "metrics", "gradients", "augment", "all"}));

  for (auto* sub : {synth, describe, train, eval, ablate, verify_cmd}) sub->fallthrough();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return kUsage;
  }
  if (seed_opt->count()) g.seed = seed_value;

  const bool needs_out = synth->parsed() || train->parsed() || ablate->parsed();
  if (needs_out && g.out.empty()) {
    const CLI::App* sub = synth->parsed() ? synth : train->parsed() ? train : ablate;
    err << "error: --out is required for " << sub->get_name() << "\n\n" << sub->help();
    return kUsage;
  }

  try {
    if (synth->parsed()) {
      RunConfig c = detail::effective_config(g);
      if (g.seed) c.synth.seed = *g.seed;
      detail::snapshot(g.out, c, args);
      const Manifest m = generate_cohort(c.synth, g.out);
      const auto summary = describe_cohort(m);
      detail::write_text(fs::path(g.out) / "cohort.md", summary.to_markdown());
      out << "wrote " << m.size() << " patients (" << summary.class_counts[0] << " negative, "
          << summary.class_counts[1] << " positive) to " << g.out << "\n";
      return kOk;
    }

    if (describe->parsed()) {
      const auto md = describe_cohort(detail::load_data(data_dir)).to_markdown();
      out << md;
      if (!g.out.empty()) {
        detail::snapshot(g.out, detail::effective_config(g), args);
        detail::write_text(fs::path(g.out) / "cohort.md", md);
      }
      return kOk;
    }

    if (train->parsed()) {
      RunConfig c = detail::effective_config(g);
      detail::apply_train_seed(c, g);
      TrainConfig tc = c.exp.train;
      tc.stage = stage == 1 ? Stage::Stage1 : Stage::Stage2;
      const Manifest manifest = detail::load_data(data_dir);

      std::optional<Checkpoint> init;
      if (!init_dir.empty()) {
        if (stage != 2) throw ConfigError("--init applies to stage 2 only");
        init = load_checkpoint(init_dir);
      }
      // Stage 2 from a stage-1 checkpoint reuses its fitted preprocessing.
      PreparedData data = init ? detail::prepare_like(manifest, *init) : prepare_data(manifest, c.exp.preprocess);
      if (init) c.exp.preprocess = data.config;
      detail::print_warnings(data, err);

      ModelConfig model = init ? init->model : c.exp.model;
      model.image.in_channels = data.n_slices();
      model.structured.in_dim = data.n_attrs();
      c.exp.model = model;
      model.validate();

      const fs::path outdir(g.out);
      detail::snapshot(outdir, c, args);
      std::ofstream log(outdir / "train.jsonl", resume_dir.empty() ? std::ios::trunc : std::ios::app);
      TrainOptions opts;
      opts.log = &log;
      opts.diag_dir = outdir / "diagnostics";
      std::optional<std::pair<Checkpoint, std::optional<Checkpoint>>> resume;
      if (!resume_dir.empty()) {
        resume = detail::load_resume(resume_dir);
        opts.resume = &resume->first;
        if (resume->second) opts.resume_best = &*resume->second;
      }
      opts.on_epoch = [&](const Checkpoint& state, const Checkpoint& best) {
        save_checkpoint(state, outdir / "last");
        save_checkpoint(best, outdir / "best");
        log.flush();
        err << "stage " << stage << " epoch " << state.epoch << "/" << tc.epochs << "  best " << state.metric_name
            << " " << best.best_metric << " (epoch " << best.best_epoch << ")\n";
      };

      const TrainResult r = stage == 1 ? train_stage1<float>(data, model, tc, opts)
                                       : train_stage2<float>(data, init ? &*init : nullptr, model, tc, opts);
      save_checkpoint(r.final_state, outdir / "final");
      save_checkpoint(r.best, outdir / "best");
      nlohmann::ordered_json summary{{"stage", stage},
                                     {"epochs", tc.epochs},
                                     {"best_epoch", r.best.best_epoch},
                                     {r.best.metric_name, r.best.best_metric}};
      if (stage == 2) {
        auto net = load_network<float>(r.best);
        summary["val"] = to_json(evaluate(*net, data, Split::Val, tc.batch_size));
        summary["test"] = to_json(evaluate(*net, data, Split::Test, tc.batch_size));
      }
      detail::write_text(outdir / "summary.json", detail::json_line(summary));
      out << summary.dump(2) << "\n";
      return kOk;
    }

    if (eval->parsed()) {
      const Checkpoint ckpt = load_checkpoint(ckpt_dir);
      const PreparedData data = detail::prepare_like(detail::load_data(data_dir), ckpt);
      detail::print_warnings(data, err);
      auto net = load_network<float>(ckpt);
      const auto split = parse_split(split_name);
      const auto rep = evaluate(*net, data, split);
      out << to_json(rep).dump(2) << "\n";
      if (!g.out.empty()) {
        detail::snapshot(g.out, detail::effective_config(g), args);
        detail::write_text(fs::path(g.out) / ("metrics_" + split_name + ".json"), detail::json_line(to_json(rep)));
      }
      return kOk;
    }

    if (ablate->parsed()) {
      RunConfig c = detail::effective_config(g);
      if (g.seed) c.exp.seeds = {*g.seed};
      const fs::path outdir(g.out);
      detail::snapshot(outdir, c, args);
      const Manifest manifest = detail::load_data(data_dir);
      std::ofstream log(outdir / "ablate.jsonl");
      RunCache cache;
      auto progress = [&](const std::string& msg) { err << grid << ": " << msg << "\n"; };
      ResultTable table;
      if (grid == "table5") {
        table = run_baselines(manifest, c.exp, cache, progress, &log);
      } else {
        const PreparedData data = prepare_data(manifest, c.exp.preprocess);
        detail::print_warnings(data, err);
        table = run_ablation(grid, AblationGrid::standard(), data, c.exp, cache, progress, &log);
      }
      const Report rep = render_report({table});
      detail::write_text(outdir / (grid + ".md"), rep.markdown);
      detail::write_text(outdir / (grid + ".json"), detail::json_line(rep.json));
      out << rep.markdown;
      for (const auto& row : table.rows)
        if (row.failed) {
          err << "row " << row.spec.id << " failed: " << row.error << "\n";
          return kFailure;
        }
      return kOk;
    }

    if (verify_cmd->parsed()) {
      const auto results = verify::run_suite(suite);
      bool ok = true;
      nlohmann::ordered_json j = nlohmann::ordered_json::array();
      for (const auto& r : results) {
        out << "[" << (r.passed() ? "PASS" : "FAIL") << "] " << r.suite << " (" << r.seconds << " s)\n";
        nlohmann::ordered_json checks = nlohmann::ordered_json::array();
        for (const auto& ch : r.checks) {
          out << "    " << (ch.passed ? "ok   " : "FAIL ") << ch.name << ": " << ch.detail << "\n";
          checks.push_back({{"name", ch.name}, {"passed", ch.passed}, {"detail", ch.detail}});
        }
        j.push_back({{"suite", r.suite}, {"passed", r.passed()}, {"seconds", r.seconds}, {"checks", checks}});
        ok = ok && r.passed();
      }
      if (!g.out.empty()) {
        detail::snapshot(g.out, detail::effective_config(g), args);
        detail::write_text(fs::path(g.out) / "verify.json", detail::json_line(j));
      }
      return ok ? kOk : kFailure;
    }
  } catch (const std::exception& e) {
    err << "fusionprog: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace fusionprog::cli
