// pbt: run experiments, seed suites and post-hoc analysis from a config file.
//
//   pbt run --config toy.json [--seed 42] [--mode serial] [--out runs/toy]
//   pbt suite fig2 --config toy.json [--out runs/fig2]
//   pbt analyze runs/toy [--top-k 5]

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pbt/analysis.hpp"
#include "pbt/artifacts.hpp"
#include "pbt/config.hpp"
#include "pbt/engine.hpp"
#include "pbt/events.hpp"
#include "pbt/tasks.hpp"

namespace fs = std::filesystem;
using namespace pbt;

namespace {

constexpr int kExitError = 1;
constexpr int kExitExperimentFailed = 2;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> out;
};

ConfigFile load(const Overrides& o) {
  ConfigFile cfg = parse_config(fs::path(o.config));
  if (o.seed) cfg.experiment.seed = *o.seed;
  if (o.mode) cfg.experiment.mode = parse_execution_mode(*o.mode);
  return cfg;
}

fs::path output_dir(const ConfigFile& cfg, const Overrides& o, const std::string& fallback) {
  if (o.out) return *o.out;
  if (cfg.output_dir) return *cfg.output_dir;
  return fs::path("runs") / fallback;
}

// Refuses to mix a new run with an old one's files.
void prepare_run_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) {
      throw Error(dir.string() + " is not empty; pick another --out or pass --force");
    }
    for (const char* name : {kCurvesFile, kEventsFile, kFinalPopulationFile, kBestFile,
                             kResolvedConfigFile, kFailedMarker, "phylogeny.dot", "lineages.csv",
                             "curves_top_k.csv", "summary.csv", "runs.csv"}) {
      fs::remove(dir / name);
    }
    fs::remove_all(dir / "checkpoints");
  }
  fs::create_directories(dir);
}

int cmd_run(const Overrides& o, bool force) {
  const ConfigFile cfg = load(o);
  const auto task = make_task(cfg.task);
  const fs::path dir = output_dir(cfg, o, task->name() + "-seed" + std::to_string(cfg.experiment.seed));
  prepare_run_dir(dir, force);
  write_json_file(dir / kResolvedConfigFile, to_json(cfg));
  try {
    const RunReport report = run_experiment(cfg.experiment, *task, RunOptions{dir});
    write_run_artifacts(dir, cfg, report);
    std::cout << "best member " << report.best.id << " p=" << format_double(report.best_score())
              << " (" << report.failed.size() << " failed, " << report.wall_seconds << " s)\n"
              << "artifacts in " << dir.string() << '\n';
    return 0;
  } catch (const ExperimentFailure& ex) {
    write_curves_csv(dir / kCurvesFile, ex.partial().curves, ex.partial().hyperparams);
    write_final_population(dir / kFinalPopulationFile, ex.partial().final_population);
    write_failure_marker(dir, ex.what());
    std::cerr << "experiment failed: " << ex.what() << '\n';
    return kExitExperimentFailed;
  } catch (const std::exception& ex) {
    write_failure_marker(dir, ex.what());
    throw;
  }
}

// ---------------------------------------------------------------------------
// suites

struct Summary {
  double median = NAN, q25 = NAN, q75 = NAN, min = NAN, max = NAN;
};

// Linear interpolation between order statistics.
double quantile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Summary summarise(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  return {quantile(xs, 0.5), quantile(xs, 0.25), quantile(xs, 0.75),
          *std::min_element(xs.begin(), xs.end()), *std::max_element(xs.begin(), xs.end())};
}

struct SuiteRun {
  std::string variant;
  std::uint64_t seed = 0;
  std::optional<double> best;  // empty when the run failed
};

std::vector<SuiteRun> run_variants(const ConfigFile& cfg, const Task& task, const std::string& suite) {
  std::vector<SuiteRun> runs;
  auto record = [&](const std::string& variant, std::uint64_t seed, auto&& fn) {
    try {
      for (auto& [label, report] : fn()) {
        runs.push_back({variant.empty() ? label : variant, seed, report.best_score()});
      }
    } catch (const ExperimentFailure&) {
      runs.push_back({variant, seed, std::nullopt});
    }
  };
  for (std::uint64_t seed : cfg.suite.seeds) {
    ExperimentConfig c = cfg.experiment;
    c.seed = seed;
    auto single = [&](ExperimentConfig variant) {
      return std::vector<LabelledReport>{{"", run_experiment(variant, task)}};
    };
    if (suite == "fig2") {
      record("pbt", seed, [&] { return single(c); });
      record("exploit-only", seed, [&] { return single(ablation_config(c, AblationVariant::exploit_only)); });
      record("explore-only", seed, [&] { return single(ablation_config(c, AblationVariant::explore_only)); });
      record("grid", seed, [&] {
        return std::vector<LabelledReport>{{"", run_random_search_baseline(c, task)}};
      });
    } else if (suite == "ablations") {
      record("hyperparams-only", seed,
             [&] { return single(ablation_config(c, AblationVariant::hyperparams_only)); });
      record("weights-only", seed,
             [&] { return single(ablation_config(c, AblationVariant::weights_only)); });
      record("", seed, [&] { return run_ablation(c, task, AblationVariant::final_h_replay); });
    } else if (suite == "popsize") {
      for (int n : cfg.suite.population_sizes) {
        ExperimentConfig sized = c;
        sized.population_size = n;
        if (!sized.initial_h.empty() && n % static_cast<int>(sized.initial_h.size()) != 0) {
          throw Error("suite.population_sizes: " + std::to_string(n) +
                      " is not a multiple of the initial_h length");
        }
        record("N=" + std::to_string(n), seed, [&] { return single(sized); });
      }
    } else {
      throw Error("unknown suite '" + suite + "'");
    }
  }
  return runs;
}

int cmd_suite(const Overrides& o, const std::string& suite, bool force) {
  ConfigFile cfg = load(o);
  const auto task = make_task(cfg.task);
  const fs::path dir = output_dir(cfg, o, suite);
  prepare_run_dir(dir, force);
  write_json_file(dir / kResolvedConfigFile, to_json(cfg));

  const auto runs = run_variants(cfg, *task, suite);

  std::ofstream per_run(dir / "runs.csv");
  per_run << "variant,seed,best_q\n";
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> scores;
  std::map<std::string, int> failures;
  for (const auto& r : runs) {
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
    per_run << r.variant << ',' << r.seed << ',' << (r.best ? format_double(*r.best) : "failed") << '\n';
    if (r.best) {
      scores[r.variant].push_back(*r.best);
    } else {
      ++failures[r.variant];
    }
  }

  std::ofstream summary(dir / "summary.csv");
  summary << "variant,runs,failed,median,q25,q75,min,max\n";
  for (const auto& variant : order) {
    const Summary s = summarise(scores[variant]);
    summary << variant << ',' << scores[variant].size() + failures[variant] << ','
            << failures[variant] << ',' << format_double(s.median) << ',' << format_double(s.q25)
            << ',' << format_double(s.q75) << ',' << format_double(s.min) << ','
            << format_double(s.max) << '\n';
    std::cout << variant << ": median " << s.median << " [" << s.q25 << ", " << s.q75 << "]\n";
  }
  std::cout << "summary in " << (dir / "summary.csv").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_analyze(const fs::path& dir, int top_k) {
  const auto events = read_events(dir / kEventsFile);
  const auto population = read_final_population(dir / kFinalPopulationFile);
  std::vector<MemberId> final_members;
  for (const auto& m : population) {
    if (!m.failed) final_members.push_back(m.id);
  }
  const auto n = static_cast<int>(population.size());

  const Phylogeny tree = build_phylogeny(events, n);
  write_dot(dir / "phylogeny.dot", tree);
  write_lineages_csv(dir / "lineages.csv", extract_lineages(tree, final_members));
  const auto curves = read_curves_csv(dir / kCurvesFile);
  write_top_k_csv(dir / "curves_top_k.csv", aggregate_curves(curves, n, std::min(top_k, n)));

  const auto roots = tree.final_roots();
  std::cout << tree.nodes.size() << " nodes, " << roots.size() << " root(s) among "
            << final_members.size() << " final members\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Population based training runner"};
  app.require_subcommand(1);

  Overrides o;
  bool force = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the master seed");
    sub->add_option("--mode", o.mode, "serial | async | partial-sync")
        ->check(CLI::IsMember({"serial", "async", "partial-sync"}));
    sub->add_option("--out", o.out, "Output directory");
    sub->add_flag("--force", force, "Replace artifacts in a non-empty output directory");
  };

  auto* run = app.add_subcommand("run", "Run one experiment and write its artifacts");
  add_common(run);

  std::string suite_name;
  auto* suite = app.add_subcommand("suite", "Run a multi-seed suite and write summary.csv");
  suite->add_option("suite", suite_name, "fig2 | ablations | popsize")
      ->required()
      ->check(CLI::IsMember({"fig2", "ablations", "popsize"}));
  add_common(suite);

  std::string run_dir;
  int top_k = 5;
  auto* analyze = app.add_subcommand("analyze", "Rebuild phylogeny, lineages and top-k curves");
  analyze->add_option("run_dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  analyze->add_option("--top-k", top_k, "Members averaged per step")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(o, force);
    if (*suite) return cmd_suite(o, suite_name, force);
    if (*analyze) return cmd_analyze(run_dir, top_k);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
