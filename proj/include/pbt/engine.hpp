#pragma once

// The PBT worker loop and the experiment drivers built on it.
//
// Each member repeatedly steps its parameters, periodically evaluates and
// publishes to the store, and when ready asks an exploit strategy for a better
// member to copy. A successful copy is followed by explore and an immediate
// re-evaluation. Members interact only through the store.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbt/core.hpp"
#include "pbt/events.hpp"
#include "pbt/rng.hpp"
#include "pbt/store.hpp"
#include "pbt/tasks.hpp"

namespace pbt {

struct CurveRecord {
  std::int64_t step = 0;
  MemberId member_id = 0;
  double p = kUnevaluated;
  HyperparamVector h;
  bool operator==(const CurveRecord&) const = default;
};

struct RunReport {
  std::vector<CurveRecord> curves;  // sorted by (step, member)
  std::vector<MemberState> final_population;
  MemberState best;
  std::vector<LineageEvent> events;
  std::vector<HyperparamSpec> hyperparams;
  std::optional<std::filesystem::path> event_log;
  std::vector<MemberId> failed;
  std::int64_t step_calls = 0;
  double wall_seconds = 0.0;

  /// Highest final p among live members.
  double best_score() const { return best.p; }
};

/// Thrown when more than half the population failed. Carries what was run.
class ExperimentFailure : public Error {
 public:
  ExperimentFailure(const std::string& what, RunReport partial)
      : Error(what), partial_(std::move(partial)) {}
  const RunReport& partial() const { return partial_; }

 private:
  RunReport partial_;
};

/// Hyperparameter specs in effect: the config's list, or the task's with the
/// config's perturb factors.
std::vector<HyperparamSpec> resolve_hyperparams(const ExperimentConfig& config, const Task& task);

/// N members at t = 0: parameters from task.init with per-member seeds, h from
/// the explicit initial list (member i takes entry i mod L) or the priors.
std::vector<MemberState> init_population(const ExperimentConfig& config, const Task& task);

/// Cross product of per-hyperparameter value lists, in name order.
std::vector<HyperparamVector> grid_product(
    const std::vector<std::pair<std::string, std::vector<HyperValue>>>& axes);

/// Outcome of a ready member's exploit step.
struct ExploitDecision {
  bool ready = false;
  std::optional<MemberId> source;
};

/// One member's training loop. Owns the member's state between store events.
class MemberWorker {
 public:
  MemberWorker(MemberState initial, const Task& task, const ExperimentConfig& config,
               std::span<const HyperparamSpec> specs, PopulationStore& store,
               MemberStreams streams);

  bool done() const { return state_.failed || state_.t >= config_->total_steps; }

  /// step; eval + publish when due (or when t == eval_also_at); then, if
  /// `exploit_inline`, the ready check and exploit/explore.
  void iterate(bool exploit_inline = true, std::int64_t eval_also_at = -1);

  /// Ready check against `population`; consumes the exploit stream.
  ExploitDecision decide(const StoreSnapshot& population);

  /// Copies from `source` (when the decision has one), explores and re-evaluates.
  void apply(const ExploitDecision& decision, const std::optional<Checkpoint>& source);

  const MemberState& state() const { return state_; }
  const std::vector<CurveRecord>& curves() const { return curves_; }
  /// Steps t at which the member was ready and consulted the exploit strategy.
  const std::vector<std::int64_t>& ready_checks() const { return ready_checks_; }
  std::int64_t step_calls() const { return step_calls_; }

 private:
  void evaluate_and_publish(std::optional<MemberId> parent);
  void explore_hyperparams();
  void record_curve();
  void fail();

  MemberState state_;
  const Task* task_;
  const ExperimentConfig* config_;
  std::span<const HyperparamSpec> specs_;
  PopulationStore* store_;
  MemberStreams streams_;
  std::vector<CurveRecord> curves_;
  std::vector<std::int64_t> ready_checks_;
  std::int64_t step_calls_ = 0;
};

/// Runs `worker` until t = T or failure.
void run_member_loop(MemberWorker& worker);

/// Runs one member with streams derived from config.seed; returns its final state.
MemberState run_member_loop(MemberState member, const Task& task, const ExperimentConfig& config,
                            PopulationStore& store);

struct RunOptions {
  /// When set, checkpoints and events.jsonl are written under this directory.
  std::optional<std::filesystem::path> run_dir;
};

RunReport run_experiment(const ExperimentConfig& config, const Task& task,
                         const RunOptions& options = {});

/// The same population with exploit and explore off: every member keeps its
/// initial h for all T steps.
RunReport run_random_search_baseline(const ExperimentConfig& config, const Task& task,
                                     const RunOptions& options = {});

enum class AblationVariant {
  exploit_only,
  explore_only,
  hyperparams_only,
  weights_only,
  population_size_sweep,
  final_h_replay,
};

std::string_view to_string(AblationVariant v);
AblationVariant parse_ablation_variant(std::string_view s);

struct LabelledReport {
  std::string label;
  RunReport report;
};

/// Population sizes for the sweep variant.
inline const std::vector<int> kDefaultSweepSizes{10, 20, 40, 80};

/// Runs an ablation of `config`. Most variants return one report; the sweep
/// returns one per size and final-h-replay returns {"pbt", "final-h-replay"}.
std::vector<LabelledReport> run_ablation(const ExperimentConfig& config, const Task& task,
                                         AblationVariant variant,
                                         std::span<const int> sweep_sizes = kDefaultSweepSizes);

/// `config` adjusted for a variant (not the sweep or replay, which need runs).
ExperimentConfig ablation_config(ExperimentConfig config, AblationVariant variant);

}  // namespace pbt
