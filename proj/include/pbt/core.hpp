#pragma once

// Domain types shared by every module: parameters, hyperparameters, the
// per-member state tuple, and experiment configuration.

#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace pbt {

using ParamVector = Eigen::VectorXd;
using MemberId = int;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kUnevaluated = -std::numeric_limits<double>::infinity();

/// True iff every entry is finite.
template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  return v.allFinite();
}

// ---------------------------------------------------------------------------
// Hyperparameters

/// A hyperparameter value: numeric, or a categorical token.
using HyperValue = std::variant<double, std::string>;

/// Current values of the named hyperparameters, ordered by name.
using HyperparamVector = std::map<std::string, HyperValue, std::less<>>;

enum class PriorKind { log_uniform, uniform, categorical };

struct Prior {
  PriorKind kind = PriorKind::uniform;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<HyperValue> choices;  // categorical only

  static Prior log_uniform(double lo, double hi) { return {PriorKind::log_uniform, lo, hi, {}}; }
  static Prior uniform(double lo, double hi) { return {PriorKind::uniform, lo, hi, {}}; }
  static Prior categorical(std::vector<HyperValue> choices) {
    return {PriorKind::categorical, 0.0, 0.0, std::move(choices)};
  }

  bool bounded() const { return kind != PriorKind::categorical; }
  bool operator==(const Prior&) const = default;
};

struct PerturbFactors {
  double up = 1.2;
  double down = 0.8;
  bool operator==(const PerturbFactors&) const = default;
};

struct HyperparamSpec {
  std::string name;
  Prior prior;
  PerturbFactors perturb_factors;
  double resample_prob = 0.25;
  bool clamp_to_prior = true;
  // Perturbed in real space, then rounded to nearest (never below prior.lo).
  bool integer = false;

  /// Throws Error when the prior or factors are ill-formed.
  void validate() const;
  bool operator==(const HyperparamSpec&) const = default;
};

/// Numeric value of `name`; throws if absent or categorical.
double numeric(const HyperparamVector& h, std::string_view name);

/// Checks keys match `specs` exactly and numeric values respect their priors'
/// domain (finite; positive under log-uniform).
void validate_hyperparams(const HyperparamVector& h, std::span<const HyperparamSpec> specs);

/// 17 significant digits; round-trips any finite double. Infinities print as
/// "inf"/"-inf".
std::string format_double(double x);
std::string format_value(const HyperValue& v);

// ---------------------------------------------------------------------------
// Evaluation window

/// Fixed-capacity score history, most recent first.
class EvalWindow {
 public:
  explicit EvalWindow(std::size_t capacity = 10);

  void push(double score);
  void clear() { scores_.clear(); }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return scores_.size(); }
  bool empty() const { return scores_.empty(); }
  double newest() const { return scores_.front(); }
  const std::deque<double>& scores() const { return scores_; }
  std::vector<double> values() const { return {scores_.begin(), scores_.end()}; }

  bool operator==(const EvalWindow&) const = default;

 private:
  std::size_t capacity_;
  std::deque<double> scores_;
};

// ---------------------------------------------------------------------------
// Member state

struct MemberState {
  MemberId id = 0;
  ParamVector theta;
  HyperparamVector h;
  double p = kUnevaluated;
  std::int64_t t = 0;
  EvalWindow window;
  std::int64_t steps_since_event = 0;
  MemberId ancestor_id = 0;
  std::uint64_t version = 0;
  bool failed = false;
};

bool operator==(const MemberState& a, const MemberState& b);

/// Whether the member has trained long enough since its last exploit/explore
/// check to go through another one.
bool ready(const MemberState& member, std::int64_t ready_interval);

/// Pushes `score` into the window, sets p, bumps the version. Throws on a
/// non-finite score.
MemberState record_eval(MemberState member, double score);

/// Member with the highest p; ties go to the lowest id. Throws on empty input.
MemberState best(std::span<const MemberState> population);

// ---------------------------------------------------------------------------
// Experiment configuration

enum class ExploitKind { ttest, truncation, binary_tournament, none };
enum class ExploreKind { perturb, resample, gaussian, none };
enum class ExploitMask { all, hyperparams_only, weights_only, none };
enum class ExecutionMode { serial, async, partial_sync };

struct ExploitConfig {
  ExploitKind kind = ExploitKind::truncation;
  double truncation_fraction = 0.2;
  double alpha = 0.05;  // one-sided
  bool operator==(const ExploitConfig&) const = default;
};

struct ExploreConfig {
  ExploreKind kind = ExploreKind::perturb;
  PerturbFactors factors;
  double sigma = 0.1;  // gaussian only
  bool operator==(const ExploreConfig&) const = default;
};

struct ExperimentConfig {
  int population_size = 0;
  std::int64_t total_steps = 0;
  std::int64_t ready_interval = 10;
  std::int64_t eval_every = 1;
  int window_capacity = 10;
  ExploitConfig exploit;
  ExploreConfig explore;
  ExploitMask exploit_mask = ExploitMask::all;
  ExecutionMode mode = ExecutionMode::serial;
  std::int64_t partial_sync_quantum = 0;  // 0 selects ready_interval
  std::uint64_t seed = 0;
  std::vector<HyperparamSpec> hyperparams;     // empty: use the task's
  std::vector<HyperparamVector> initial_h;     // empty: sample from priors

  bool is_baseline() const {
    return exploit.kind == ExploitKind::none && explore.kind == ExploreKind::none;
  }
  std::int64_t quantum() const {
    return partial_sync_quantum > 0 ? partial_sync_quantum : ready_interval;
  }
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

std::string_view to_string(ExploitKind k);
std::string_view to_string(ExploreKind k);
std::string_view to_string(ExploitMask m);
std::string_view to_string(ExecutionMode m);
std::string_view to_string(PriorKind k);

ExploitKind parse_exploit_kind(std::string_view s);
ExploreKind parse_explore_kind(std::string_view s);
ExploitMask parse_exploit_mask(std::string_view s);
ExecutionMode parse_execution_mode(std::string_view s);
PriorKind parse_prior_kind(std::string_view s);

}  // namespace pbt
