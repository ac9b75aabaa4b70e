#include "pbt/core.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <set>

namespace pbt {

void HyperparamSpec::validate() const {
  if (name.empty()) throw Error("hyperparameter with empty name");
  switch (prior.kind) {
    case PriorKind::log_uniform:
      if (!(prior.lo > 0.0)) throw Error("hyperparameter '" + name + "': log-uniform needs lo > 0");
      [[fallthrough]];
    case PriorKind::uniform:
      if (!std::isfinite(prior.lo) || !std::isfinite(prior.hi) || !(prior.lo < prior.hi)) {
        throw Error("hyperparameter '" + name + "': prior needs finite lo < hi");
      }
      break;
    case PriorKind::categorical:
      if (prior.choices.empty()) throw Error("hyperparameter '" + name + "': empty category list");
      break;
  }
  if (!(perturb_factors.up > perturb_factors.down && perturb_factors.down > 0.0)) {
    throw Error("hyperparameter '" + name + "': perturb factors need up > down > 0");
  }
  if (!(resample_prob >= 0.0 && resample_prob <= 1.0)) {
    throw Error("hyperparameter '" + name + "': resample_prob outside [0, 1]");
  }
}

double numeric(const HyperparamVector& h, std::string_view name) {
  auto it = h.find(name);
  if (it == h.end()) throw Error("missing hyperparameter '" + std::string(name) + "'");
  const double* v = std::get_if<double>(&it->second);
  if (v == nullptr) throw Error("hyperparameter '" + std::string(name) + "' is categorical");
  return *v;
}

void validate_hyperparams(const HyperparamVector& h, std::span<const HyperparamSpec> specs) {
  if (h.size() != specs.size()) throw Error("hyperparameter keys do not match the spec list");
  for (const auto& spec : specs) {
    auto it = h.find(spec.name);
    if (it == h.end()) throw Error("missing hyperparameter '" + spec.name + "'");
    if (spec.prior.kind == PriorKind::categorical) continue;
    const double* v = std::get_if<double>(&it->second);
    if (v == nullptr || !std::isfinite(*v)) {
      throw Error("hyperparameter '" + spec.name + "' must be a finite number");
    }
    if (spec.prior.kind == PriorKind::log_uniform && !(*v > 0.0)) {
      throw Error("hyperparameter '" + spec.name + "' must be positive (log-uniform prior)");
    }
  }
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x,
                                 std::chars_format::general, 17);
  return {buf.data(), end};
}

std::string format_value(const HyperValue& v) {
  if (const double* d = std::get_if<double>(&v)) return format_double(*d);
  return std::get<std::string>(v);
}

EvalWindow::EvalWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error("eval window capacity must be positive");
}

void EvalWindow::push(double score) {
  scores_.push_front(score);
  while (scores_.size() > capacity_) scores_.pop_back();
}

bool operator==(const MemberState& a, const MemberState& b) {
  return a.id == b.id && a.theta.size() == b.theta.size() && a.theta == b.theta && a.h == b.h &&
         (a.p == b.p || (std::isnan(a.p) && std::isnan(b.p))) && a.t == b.t &&
         a.window == b.window && a.steps_since_event == b.steps_since_event &&
         a.ancestor_id == b.ancestor_id && a.version == b.version && a.failed == b.failed;
}

bool ready(const MemberState& member, std::int64_t ready_interval) {
  return member.steps_since_event >= ready_interval;
}

MemberState record_eval(MemberState member, double score) {
  if (!std::isfinite(score)) {
    throw Error("member " + std::to_string(member.id) + ": non-finite eval score " +
                format_double(score));
  }
  member.window.push(score);
  member.p = score;
  ++member.version;
  return member;
}

MemberState best(std::span<const MemberState> population) {
  if (population.empty()) throw Error("best() of an empty population");
  const MemberState* top = &population.front();
  for (const auto& m : population) {
    if (m.p > top->p || (m.p == top->p && m.id < top->id)) top = &m;
  }
  return *top;
}

void ExperimentConfig::validate() const {
  if (population_size < 1) throw Error("population_size must be >= 1");
  if (population_size < 2 && !is_baseline()) {
    throw Error("population_size must be >= 2 when exploit or explore is enabled");
  }
  if (total_steps < 1) throw Error("total_steps must be >= 1");
  if (ready_interval < 1) throw Error("ready_interval must be >= 1");
  if (eval_every < 1) throw Error("eval_every must be >= 1");
  if (window_capacity < 1) throw Error("window must be >= 1");
  if (partial_sync_quantum < 0) throw Error("partial_sync_quantum must be >= 0");
  if (!(exploit.truncation_fraction > 0.0 && exploit.truncation_fraction <= 0.5)) {
    throw Error("truncation_fraction must lie in (0, 0.5]");
  }
  if (!(exploit.alpha > 0.0 && exploit.alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
  if (explore.kind == ExploreKind::perturb &&
      !(explore.factors.up > 1.0 && explore.factors.down <= 1.0 && explore.factors.down > 0.0)) {
    throw Error("perturb factors must satisfy up > 1 >= down > 0");
  }
  if (!(explore.sigma >= 0.0) || !std::isfinite(explore.sigma)) {
    throw Error("sigma must be finite and >= 0");
  }
  std::set<std::string, std::less<>> names;
  for (const auto& spec : hyperparams) {
    spec.validate();
    if (!names.insert(spec.name).second) {
      throw Error("duplicate hyperparameter '" + spec.name + "'");
    }
  }
  if (!initial_h.empty() && population_size % static_cast<int>(initial_h.size()) != 0) {
    throw Error("population_size must be a multiple of the initial_h list length");
  }
}

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::pair<std::string_view, Enum>, N>& table,
                std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw Error("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

template <typename Enum, std::size_t N>
std::string_view enum_name(Enum e, const std::array<std::pair<std::string_view, Enum>, N>& table) {
  for (const auto& [name, value] : table) {
    if (value == e) return name;
  }
  return "?";
}

constexpr std::array<std::pair<std::string_view, ExploitKind>, 4> kExploitKinds{{
    {"t-test", ExploitKind::ttest},
    {"truncation", ExploitKind::truncation},
    {"binary-tournament", ExploitKind::binary_tournament},
    {"none", ExploitKind::none},
}};
constexpr std::array<std::pair<std::string_view, ExploreKind>, 4> kExploreKinds{{
    {"perturb", ExploreKind::perturb},
    {"resample", ExploreKind::resample},
    {"gaussian", ExploreKind::gaussian},
    {"none", ExploreKind::none},
}};
constexpr std::array<std::pair<std::string_view, ExploitMask>, 4> kMasks{{
    {"all", ExploitMask::all},
    {"hyperparams-only", ExploitMask::hyperparams_only},
    {"weights-only", ExploitMask::weights_only},
    {"none", ExploitMask::none},
}};
constexpr std::array<std::pair<std::string_view, ExecutionMode>, 3> kModes{{
    {"serial", ExecutionMode::serial},
    {"async", ExecutionMode::async},
    {"partial-sync", ExecutionMode::partial_sync},
}};
constexpr std::array<std::pair<std::string_view, PriorKind>, 3> kPriors{{
    {"log-uniform", PriorKind::log_uniform},
    {"uniform", PriorKind::uniform},
    {"categorical", PriorKind::categorical},
}};

}  // namespace

std::string_view to_string(ExploitKind k) { return enum_name(k, kExploitKinds); }
std::string_view to_string(ExploreKind k) { return enum_name(k, kExploreKinds); }
std::string_view to_string(ExploitMask m) { return enum_name(m, kMasks); }
std::string_view to_string(ExecutionMode m) { return enum_name(m, kModes); }
std::string_view to_string(PriorKind k) { return enum_name(k, kPriors); }

ExploitKind parse_exploit_kind(std::string_view s) { return parse_enum(s, kExploitKinds, "exploit kind"); }
ExploreKind parse_explore_kind(std::string_view s) { return parse_enum(s, kExploreKinds, "explore kind"); }
ExploitMask parse_exploit_mask(std::string_view s) { return parse_enum(s, kMasks, "exploit mask"); }
ExecutionMode parse_execution_mode(std::string_view s) { return parse_enum(s, kModes, "execution mode"); }
PriorKind parse_prior_kind(std::string_view s) { return parse_enum(s, kPriors, "prior"); }

}  // namespace pbt
