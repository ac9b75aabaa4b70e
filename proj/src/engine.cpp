#include "pbt/engine.hpp"

#include <algorithm>
#include <array>
#include <exception>
#include <memory>
#include <thread>

#include "pbt/strategies.hpp"

namespace pbt {

std::vector<HyperparamSpec> resolve_hyperparams(const ExperimentConfig& config, const Task& task) {
  if (!config.hyperparams.empty()) return config.hyperparams;
  auto specs = task.hyperparam_specs();
  for (auto& spec : specs) spec.perturb_factors = config.explore.factors;
  return specs;
}

std::vector<MemberState> init_population(const ExperimentConfig& config, const Task& task) {
  if (config.population_size < 1) throw Error("population_size must be >= 1");
  const auto specs = resolve_hyperparams(config, task);
  std::vector<MemberState> members;
  members.reserve(static_cast<std::size_t>(config.population_size));
  for (MemberId id = 0; id < config.population_size; ++id) {
    MemberState m;
    m.id = id;
    m.theta = task.init(derive_seed(config.seed, id, StreamPurpose::init));
    if (m.theta.size() != task.dim()) throw Error("task init returned the wrong dimension");
    if (config.initial_h.empty()) {
      Rng rng(derive_seed(config.seed, id, StreamPurpose::hyperparams));
      m.h = sample_hyperparams(specs, rng);
    } else {
      m.h = config.initial_h[static_cast<std::size_t>(id) % config.initial_h.size()];
    }
    validate_hyperparams(m.h, specs);
    m.window = EvalWindow(static_cast<std::size_t>(config.window_capacity));
    m.ancestor_id = id;
    members.push_back(std::move(m));
  }
  return members;
}

std::vector<HyperparamVector> grid_product(
    const std::vector<std::pair<std::string, std::vector<HyperValue>>>& axes) {
  std::vector<HyperparamVector> out{HyperparamVector{}};
  for (const auto& [name, values] : axes) {
    if (values.empty()) throw Error("grid axis '" + name + "' has no values");
    std::vector<HyperparamVector> next;
    for (const auto& partial : out) {
      for (const auto& v : values) {
        auto h = partial;
        h.insert_or_assign(name, v);
        next.push_back(std::move(h));
      }
    }
    out = std::move(next);
  }
  return out;
}

// ---------------------------------------------------------------------------

MemberWorker::MemberWorker(MemberState initial, const Task& task, const ExperimentConfig& config,
                           std::span<const HyperparamSpec> specs, PopulationStore& store,
                           MemberStreams streams)
    : state_(std::move(initial)),
      task_(&task),
      config_(&config),
      specs_(specs),
      store_(&store),
      streams_(std::move(streams)) {}

void MemberWorker::iterate(bool exploit_inline, std::int64_t eval_also_at) {
  if (done()) return;
  try {
    state_.theta = task_->step(state_.theta, state_.h, streams_.step);
  } catch (const Error&) {
    fail();
    return;
  }
  ++state_.t;
  ++state_.steps_since_event;
  ++step_calls_;

  const bool due = state_.t % config_->eval_every == 0 || state_.t == config_->total_steps ||
                   state_.t == eval_also_at;
  if (!due) return;
  evaluate_and_publish(std::nullopt);
  if (state_.failed) return;
  if (exploit_inline && ready(state_, config_->ready_interval)) {
    const auto decision = decide(store_->snapshot());
    std::optional<Checkpoint> source;
    if (decision.source) source = store_->acquire_source(*decision.source);
    apply(decision, source);
  }
  record_curve();
}

ExploitDecision MemberWorker::decide(const StoreSnapshot& population) {
  ExploitDecision d;
  if (state_.failed || !ready(state_, config_->ready_interval)) return d;
  d.ready = true;
  ready_checks_.push_back(state_.t);
  ++streams_.exploit_calls;
  if (config_->exploit_mask != ExploitMask::none) {
    d.source = select_exploit_source(state_, population, config_->exploit, streams_.exploit);
  }
  return d;
}

void MemberWorker::apply(const ExploitDecision& decision, const std::optional<Checkpoint>& source) {
  if (!decision.ready || state_.failed) return;
  state_.steps_since_event = 0;
  if (decision.source) {
    if (!source) throw Error("exploit decision without a source checkpoint");
    state_ = store_->exploit_copy(state_.id, *source, config_->exploit_mask);
    if (config_->explore.kind != ExploreKind::none) explore_hyperparams();
    evaluate_and_publish(source->member_id);
  } else if (config_->exploit.kind == ExploitKind::none &&
             config_->explore.kind != ExploreKind::none) {
    explore_hyperparams();
    ++state_.version;
    store_->publish(state_);
  }
  if (!state_.failed) record_curve();
}

void MemberWorker::explore_hyperparams() {
  ++streams_.explore_calls;
  LineageEvent e;
  e.member_id = state_.id;
  e.kind = EventKind::explore;
  e.h_before = state_.h;
  state_.h = explore(state_.h, specs_, config_->explore, streams_.explore);
  e.h_after = state_.h;
  e.ancestor_id = state_.ancestor_id;
  e.p_at_event = state_.p;
  e.t_at_event = state_.t;
  store_->log_event(std::move(e));
}

void MemberWorker::evaluate_and_publish(std::optional<MemberId> parent) {
  try {
    const double score = task_->eval(state_.theta, streams_.eval);
    state_ = record_eval(state_, score);
  } catch (const Error&) {
    fail();
    return;
  }
  const CheckpointRef saved = store_->save_checkpoint(state_, parent);
  store_->publish(state_);
  LineageEvent e;
  e.member_id = state_.id;
  e.kind = EventKind::eval;
  e.ancestor_id = state_.ancestor_id;
  e.checkpoint = saved.created_at;
  e.h_before = state_.h;
  e.h_after = state_.h;
  e.p_at_event = state_.p;
  e.t_at_event = state_.t;
  store_->log_event(std::move(e));
}

void MemberWorker::record_curve() {
  CurveRecord r{state_.t, state_.id, state_.p, state_.h};
  if (!curves_.empty() && curves_.back().step == state_.t) {
    curves_.back() = std::move(r);
  } else {
    curves_.push_back(std::move(r));
  }
}

void MemberWorker::fail() {
  state_.failed = true;
  store_->mark_failed(state_.id);
}

void run_member_loop(MemberWorker& worker) {
  while (!worker.done()) worker.iterate(true);
}

MemberState run_member_loop(MemberState member, const Task& task, const ExperimentConfig& config,
                            PopulationStore& store) {
  const auto specs = resolve_hyperparams(config, task);
  const MemberId id = member.id;
  RngLedger ledger(config.seed, id + 1);
  MemberWorker worker(std::move(member), task, config, specs, store, std::move(ledger.member(id)));
  run_member_loop(worker);
  return worker.state();
}

// ---------------------------------------------------------------------------

namespace {

template <typename Fn>
void parallel_for_each(std::vector<MemberWorker>& workers, Fn fn) {
  std::vector<std::exception_ptr> errors(workers.size());
  {
    std::vector<std::jthread> threads;
    threads.reserve(workers.size());
    for (std::size_t i = 0; i < workers.size(); ++i) {
      threads.emplace_back([&, i] {
        try {
          fn(workers[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void run_serial(std::vector<MemberWorker>& workers) {
  bool active = true;
  while (active) {
    active = false;
    for (auto& w : workers) {
      if (w.done()) continue;
      w.iterate(true);
      active = active || !w.done();
    }
  }
}

void run_partial_sync(std::vector<MemberWorker>& workers, PopulationStore& store,
                      const ExperimentConfig& config) {
  std::int64_t horizon = 0;
  while (std::any_of(workers.begin(), workers.end(), [](const auto& w) { return !w.done(); })) {
    horizon = std::min(horizon + config.quantum(), config.total_steps);
    parallel_for_each(workers, [horizon](MemberWorker& w) {
      while (!w.done() && w.state().t < horizon) w.iterate(false, horizon);
    });

    // Barrier: every decision sees the same snapshot, and every source
    // checkpoint is taken before any member is overwritten.
    const StoreSnapshot population = store.snapshot();
    std::vector<ExploitDecision> decisions;
    std::vector<std::optional<Checkpoint>> sources;
    for (auto& w : workers) {
      decisions.push_back(w.decide(population));
      sources.emplace_back();
      if (decisions.back().source) sources.back() = store.acquire_source(*decisions.back().source);
    }
    for (std::size_t i = 0; i < workers.size(); ++i) workers[i].apply(decisions[i], sources[i]);
  }
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, const Task& task,
                         const RunOptions& options) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const auto specs = resolve_hyperparams(config, task);
  auto members = init_population(config, task);

  std::unique_ptr<PopulationStore> store;
  if (options.run_dir) {
    store = std::make_unique<DirectoryStore>(members, *options.run_dir);
  } else {
    store = std::make_unique<MemoryStore>(members);
  }

  RngLedger ledger(config.seed, config.population_size);
  std::vector<MemberWorker> workers;
  workers.reserve(members.size());
  for (auto& m : members) {
    const MemberId id = m.id;
    workers.emplace_back(std::move(m), task, config, specs, *store, std::move(ledger.member(id)));
  }

  switch (config.mode) {
    case ExecutionMode::serial:
      run_serial(workers);
      break;
    case ExecutionMode::async:
      parallel_for_each(workers, [](MemberWorker& w) { run_member_loop(w); });
      break;
    case ExecutionMode::partial_sync:
      run_partial_sync(workers, *store, config);
      break;
  }

  RunReport report;
  report.hyperparams = specs;
  std::vector<MemberState> alive;
  for (const auto& w : workers) {
    report.final_population.push_back(w.state());
    report.curves.insert(report.curves.end(), w.curves().begin(), w.curves().end());
    report.step_calls += w.step_calls();
    if (w.state().failed) {
      report.failed.push_back(w.state().id);
    } else {
      alive.push_back(w.state());
    }
  }
  std::stable_sort(report.curves.begin(), report.curves.end(),
                   [](const CurveRecord& a, const CurveRecord& b) {
                     return a.step != b.step ? a.step < b.step : a.member_id < b.member_id;
                   });
  report.events = store->events();
  if (options.run_dir) report.event_log = *options.run_dir / "events.jsonl";
  if (!alive.empty()) report.best = best(alive);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (2 * report.failed.size() > workers.size()) {
    throw ExperimentFailure(std::to_string(report.failed.size()) + " of " +
                                std::to_string(workers.size()) + " members failed",
                            std::move(report));
  }
  return report;
}

RunReport run_random_search_baseline(const ExperimentConfig& config, const Task& task,
                                     const RunOptions& options) {
  ExperimentConfig baseline = config;
  baseline.exploit.kind = ExploitKind::none;
  baseline.explore.kind = ExploreKind::none;
  return run_experiment(baseline, task, options);
}

namespace {

constexpr std::array<std::pair<std::string_view, AblationVariant>, 6> kVariants{{
    {"exploit-only", AblationVariant::exploit_only},
    {"explore-only", AblationVariant::explore_only},
    {"hyperparams-only", AblationVariant::hyperparams_only},
    {"weights-only", AblationVariant::weights_only},
    {"population-size-sweep", AblationVariant::population_size_sweep},
    {"final-h-replay", AblationVariant::final_h_replay},
}};

}  // namespace

std::string_view to_string(AblationVariant v) {
  for (const auto& [name, value] : kVariants) {
    if (value == v) return name;
  }
  return "?";
}

AblationVariant parse_ablation_variant(std::string_view s) {
  for (const auto& [name, value] : kVariants) {
    if (name == s) return value;
  }
  throw Error("unknown ablation variant '" + std::string(s) + "'");
}

ExperimentConfig ablation_config(ExperimentConfig config, AblationVariant variant) {
  switch (variant) {
    case AblationVariant::exploit_only:
      config.explore.kind = ExploreKind::none;
      break;
    case AblationVariant::explore_only:
      config.exploit.kind = ExploitKind::none;
      break;
    case AblationVariant::hyperparams_only:
      config.exploit_mask = ExploitMask::hyperparams_only;
      break;
    case AblationVariant::weights_only:
      config.exploit_mask = ExploitMask::weights_only;
      config.explore.kind = ExploreKind::none;
      break;
    case AblationVariant::population_size_sweep:
    case AblationVariant::final_h_replay:
      break;
  }
  return config;
}

std::vector<LabelledReport> run_ablation(const ExperimentConfig& config, const Task& task,
                                         AblationVariant variant, std::span<const int> sweep_sizes) {
  std::vector<LabelledReport> out;
  switch (variant) {
    case AblationVariant::population_size_sweep:
      for (int n : sweep_sizes) {
        ExperimentConfig sized = config;
        sized.population_size = n;
        out.push_back({"N=" + std::to_string(n), run_experiment(sized, task)});
      }
      break;
    case AblationVariant::final_h_replay: {
      RunReport pbt = run_experiment(config, task);
      ExperimentConfig replay = config;
      replay.initial_h.clear();
      for (const auto& m : pbt.final_population) {
        if (!m.failed) replay.initial_h.push_back(m.h);
      }
      replay.population_size = static_cast<int>(replay.initial_h.size());
      out.push_back({"pbt", std::move(pbt)});
      out.push_back({"final-h-replay", run_random_search_baseline(replay, task)});
      break;
    }
    default:
      out.push_back({std::string(to_string(variant)),
                     run_experiment(ablation_config(config, variant), task)});
      break;
  }
  return out;
}

}  // namespace pbt
