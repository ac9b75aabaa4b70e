#include "pbt/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pbt/stats.hpp"

namespace pbt {

namespace {

std::vector<MemberId> other_live_members(const MemberState& self, const StoreSnapshot& population) {
  std::vector<MemberId> ids;
  for (const auto& m : population.members) {
    if (m.id != self.id && !m.failed) ids.push_back(m.id);
  }
  return ids;
}

std::optional<MemberId> pick_other(const MemberState& self, const StoreSnapshot& population,
                                   Rng& rng) {
  const auto ids = other_live_members(self, population);
  if (ids.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
  return ids[pick(rng)];
}

const MemberState& entry(const StoreSnapshot& population, MemberId id) {
  for (const auto& m : population.members) {
    if (m.id == id) return m;
  }
  throw Error("member " + std::to_string(id) + " missing from snapshot");
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool coin(Rng& rng) { return std::bernoulli_distribution(0.5)(rng); }

double finish_numeric(double value, const HyperparamSpec& spec) {
  if (spec.integer) value = std::max(std::round(value), spec.prior.lo);
  if (spec.clamp_to_prior && spec.prior.bounded()) {
    value = std::clamp(value, spec.prior.lo, spec.prior.hi);
  }
  return value;
}

HyperValue& slot(HyperparamVector& h, const HyperparamSpec& spec) {
  auto it = h.find(spec.name);
  if (it == h.end()) throw Error("missing hyperparameter '" + spec.name + "'");
  return it->second;
}

HyperValue draw_category(const HyperparamSpec& spec, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, spec.prior.choices.size() - 1);
  return spec.prior.choices[pick(rng)];
}

}  // namespace

std::optional<MemberId> ttest_select(const MemberState& self, const StoreSnapshot& population,
                                     double alpha, Rng& rng) {
  const auto source = pick_other(self, population, rng);
  if (!source) return std::nullopt;
  const MemberState& candidate = entry(population, *source);
  if (self.window.size() < 2 || candidate.window.size() < 2) return std::nullopt;

  const auto mine = self.window.values();
  const auto theirs = candidate.window.values();
  if (!(mean(theirs) > mean(mine))) return std::nullopt;
  const WelchResult test = welch_t(mine, theirs);
  if (test.p_one_sided < alpha) return source;
  return std::nullopt;
}

std::optional<MemberId> truncation_select(const MemberState& self,
                                          const StoreSnapshot& population, double fraction,
                                          Rng& rng) {
  std::vector<const MemberState*> ranked;
  for (const auto& m : population.members) {
    if (m.failed) continue;
    ranked.push_back(m.id == self.id ? &self : &m);
  }
  const std::size_t n = ranked.size();
  if (n < 2) return std::nullopt;
  std::sort(ranked.begin(), ranked.end(), [](const MemberState* a, const MemberState* b) {
    if (a->p != b->p) return a->p > b->p;
    return a->id < b->id;
  });

  const auto cut = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12)));
  const auto pos = static_cast<std::size_t>(
      std::find_if(ranked.begin(), ranked.end(),
                   [&](const MemberState* m) { return m->id == self.id; }) -
      ranked.begin());
  if (pos == n || pos < n - cut) return std::nullopt;

  // With fraction 1/2 and odd N the middle member is in both halves; it
  // never copies itself.
  std::vector<MemberId> top;
  for (std::size_t i = 0; i < cut; ++i) {
    if (i != pos) top.push_back(ranked[i]->id);
  }
  std::uniform_int_distribution<std::size_t> pick(0, top.size() - 1);
  return top[pick(rng)];
}

std::optional<MemberId> binary_tournament(const MemberState& self,
                                          const StoreSnapshot& population, Rng& rng) {
  const auto source = pick_other(self, population, rng);
  if (!source) return std::nullopt;
  if (entry(population, *source).p > self.p) return source;
  return std::nullopt;
}

std::optional<MemberId> select_exploit_source(const MemberState& self,
                                              const StoreSnapshot& population,
                                              const ExploitConfig& config, Rng& rng) {
  switch (config.kind) {
    case ExploitKind::ttest:
      return ttest_select(self, population, config.alpha, rng);
    case ExploitKind::truncation:
      return truncation_select(self, population, config.truncation_fraction, rng);
    case ExploitKind::binary_tournament:
      return binary_tournament(self, population, rng);
    case ExploitKind::none:
      break;
  }
  return std::nullopt;
}

HyperValue sample_prior(const HyperparamSpec& spec, Rng& rng) {
  const Prior& prior = spec.prior;
  double value = prior.lo;
  switch (prior.kind) {
    case PriorKind::categorical:
      return draw_category(spec, rng);
    case PriorKind::log_uniform:
      if (prior.lo < prior.hi) {
        std::uniform_real_distribution<double> u(std::log(prior.lo), std::log(prior.hi));
        value = std::clamp(std::exp(u(rng)), prior.lo, prior.hi);
      }
      break;
    case PriorKind::uniform:
      if (prior.lo < prior.hi) value = std::uniform_real_distribution<double>(prior.lo, prior.hi)(rng);
      break;
  }
  if (spec.integer) value = std::clamp(std::round(value), prior.lo, prior.hi);
  return value;
}

HyperparamVector sample_hyperparams(std::span<const HyperparamSpec> specs, Rng& rng) {
  HyperparamVector h;
  for (const auto& spec : specs) h.emplace(spec.name, sample_prior(spec, rng));
  return h;
}

HyperparamVector perturb(HyperparamVector h, std::span<const HyperparamSpec> specs, Rng& rng) {
  for (const auto& spec : specs) {
    HyperValue& v = slot(h, spec);
    if (spec.prior.kind == PriorKind::categorical) {
      if (coin(rng)) v = draw_category(spec, rng);
      continue;
    }
    const double factor = coin(rng) ? spec.perturb_factors.up : spec.perturb_factors.down;
    v = finish_numeric(std::get<double>(v) * factor, spec);
  }
  return h;
}

HyperparamVector resample(HyperparamVector h, std::span<const HyperparamSpec> specs, Rng& rng) {
  for (const auto& spec : specs) {
    HyperValue& v = slot(h, spec);
    if (std::bernoulli_distribution(spec.resample_prob)(rng)) v = sample_prior(spec, rng);
  }
  return h;
}

HyperparamVector gaussian_perturb(HyperparamVector h, std::span<const HyperparamSpec> specs,
                                  double sigma, Rng& rng) {
  if (sigma == 0.0) return h;
  std::normal_distribution<double> noise(0.0, sigma);
  for (const auto& spec : specs) {
    if (spec.prior.kind == PriorKind::categorical) continue;
    HyperValue& v = slot(h, spec);
    v = finish_numeric(std::get<double>(v) + noise(rng), spec);
  }
  return h;
}

HyperparamVector explore(HyperparamVector h, std::span<const HyperparamSpec> specs,
                         const ExploreConfig& config, Rng& rng) {
  switch (config.kind) {
    case ExploreKind::perturb:
      return perturb(std::move(h), specs, rng);
    case ExploreKind::resample:
      return resample(std::move(h), specs, rng);
    case ExploreKind::gaussian:
      return gaussian_perturb(std::move(h), specs, config.sigma, rng);
    case ExploreKind::none:
      break;
  }
  return h;
}

}  // namespace pbt
