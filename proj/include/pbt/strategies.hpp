#pragma once

// Exploit (who to copy from) and explore (how to change hyperparameters)
// strategies. All functions are pure given their inputs and RNG stream.

#include <optional>
#include <span>

#include "pbt/core.hpp"
#include "pbt/rng.hpp"
#include "pbt/store.hpp"

namespace pbt {

// Exploit. Each returns the id of the member to copy from, or nothing. The
// caller is never a candidate, and neither are failed members.

/// Samples one other member uniformly; copies it iff its window mean beats
/// self's and Welch's one-sided p-value is below `alpha`. Both windows need at
/// least two scores.
std::optional<MemberId> ttest_select(const MemberState& self, const StoreSnapshot& population,
                                     double alpha, Rng& rng);

/// Ranks by p (descending, ties to the lowest id). If self is among the last
/// ceil(fraction * N) members, returns a uniform pick from the first
/// ceil(fraction * N).
std::optional<MemberId> truncation_select(const MemberState& self,
                                          const StoreSnapshot& population, double fraction,
                                          Rng& rng);

/// Samples one other member uniformly; copies it iff its p is strictly higher.
std::optional<MemberId> binary_tournament(const MemberState& self,
                                          const StoreSnapshot& population, Rng& rng);

std::optional<MemberId> select_exploit_source(const MemberState& self,
                                              const StoreSnapshot& population,
                                              const ExploitConfig& config, Rng& rng);

// Explore.

/// Multiplies each numeric entry by its spec's up or down factor (p = 1/2
/// each); re-draws categorical entries with probability 1/2.
HyperparamVector perturb(HyperparamVector h, std::span<const HyperparamSpec> specs, Rng& rng);

/// Replaces each entry by a fresh prior draw with its spec's resample_prob.
HyperparamVector resample(HyperparamVector h, std::span<const HyperparamSpec> specs, Rng& rng);

/// Adds N(0, sigma^2) to every numeric entry, clamped to the prior bounds.
HyperparamVector gaussian_perturb(HyperparamVector h, std::span<const HyperparamSpec> specs,
                                  double sigma, Rng& rng);

HyperparamVector explore(HyperparamVector h, std::span<const HyperparamSpec> specs,
                         const ExploreConfig& config, Rng& rng);

HyperValue sample_prior(const HyperparamSpec& spec, Rng& rng);
HyperparamVector sample_hyperparams(std::span<const HyperparamSpec> specs, Rng& rng);

}  // namespace pbt
