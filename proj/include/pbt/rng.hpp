#pragma once

// Seeded RNG streams. Every member owns independent streams derived from
// (master seed, member id, purpose), so thread scheduling never changes which
// numbers a member draws.

#include <cstdint>
#include <random>
#include <vector>

#include "pbt/core.hpp"

namespace pbt {

using Rng = std::mt19937_64;

enum class StreamPurpose : std::uint64_t {
  init = 1,
  hyperparams = 2,
  step = 3,
  eval = 4,
  exploit = 5,
  explore = 6,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, MemberId member, StreamPurpose purpose) {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ (static_cast<std::uint64_t>(member) + 0x51ed2701ULL));
  return splitmix64(s ^ static_cast<std::uint64_t>(purpose));
}

struct MemberStreams {
  Rng step;
  Rng eval;
  Rng exploit;
  Rng explore;
  std::uint64_t exploit_calls = 0;
  std::uint64_t explore_calls = 0;
};

/// Owns every member's streams for one experiment.
class RngLedger {
 public:
  RngLedger(std::uint64_t master_seed, int population_size) : master_seed_(master_seed) {
    streams_.reserve(static_cast<std::size_t>(population_size));
    for (MemberId id = 0; id < population_size; ++id) {
      streams_.push_back(MemberStreams{stream(id, StreamPurpose::step),
                                       stream(id, StreamPurpose::eval),
                                       stream(id, StreamPurpose::exploit),
                                       stream(id, StreamPurpose::explore)});
    }
  }

  std::uint64_t master_seed() const { return master_seed_; }
  Rng stream(MemberId id, StreamPurpose purpose) const {
    return Rng(derive_seed(master_seed_, id, purpose));
  }
  MemberStreams& member(MemberId id) { return streams_.at(static_cast<std::size_t>(id)); }

 private:
  std::uint64_t master_seed_;
  std::vector<MemberStreams> streams_;
};

}  // namespace pbt
