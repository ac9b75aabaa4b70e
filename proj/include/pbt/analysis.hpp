#pragma once

// Post-hoc reconstruction from an event log: the phylogenetic forest of
// training segments and exploit branches, the ancestor census, per-member
// hyperparameter lineages, and top-k curve aggregation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pbt/core.hpp"
#include "pbt/engine.hpp"
#include "pbt/events.hpp"

namespace pbt {

enum class EdgeKind { training, branch };

struct PhyloNode {
  MemberId member_id = 0;
  std::int64_t t = 0;
  double p = kUnevaluated;
  HyperparamVector h;
  std::uint64_t event_counter = 0;  // 0 for roots
  std::optional<std::size_t> parent;
  EdgeKind edge = EdgeKind::training;  // edge from parent; meaningless for roots
  double color = 0.0;                  // min-max normalised p in [0, 1]
};

struct Phylogeny {
  std::vector<PhyloNode> nodes;
  std::vector<std::size_t> roots;    // roots[m]: member m's initial node
  std::vector<std::size_t> current;  // current[m]: member m's last node
  std::vector<bool> alive;           // false for members that failed

  int population_size() const { return static_cast<int>(roots.size()); }
  /// Index of the root reached by following parent links from `node`.
  std::size_t root_of(std::size_t node) const;
  /// Initial member ids whose trees contain a live member's final node.
  std::set<MemberId> final_roots() const;
  /// Parent links point strictly backwards and every node reaches a root.
  bool is_forest() const;
};

/// `population_size` 0 infers N as 1 + the largest member_id in the log.
/// Throws on an exploit with an unknown parent or out-of-order counters.
Phylogeny build_phylogeny(std::span<const LineageEvent> events, int population_size = 0);

/// Distinct ancestor ids over members alive right after event `at_event_counter`
/// (0 = the initial population).
std::set<MemberId> ancestor_census(std::span<const LineageEvent> events,
                                   std::uint64_t at_event_counter, int population_size = 0);

struct LineagePoint {
  std::int64_t t = 0;
  HyperparamVector h;
  bool operator==(const LineagePoint&) const = default;
};

using Lineage = std::vector<LineagePoint>;

/// Per final member, the (t, h) schedule along its weight ancestry, oldest
/// first, with strictly increasing t. On a weight copy at t = k the parent's
/// history up to k is spliced in front of the member's own history from k on.
std::map<MemberId, Lineage> extract_lineages(const Phylogeny& phylogeny,
                                             std::span<const MemberId> final_members);
std::map<MemberId, Lineage> extract_lineages(std::span<const LineageEvent> events,
                                             std::span<const MemberId> final_members);

struct TopKRow {
  std::int64_t step = 0;
  double mean_top_k = kUnevaluated;
  std::vector<double> member_p;  // last known p per member, kUnevaluated if none
};

/// Per curve step, the mean of the k highest last-known member scores.
/// Members that have not been evaluated yet do not count; when fewer than k
/// have, the mean is over those that have.
std::vector<TopKRow> aggregate_curves(const RunReport& report, int top_k = 5);
std::vector<TopKRow> aggregate_curves(std::span<const CurveRecord> curves, int population_size,
                                      int top_k = 5);

std::string to_dot(const Phylogeny& phylogeny);
void write_dot(const std::filesystem::path& path, const Phylogeny& phylogeny);
void write_lineages_csv(const std::filesystem::path& path,
                        const std::map<MemberId, Lineage>& lineages);
void write_top_k_csv(const std::filesystem::path& path, std::span<const TopKRow> rows);

}  // namespace pbt
