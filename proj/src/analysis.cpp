#include "pbt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace pbt {

namespace {

int infer_population_size(std::span<const LineageEvent> events, int given) {
  if (given > 0) return given;
  MemberId top = -1;
  for (const auto& e : events) top = std::max(top, e.member_id);
  return top + 1;
}

void check_member(MemberId id, int n, const LineageEvent& e, const char* what) {
  if (id < 0 || id >= n) {
    throw Error("event " + std::to_string(e.event_counter) + ": " + what + " " +
                std::to_string(id) + " outside population of " + std::to_string(n));
  }
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

std::size_t Phylogeny::root_of(std::size_t node) const {
  while (nodes.at(node).parent) node = *nodes[node].parent;
  return node;
}

std::set<MemberId> Phylogeny::final_roots() const {
  std::set<MemberId> out;
  for (std::size_t m = 0; m < current.size(); ++m) {
    if (alive[m]) out.insert(nodes[root_of(current[m])].member_id);
  }
  return out;
}

bool Phylogeny::is_forest() const {
  std::vector<bool> is_root(nodes.size(), false);
  for (std::size_t r : roots) {
    if (r >= nodes.size() || nodes[r].parent) return false;
    is_root[r] = true;
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& parent = nodes[i].parent;
    if (!parent) {
      if (!is_root[i]) return false;
    } else if (*parent >= i) {
      return false;  // links only point backwards, so no cycles
    }
  }
  return true;
}

Phylogeny build_phylogeny(std::span<const LineageEvent> events, int population_size) {
  const int n = infer_population_size(events, population_size);
  Phylogeny g;
  g.alive.assign(static_cast<std::size_t>(n), true);
  for (MemberId m = 0; m < n; ++m) {
    PhyloNode root;
    root.member_id = m;
    g.roots.push_back(g.nodes.size());
    g.current.push_back(g.nodes.size());
    g.nodes.push_back(std::move(root));
  }

  std::unordered_map<std::uint64_t, std::size_t> by_checkpoint;
  std::vector<bool> branch_pending(static_cast<std::size_t>(n), false);
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::uint64_t last_counter = 0;
  bool first = true;

  for (const auto& e : events) {
    if (!first && e.event_counter <= last_counter) {
      throw Error("event log out of order at counter " + std::to_string(e.event_counter));
    }
    first = false;
    last_counter = e.event_counter;
    check_member(e.member_id, n, e, "member");
    const auto m = static_cast<std::size_t>(e.member_id);
    if (!seen[m]) {
      g.nodes[g.roots[m]].h = e.h_before;
      seen[m] = true;
    }

    switch (e.kind) {
      case EventKind::eval: {
        PhyloNode node;
        node.member_id = e.member_id;
        node.t = e.t_at_event;
        node.p = e.p_at_event;
        node.h = e.h_after;
        node.event_counter = e.event_counter;
        node.parent = g.current[m];
        node.edge = branch_pending[m] ? EdgeKind::branch : EdgeKind::training;
        branch_pending[m] = false;
        g.current[m] = g.nodes.size();
        if (e.checkpoint) by_checkpoint[*e.checkpoint] = g.nodes.size();
        g.nodes.push_back(std::move(node));
        break;
      }
      case EventKind::exploit: {
        if (!e.parent_member_id) {
          throw Error("event " + std::to_string(e.event_counter) + ": exploit without a parent");
        }
        check_member(*e.parent_member_id, n, e, "exploit parent");
        if (!e.copies_weights()) break;
        std::size_t source = g.current[static_cast<std::size_t>(*e.parent_member_id)];
        if (e.checkpoint) {
          const auto it = by_checkpoint.find(*e.checkpoint);
          if (it == by_checkpoint.end()) {
            throw Error("event " + std::to_string(e.event_counter) + ": exploit source checkpoint " +
                        std::to_string(*e.checkpoint) + " was never evaluated");
          }
          source = it->second;
        }
        g.current[m] = source;
        branch_pending[m] = true;
        break;
      }
      case EventKind::fail:
        g.alive[m] = false;
        break;
      case EventKind::explore:
      case EventKind::step_batch:
        break;
    }
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& node : g.nodes) {
    if (node.parent && std::isfinite(node.p)) {
      lo = std::min(lo, node.p);
      hi = std::max(hi, node.p);
    }
  }
  for (auto& node : g.nodes) {
    if (!node.parent || !std::isfinite(node.p)) continue;
    node.color = hi > lo ? (node.p - lo) / (hi - lo) : 1.0;
  }
  return g;
}

std::set<MemberId> ancestor_census(std::span<const LineageEvent> events,
                                   std::uint64_t at_event_counter, int population_size) {
  const int n = infer_population_size(events, population_size);
  std::vector<MemberId> ancestor(static_cast<std::size_t>(n));
  std::vector<bool> alive(static_cast<std::size_t>(n), true);
  for (MemberId m = 0; m < n; ++m) ancestor[static_cast<std::size_t>(m)] = m;
  for (const auto& e : events) {
    if (e.event_counter > at_event_counter) break;
    if (e.member_id < 0 || e.member_id >= n) continue;
    const auto m = static_cast<std::size_t>(e.member_id);
    if (e.kind == EventKind::fail) {
      alive[m] = false;
    } else {
      ancestor[m] = e.ancestor_id;
    }
  }
  std::set<MemberId> out;
  for (std::size_t m = 0; m < ancestor.size(); ++m) {
    if (alive[m]) out.insert(ancestor[m]);
  }
  return out;
}

std::map<MemberId, Lineage> extract_lineages(const Phylogeny& phylogeny,
                                             std::span<const MemberId> final_members) {
  std::map<MemberId, Lineage> out;
  for (MemberId id : final_members) {
    if (id < 0 || id >= phylogeny.population_size()) {
      throw Error("lineage requested for unknown member " + std::to_string(id));
    }
    // Walking back from the leaf, a point is kept only if it predates every
    // point kept so far; that splices each parent in strictly before the copy.
    Lineage backwards;
    std::optional<std::size_t> node = phylogeny.current[static_cast<std::size_t>(id)];
    while (node) {
      const auto& n = phylogeny.nodes[*node];
      if (backwards.empty() || n.t < backwards.back().t) backwards.push_back({n.t, n.h});
      node = n.parent;
    }
    out.emplace(id, Lineage(backwards.rbegin(), backwards.rend()));
  }
  return out;
}

std::map<MemberId, Lineage> extract_lineages(std::span<const LineageEvent> events,
                                             std::span<const MemberId> final_members) {
  int n = 0;
  for (MemberId id : final_members) n = std::max(n, id + 1);
  n = std::max(n, infer_population_size(events, 0));
  return extract_lineages(build_phylogeny(events, n), final_members);
}

namespace {

std::vector<TopKRow> aggregate(std::span<const CurveRecord> curves, int population_size, int top_k,
                               const std::set<MemberId>& failed) {
  if (top_k < 1) throw Error("top_k must be >= 1");
  if (top_k > population_size) throw Error("top_k exceeds the population size");
  std::vector<const CurveRecord*> sorted;
  sorted.reserve(curves.size());
  for (const auto& r : curves) {
    if (r.member_id < 0 || r.member_id >= population_size) {
      throw Error("curve record for unknown member " + std::to_string(r.member_id));
    }
    sorted.push_back(&r);
  }
  std::stable_sort(sorted.begin(), sorted.end(), [](const CurveRecord* a, const CurveRecord* b) {
    return std::tie(a->step, a->member_id) < std::tie(b->step, b->member_id);
  });

  std::vector<std::int64_t> last_step(static_cast<std::size_t>(population_size), -1);
  for (const auto* r : sorted) last_step[static_cast<std::size_t>(r->member_id)] = r->step;

  std::vector<double> last(static_cast<std::size_t>(population_size), kUnevaluated);
  std::vector<TopKRow> rows;
  for (std::size_t i = 0; i < sorted.size();) {
    const std::int64_t step = sorted[i]->step;
    for (; i < sorted.size() && sorted[i]->step == step; ++i) {
      last[static_cast<std::size_t>(sorted[i]->member_id)] = sorted[i]->p;
    }
    TopKRow row;
    row.step = step;
    row.member_p = last;
    std::vector<double> live;
    for (std::size_t m = 0; m < last.size(); ++m) {
      const bool gone = failed.contains(static_cast<MemberId>(m)) && step > last_step[m];
      if (!gone && std::isfinite(last[m])) live.push_back(last[m]);
    }
    if (!live.empty()) {
      const auto k = std::min(live.size(), static_cast<std::size_t>(top_k));
      std::partial_sort(live.begin(), live.begin() + static_cast<std::ptrdiff_t>(k), live.end(),
                        std::greater<>());
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += live[j];
      row.mean_top_k = sum / static_cast<double>(k);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<TopKRow> aggregate_curves(const RunReport& report, int top_k) {
  const std::set<MemberId> failed(report.failed.begin(), report.failed.end());
  return aggregate(report.curves, static_cast<int>(report.final_population.size()), top_k, failed);
}

std::vector<TopKRow> aggregate_curves(std::span<const CurveRecord> curves, int population_size,
                                      int top_k) {
  return aggregate(curves, population_size, top_k, {});
}

std::string to_dot(const Phylogeny& g) {
  std::ostringstream out;
  out << "digraph phylogeny {\n";
  out << "  rankdir=LR;\n  node [shape=point];\n";
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    out << "  n" << i << " [member=" << n.member_id << ", t=" << n.t << ", perf=\""
        << format_double(n.color) << '"';
    if (!n.parent) out << ", shape=circle, label=\"" << n.member_id << '"';
    out << "];\n";
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    if (!n.parent) continue;
    // hue runs red (worst) to green (best)
    const double hue = n.color / 3.0;
    char hue_text[16];
    std::snprintf(hue_text, sizeof hue_text, "%.4f", hue);
    out << "  n" << *n.parent << " -> n" << i << " [perf=\"" << format_double(n.color)
        << "\", color=\"" << hue_text << " 1.000 0.850\"";
    if (n.edge == EdgeKind::branch) out << ", style=dashed, kind=branch";
    out << "];\n";
  }
  out << "}\n";
  return out.str();
}

void write_dot(const std::filesystem::path& path, const Phylogeny& phylogeny) {
  auto out = open_for_write(path);
  out << to_dot(phylogeny);
}

void write_lineages_csv(const std::filesystem::path& path,
                        const std::map<MemberId, Lineage>& lineages) {
  std::set<std::string> names;
  for (const auto& [id, lineage] : lineages) {
    for (const auto& point : lineage) {
      for (const auto& [name, value] : point.h) names.insert(name);
    }
  }
  auto out = open_for_write(path);
  out << "member_id,t";
  for (const auto& name : names) out << ',' << name;
  out << '\n';
  for (const auto& [id, lineage] : lineages) {
    for (const auto& point : lineage) {
      out << id << ',' << point.t;
      for (const auto& name : names) {
        out << ',';
        if (const auto it = point.h.find(name); it != point.h.end()) out << format_value(it->second);
      }
      out << '\n';
    }
  }
}

void write_top_k_csv(const std::filesystem::path& path, std::span<const TopKRow> rows) {
  auto out = open_for_write(path);
  const std::size_t n = rows.empty() ? 0 : rows.front().member_p.size();
  out << "step,top_k_mean";
  for (std::size_t m = 0; m < n; ++m) out << ",member_" << m;
  out << '\n';
  for (const auto& row : rows) {
    out << row.step << ',' << format_double(row.mean_top_k);
    for (double p : row.member_p) out << ',' << format_double(p);
    out << '\n';
  }
}

}  // namespace pbt
