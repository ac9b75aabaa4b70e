#include <doctest.h>

#include <algorithm>
#include <random>

#include "pbt/analysis.hpp"

using namespace pbt;

namespace {

LineageEvent eval_event(std::uint64_t counter, MemberId m, std::int64_t t, double p,
                        MemberId ancestor, std::uint64_t checkpoint) {
  LineageEvent e;
  e.event_counter = counter;
  e.member_id = m;
  e.kind = EventKind::eval;
  e.ancestor_id = ancestor;
  e.checkpoint = checkpoint;
  e.h_before = e.h_after = {{"lr", 0.1 * (m + 1)}};
  e.p_at_event = p;
  e.t_at_event = t;
  return e;
}

LineageEvent exploit_event(std::uint64_t counter, MemberId m, MemberId parent, std::int64_t t,
                           MemberId ancestor, std::uint64_t checkpoint) {
  LineageEvent e;
  e.event_counter = counter;
  e.member_id = m;
  e.kind = EventKind::exploit;
  e.parent_member_id = parent;
  e.mask = ExploitMask::all;
  e.ancestor_id = ancestor;
  e.checkpoint = checkpoint;
  e.t_at_event = t;
  return e;
}

ExperimentConfig toy_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.population_size = 2;
  c.total_steps = 100;
  c.ready_interval = 4;
  c.eval_every = 1;
  c.exploit = {.kind = ExploitKind::truncation, .truncation_fraction = 0.5};
  c.exploit_mask = ExploitMask::weights_only;
  c.explore = {.kind = ExploreKind::gaussian, .sigma = 0.1};
  c.initial_h = {{{"h0", 1.0}, {"h1", 0.0}}, {{"h0", 0.0}, {"h1", 1.0}}};
  c.seed = seed;
  return c;
}

// Random serial-looking log: evals interleaved with exploits copying from
// members whose latest eval checkpoint exists.
std::vector<LineageEvent> random_log(int n, int length, Rng& rng) {
  std::vector<LineageEvent> events;
  std::vector<std::int64_t> t(static_cast<std::size_t>(n), 0);
  std::vector<MemberId> ancestor(static_cast<std::size_t>(n));
  std::vector<std::uint64_t> latest(static_cast<std::size_t>(n), 0);
  for (MemberId m = 0; m < n; ++m) ancestor[static_cast<std::size_t>(m)] = m;
  std::uniform_int_distribution<MemberId> pick(0, n - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uint64_t counter = 0, ckpt = 0;
  for (int i = 0; i < length; ++i) {
    const MemberId m = pick(rng);
    const auto mi = static_cast<std::size_t>(m);
    const MemberId src = pick(rng);
    const auto si = static_cast<std::size_t>(src);
    if (u(rng) < 0.3 && src != m && latest[si] != 0) {
      ancestor[mi] = ancestor[si];
      events.push_back(exploit_event(++counter, m, src, t[mi], ancestor[mi], latest[si]));
    }
    t[mi] += 1;
    latest[mi] = ++ckpt;
    events.push_back(eval_event(++counter, m, t[mi], u(rng), ancestor[mi], latest[mi]));
  }
  return events;
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("no exploits give disjoint paths") {
    std::vector<LineageEvent> events;
    std::uint64_t counter = 0;
    for (std::int64_t t = 1; t <= 5; ++t) {
      for (MemberId m = 0; m < 3; ++m) events.push_back(eval_event(++counter, m, t, 0.1 * t, m, counter));
    }
    const Phylogeny tree = build_phylogeny(events);
    CHECK(tree.population_size() == 3);
    CHECK(tree.nodes.size() == 3 + 15);
    CHECK(tree.is_forest());
    for (MemberId m = 0; m < 3; ++m) {
      CHECK(tree.root_of(tree.current[static_cast<std::size_t>(m)]) == tree.roots[static_cast<std::size_t>(m)]);
    }
    CHECK(tree.final_roots() == std::set<MemberId>{0, 1, 2});
    for (const auto& node : tree.nodes) CHECK(node.edge == EdgeKind::training);
  }

  TEST_CASE("an exploit re-roots the copier onto the source node") {
    std::vector<LineageEvent> events{
        eval_event(1, 0, 1, 0.9, 0, 101),
        eval_event(2, 1, 1, 0.1, 1, 102),
        exploit_event(3, 1, 0, 1, 0, 101),
        eval_event(4, 1, 1, 0.9, 0, 103),
    };
    const Phylogeny tree = build_phylogeny(events, 2);
    CHECK(tree.is_forest());
    const auto& last = tree.nodes[tree.current[1]];
    REQUIRE(last.parent.has_value());
    CHECK(last.edge == EdgeKind::branch);
    CHECK(tree.nodes[*last.parent].member_id == 0);
    CHECK(tree.nodes[*last.parent].event_counter == 1);
    CHECK(tree.root_of(tree.current[1]) == tree.roots[0]);
    CHECK(tree.final_roots() == std::set<MemberId>{0});

    const std::string dot = to_dot(tree);
    CHECK(dot.find("digraph") != std::string::npos);
    CHECK(dot.find("dashed") != std::string::npos);
  }

  TEST_CASE("malformed logs are rejected") {
    std::vector<LineageEvent> unknown_parent{eval_event(1, 0, 1, 0.5, 0, 1),
                                             exploit_event(2, 1, 7, 1, 7, 1)};
    CHECK_THROWS_AS(build_phylogeny(unknown_parent, 2), Error);
    std::vector<LineageEvent> unknown_checkpoint{eval_event(1, 0, 1, 0.5, 0, 1),
                                                 exploit_event(2, 1, 0, 1, 0, 99)};
    CHECK_THROWS_AS(build_phylogeny(unknown_checkpoint, 2), Error);
    std::vector<LineageEvent> out_of_order{eval_event(2, 0, 1, 0.5, 0, 1),
                                           eval_event(1, 1, 1, 0.5, 1, 2)};
    CHECK_THROWS_AS(build_phylogeny(out_of_order, 2), Error);
  }

  TEST_CASE("random logs always form a forest") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
      const auto events = random_log(2 + trial % 7, 60, rng);
      const Phylogeny tree = build_phylogeny(events, 2 + trial % 7);
      CHECK(tree.is_forest());
      for (const auto& node : tree.nodes) {
        CHECK(node.color >= 0.0);
        CHECK(node.color <= 1.0);
      }
      // the final roots agree with the ancestor census at the end of the log
      CHECK(tree.final_roots() ==
            ancestor_census(events, events.back().event_counter, 2 + trial % 7));
    }
  }

  TEST_CASE("ancestor census") {
    const auto events = std::vector<LineageEvent>{
        eval_event(1, 0, 1, 0.9, 0, 1), eval_event(2, 1, 1, 0.1, 1, 2),
        eval_event(3, 2, 1, 0.5, 2, 3), exploit_event(4, 1, 0, 1, 0, 1),
        exploit_event(5, 2, 1, 1, 0, 4)};
    CHECK(ancestor_census(events, 0, 3) == std::set<MemberId>{0, 1, 2});
    CHECK(ancestor_census(events, 3, 3) == std::set<MemberId>{0, 1, 2});
    CHECK(ancestor_census(events, 4, 3) == std::set<MemberId>{0, 2});
    CHECK(ancestor_census(events, 5, 3) == std::set<MemberId>{0});
  }

  TEST_CASE("census on toy runs is monotone and absorbing") {
    const QuadraticTask toy;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto report = run_experiment(toy_config(seed), toy);
      const auto& events = report.events;
      auto previous = ancestor_census(events, 0, 2);
      CHECK(previous == std::set<MemberId>{0, 1});
      for (const auto& e : events) {
        const auto now = ancestor_census(events, e.event_counter, 2);
        CHECK(std::includes(previous.begin(), previous.end(), now.begin(), now.end()));
        CHECK_FALSE(now.empty());
        previous = now;
      }
      CHECK(build_phylogeny(events, 2).is_forest());
    }
  }

  TEST_CASE("lineage splices the parent history before the copy") {
    auto with_h = [](LineageEvent e, double lr) {
      e.h_before = e.h_after = {{"lr", lr}};
      return e;
    };
    std::vector<LineageEvent> events{
        with_h(eval_event(1, 0, 1, 0.9, 0, 1), 0.5), with_h(eval_event(2, 1, 1, 0.1, 1, 2), 0.1),
        with_h(eval_event(3, 0, 2, 0.9, 0, 3), 0.5), with_h(eval_event(4, 1, 2, 0.1, 1, 4), 0.1),
        exploit_event(5, 1, 0, 2, 0, 3),             with_h(eval_event(6, 1, 2, 0.9, 0, 5), 0.6),
        with_h(eval_event(7, 1, 3, 0.95, 0, 6), 0.6)};
    const std::vector<MemberId> finals{0, 1};
    const auto lineages = extract_lineages(events, finals);
    const Lineage& copier = lineages.at(1);
    // member 0's schedule to t = 2, then member 1's own from t = 2 on
    REQUIRE(copier.size() == 4);
    CHECK(copier[0].t == 0);
    CHECK(copier[1] == LineagePoint{1, {{"lr", 0.5}}});
    CHECK(copier[2] == LineagePoint{2, {{"lr", 0.6}}});
    CHECK(copier[3] == LineagePoint{3, {{"lr", 0.6}}});
    for (const auto& [id, lineage] : lineages) {
      for (std::size_t i = 1; i < lineage.size(); ++i) CHECK(lineage[i].t > lineage[i - 1].t);
    }
  }

  TEST_CASE("toy lineages move both coordinates off zero") {
    // The winning schedule mixes both surrogate terms: the final h of the
    // best member has both coordinates positive in most seeds.
    const QuadraticTask toy;
    int mixed = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto report = run_experiment(toy_config(seed), toy);
      const std::vector<MemberId> finals{report.best.id};
      const auto lineages = extract_lineages(report.events, finals);
      const auto& lineage = lineages.at(report.best.id);
      REQUIRE_FALSE(lineage.empty());
      for (std::size_t i = 1; i < lineage.size(); ++i) CHECK(lineage[i].t > lineage[i - 1].t);
      const auto& h = lineage.back().h;
      mixed += numeric(h, "h0") > 0.0 && numeric(h, "h1") > 0.0;
    }
    CHECK(mixed >= 15);
  }

  TEST_CASE("top-k aggregation") {
    std::vector<CurveRecord> curves;
    for (std::int64_t step = 1; step <= 3; ++step) {
      for (MemberId m = 0; m < 4; ++m) curves.push_back({step, m, static_cast<double>(m * step), {}});
    }
    const auto all = aggregate_curves(curves, 4, 4);
    REQUIRE(all.size() == 3);
    CHECK(all[1].mean_top_k == doctest::Approx((0 + 2 + 4 + 6) / 4.0));
    const auto one = aggregate_curves(curves, 4, 1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(one[i].mean_top_k == 3.0 * static_cast<double>(i + 1));
    CHECK_THROWS_AS(aggregate_curves(curves, 4, 5), Error);
    CHECK_THROWS_AS(aggregate_curves(curves, 4, 0), Error);

    // carry forward: member 3 only reports at step 1
    std::vector<CurveRecord> sparse{{1, 0, 1.0, {}}, {1, 1, 5.0, {}}, {2, 0, 2.0, {}}};
    const auto rows = aggregate_curves(sparse, 2, 2);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].member_p == std::vector<double>{2.0, 5.0});
    CHECK(rows[1].mean_top_k == 3.5);
  }
}
