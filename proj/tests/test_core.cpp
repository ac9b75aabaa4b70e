#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "pbt/core.hpp"
#include "pbt/rng.hpp"

using namespace pbt;

namespace {

MemberState member(MemberId id, double p) {
  MemberState m;
  m.id = id;
  m.p = p;
  return m;
}

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("ready fires once steps since the last event reach the interval") {
    MemberState m;
    m.steps_since_event = 4;
    CHECK(ready(m, 4));
    m.steps_since_event = 3;
    CHECK_FALSE(ready(m, 4));
    m.steps_since_event = 5000;
    CHECK(ready(m, 5000));
  }

  TEST_CASE("record_eval pushes into the window and sets p") {
    MemberState m;
    m.window = EvalWindow(10);
    m = record_eval(m, 0.5);
    CHECK(m.window.size() == 1);
    CHECK(m.p == 0.5);
    CHECK(m.version == 1);

    for (int i = 0; i < 9; ++i) m = record_eval(m, static_cast<double>(i));
    CHECK(m.window.size() == 10);
    m = record_eval(m, 1.0);
    CHECK(m.window.size() == 10);
    CHECK(m.p == 1.0);
    CHECK(m.window.newest() == 1.0);
    // the first score (0.5) is the one evicted
    CHECK(m.window.scores().back() == 0.0);

    CHECK_THROWS_AS(record_eval(m, std::nan("")), Error);
    CHECK_THROWS_AS(record_eval(m, std::numeric_limits<double>::infinity()), Error);
  }

  TEST_CASE("best picks the highest p with ties to the lowest id") {
    std::vector<MemberState> pop{member(0, 0.5), member(1, 0.9), member(2, 0.2)};
    CHECK(best(pop).id == 1);
    std::vector<MemberState> tie{member(0, 0.9), member(1, 0.9)};
    CHECK(best(tie).id == 0);
    std::vector<MemberState> tie_reversed{member(1, 0.9), member(0, 0.9)};
    CHECK(best(tie_reversed).id == 0);
    std::vector<MemberState> one{member(7, -1.0)};
    CHECK(best(one).id == 7);
    CHECK_THROWS_AS(best(std::vector<MemberState>{}), Error);
  }

  TEST_CASE("format_double round-trips") {
    Rng rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
      const double x = u(rng) * std::pow(10.0, static_cast<int>(u(rng)) % 30);
      CHECK(std::strtod(format_double(x).c_str(), nullptr) == x);
    }
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  }

  TEST_CASE("hyperparameter validation") {
    std::vector<HyperparamSpec> specs{{.name = "lr", .prior = Prior::log_uniform(1e-5, 1e-2)},
                                      {.name = "opt", .prior = Prior::categorical({"adam", "sgd"})}};
    CHECK_NOTHROW(validate_hyperparams({{"lr", 1e-3}, {"opt", std::string("adam")}}, specs));
    CHECK_THROWS_AS(validate_hyperparams({{"lr", 1e-3}}, specs), Error);
    CHECK_THROWS_AS(validate_hyperparams({{"lr", -1.0}, {"opt", std::string("adam")}}, specs), Error);
    CHECK_THROWS_AS(numeric({{"opt", std::string("adam")}}, "opt"), Error);

    HyperparamSpec bad{.name = "x", .prior = Prior::log_uniform(0.0, 1.0)};
    CHECK_THROWS_AS(bad.validate(), Error);
    HyperparamSpec backwards{.name = "x", .prior = Prior::uniform(1.0, 0.0)};
    CHECK_THROWS_AS(backwards.validate(), Error);
  }

  TEST_CASE("experiment config validation") {
    ExperimentConfig c;
    c.population_size = 4;
    c.total_steps = 10;
    CHECK_NOTHROW(c.validate());
    c.exploit.truncation_fraction = 0.7;
    CHECK_THROWS_AS(c.validate(), Error);
    c.exploit.truncation_fraction = 0.2;
    c.population_size = 1;
    CHECK_THROWS_AS(c.validate(), Error);
    c.exploit.kind = ExploitKind::none;
    c.explore.kind = ExploreKind::none;
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("enum names parse back") {
    for (auto k : {ExploitKind::ttest, ExploitKind::truncation, ExploitKind::binary_tournament,
                   ExploitKind::none}) {
      CHECK(parse_exploit_kind(to_string(k)) == k);
    }
    for (auto m : {ExploitMask::all, ExploitMask::hyperparams_only, ExploitMask::weights_only,
                   ExploitMask::none}) {
      CHECK(parse_exploit_mask(to_string(m)) == m);
    }
    for (auto m : {ExecutionMode::serial, ExecutionMode::async, ExecutionMode::partial_sync}) {
      CHECK(parse_execution_mode(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_explore_kind("mutate"), Error);
  }

  TEST_CASE("derived seeds differ per member and purpose") {
    std::set<std::uint64_t> seeds;
    for (MemberId m = 0; m < 50; ++m) {
      for (auto p : {StreamPurpose::init, StreamPurpose::step, StreamPurpose::exploit,
                     StreamPurpose::explore}) {
        seeds.insert(derive_seed(42, m, p));
      }
    }
    CHECK(seeds.size() == 200);
    CHECK(derive_seed(1, 0, StreamPurpose::step) != derive_seed(2, 0, StreamPurpose::step));
  }
}
