#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "pbt/strategies.hpp"

using namespace pbt;

namespace {

StoreSnapshot population_with(const std::vector<double>& p) {
  StoreSnapshot s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    MemberState m;
    m.id = static_cast<MemberId>(i);
    m.p = p[i];
    s.members.push_back(m);
  }
  return s;
}

MemberState with_window(MemberId id, const std::vector<double>& scores) {
  MemberState m;
  m.id = id;
  m.window = EvalWindow(std::max<std::size_t>(10, scores.size()));
  // window keeps newest first; push oldest first
  for (double s : scores) m = record_eval(m, s);
  return m;
}

// Two-sided exact binomial p-value for k successes in n fair trials.
double binomial_p_value(int k, int n) {
  boost::math::binomial_distribution<double> dist(n, 0.5);
  const int lo = std::min(k, n - k);
  return std::min(1.0, 2.0 * boost::math::cdf(dist, lo));
}

}  // namespace

TEST_SUITE("strategies") {
  TEST_CASE("truncation selection is exact for every rank") {
    // fraction as num/den so the ceil rule is evaluated in integers
    const std::vector<std::pair<int, int>> fractions{{1, 5}, {1, 4}, {1, 2}, {1, 10}};
    Rng rng(2024);
    for (const auto& [num, den] : fractions) {
      const double fraction = static_cast<double>(num) / den;
      for (int n = 2; n <= 20; ++n) {
        const int cut = std::max(1, (num * n + den - 1) / den);
        // scores drawn from a small set so ties occur
        std::vector<double> p(static_cast<std::size_t>(n));
        std::uniform_int_distribution<int> level(0, n / 2);
        for (auto& v : p) v = level(rng) * 0.1;
        const StoreSnapshot pop = population_with(p);

        // rank[i] = number of members ahead of i (higher p, or equal p and lower id)
        std::vector<int> rank(static_cast<std::size_t>(n), 0);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            if (p[j] > p[i] || (p[j] == p[i] && j < i)) ++rank[i];
          }
        }
        for (int self = 0; self < n; ++self) {
          const bool bottom = rank[self] >= n - cut;
          std::set<MemberId> seen;
          for (int draw = 0; draw < 40 * cut; ++draw) {
            const auto src = truncation_select(pop.at(self), pop, fraction, rng);
            REQUIRE(src.has_value() == bottom);
            if (!src) break;
            CHECK(rank[*src] < cut);
            CHECK(*src != self);
            seen.insert(*src);
          }
          if (bottom) CHECK(static_cast<int>(seen.size()) == cut - (rank[self] < cut));
        }
      }
    }
  }

  TEST_CASE("truncation examples") {
    Rng rng(1);
    // ids 0..9 with p descending in id order: id 9 is ranked 10th
    std::vector<double> p(10);
    for (int i = 0; i < 10; ++i) p[i] = 1.0 - 0.1 * i;
    const auto pop = population_with(p);
    std::map<MemberId, int> counts;
    for (int i = 0; i < 4000; ++i) ++counts[*truncation_select(pop.at(9), pop, 0.2, rng)];
    CHECK(counts.size() == 2);
    CHECK(counts[0] > 1800);
    CHECK(counts[1] > 1800);
    CHECK_FALSE(truncation_select(pop.at(4), pop, 0.2, rng));

    const auto five = population_with({0.5, 0.4, 0.3, 0.2, 0.1});
    CHECK(truncation_select(five.at(4), five, 0.2, rng) == MemberId{0});
    CHECK_FALSE(truncation_select(five.at(3), five, 0.2, rng));
  }

  TEST_CASE("truncation ignores failed members") {
    Rng rng(5);
    auto pop = population_with({0.9, 0.8, 0.1, 0.0});
    pop.members[0].failed = true;
    // live ranking 1, 2, 3 with cut 1: member 3 copies from 1
    CHECK(truncation_select(pop.at(3), pop, 0.2, rng) == MemberId{1});
  }

  TEST_CASE("t-test selection") {
    Rng rng(11);
    std::vector<double> low(10), high(10);
    std::iota(low.begin(), low.end(), 0.0);
    std::iota(high.begin(), high.end(), 5.0);
    StoreSnapshot pop;
    pop.members = {with_window(0, low), with_window(1, high)};
    CHECK(ttest_select(pop.at(0), pop, 0.05, rng) == MemberId{1});
    CHECK_FALSE(ttest_select(pop.at(1), pop, 0.05, rng));

    StoreSnapshot same;
    same.members = {with_window(0, low), with_window(1, low)};
    CHECK_FALSE(ttest_select(same.at(0), same, 0.05, rng));

    StoreSnapshot short_window;
    short_window.members = {with_window(0, {1.0}), with_window(1, high)};
    CHECK_FALSE(ttest_select(short_window.at(0), short_window, 0.05, rng));
  }

  TEST_CASE("t-test selection agrees with a direct decision rule") {
    Rng rng(99);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<int> size(2, 10);
    std::uniform_real_distribution<double> shift(-1.5, 1.5);
    int copies = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> x(size(rng)), y(size(rng));
      const double d = shift(rng);
      for (auto& v : x) v = noise(rng);
      for (auto& v : y) v = d + noise(rng);
      StoreSnapshot pop;
      pop.members = {with_window(0, x), with_window(1, y)};

      const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
      const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
      double vx = 0, vy = 0;
      for (double v : x) vx += (v - mx) * (v - mx);
      for (double v : y) vy += (v - my) * (v - my);
      const double ax = vx / (x.size() - 1) / x.size(), ay = vy / (y.size() - 1) / y.size();
      const double t = (my - mx) / std::sqrt(ax + ay);
      const double df = (ax + ay) * (ax + ay) / (ax * ax / (x.size() - 1) + ay * ay / (y.size() - 1));
      const double p = boost::math::cdf(boost::math::complement(boost::math::students_t(df), t));
      const bool expected = my > mx && p < 0.05;

      const auto got = ttest_select(pop.at(0), pop, 0.05, rng);
      CHECK(got.has_value() == expected);
      copies += expected;
    }
    // both branches exercised
    CHECK(copies > 50);
    CHECK(copies < 950);
  }

  TEST_CASE("binary tournament needs strict improvement") {
    Rng rng(3);
    const auto better = population_with({0.5, 0.9});
    CHECK(binary_tournament(better.at(0), better, rng) == MemberId{1});
    const auto equal = population_with({0.5, 0.5});
    CHECK_FALSE(binary_tournament(equal.at(0), equal, rng));
    const auto worse = population_with({0.5, 0.1});
    CHECK_FALSE(binary_tournament(worse.at(0), worse, rng));
  }

  TEST_CASE("perturb multiplies by one of the two factors") {
    Rng rng(8);
    std::vector<HyperparamSpec> specs{{.name = "lr", .prior = Prior::log_uniform(1e-5, 1.0)}};
    for (int i = 0; i < 100; ++i) {
      const double v = numeric(perturb({{"lr", 0.001}}, specs, rng), "lr");
      CHECK((v == 0.001 * 1.2 || v == 0.001 * 0.8));
    }
    specs[0].perturb_factors = {2.0, 0.5};
    for (int i = 0; i < 100; ++i) {
      const double v = numeric(perturb({{"lr", 2e-4}}, specs, rng), "lr");
      CHECK((v == 4e-4 || v == 1e-4));
    }
    specs[0].perturb_factors = {1.0, 1.0};
    CHECK(numeric(perturb({{"lr", 2e-4}}, specs, rng), "lr") == 2e-4);
  }

  TEST_CASE("perturb factor choice is fair") {
    Rng rng(12345);
    std::vector<HyperparamSpec> specs{{.name = "lr", .prior = Prior::log_uniform(1e-9, 1e9)}};
    const int n = 10000;
    int up = 0;
    for (int i = 0; i < n; ++i) up += numeric(perturb({{"lr", 1.0}}, specs, rng), "lr") > 1.0;
    CHECK(binomial_p_value(up, n) >= 1e-3);
  }

  TEST_CASE("perturb clamps to the prior and redraws categories") {
    Rng rng(4);
    std::vector<HyperparamSpec> specs{{.name = "lr", .prior = Prior::uniform(0.0, 1.0)},
                                      {.name = "opt", .prior = Prior::categorical({"a", "b", "c"})}};
    for (int i = 0; i < 200; ++i) {
      const auto h = perturb({{"lr", 0.95}, {"opt", std::string("a")}}, specs, rng);
      CHECK(numeric(h, "lr") <= 1.0);
      const auto& opt = std::get<std::string>(h.at("opt"));
      CHECK((opt == "a" || opt == "b" || opt == "c"));
    }
  }

  TEST_CASE("resample") {
    Rng rng(6);
    HyperparamSpec lr{.name = "lr", .prior = Prior::log_uniform(1e-5, 5e-3), .resample_prob = 0.0};
    CHECK(numeric(resample({{"lr", 1.0}}, std::span(&lr, 1), rng), "lr") == 1.0);
    lr.resample_prob = 1.0;
    for (int i = 0; i < 1000; ++i) {
      const double v = numeric(resample({{"lr", 1.0}}, std::span(&lr, 1), rng), "lr");
      CHECK(v >= 1e-5);
      CHECK(v <= 5e-3);
    }
    std::vector<HyperValue> unroll;
    for (int k = 5; k <= 50; ++k) unroll.emplace_back(static_cast<double>(k));
    HyperparamSpec steps{.name = "unroll", .prior = Prior::categorical(unroll), .resample_prob = 1.0};
    for (int i = 0; i < 500; ++i) {
      const double v = numeric(resample({{"unroll", 5.0}}, std::span(&steps, 1), rng), "unroll");
      CHECK(v >= 5.0);
      CHECK(v <= 50.0);
      CHECK(v == std::round(v));
    }
  }

  TEST_CASE("prior sampling") {
    Rng rng(21);
    HyperparamSpec point{.name = "lr", .prior = Prior::log_uniform(1e-4, 1e-4)};
    CHECK(std::get<double>(sample_prior(point, rng)) == 1e-4);

    HyperparamSpec unit{.name = "u", .prior = Prior::uniform(0.0, 1.0)};
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) sum += std::get<double>(sample_prior(unit, rng));
    CHECK(std::abs(sum / 10000 - 0.5) <= 0.02);

    HyperparamSpec log{.name = "lr", .prior = Prior::log_uniform(1e-5, 5e-3)};
    int below_geo_mid = 0;
    for (int i = 0; i < 10000; ++i) {
      const double v = std::get<double>(sample_prior(log, rng));
      CHECK(v >= 1e-5);
      CHECK(v <= 5e-3);
      below_geo_mid += v < std::sqrt(1e-5 * 5e-3);
    }
    // log-uniform: half the mass below the geometric midpoint
    CHECK(binomial_p_value(below_geo_mid, 10000) >= 1e-3);
  }

  TEST_CASE("gaussian perturb") {
    Rng rng(31);
    std::vector<HyperparamSpec> specs{{.name = "h0", .prior = Prior::uniform(0.0, 1.0)},
                                      {.name = "h1", .prior = Prior::uniform(0.0, 1.0)}};
    const HyperparamVector h{{"h0", 1.0}, {"h1", 0.0}};
    CHECK(gaussian_perturb(h, specs, 0.0, rng) == h);
    for (int i = 0; i < 1000; ++i) {
      const auto out = gaussian_perturb(h, specs, 0.1, rng);
      for (const char* k : {"h0", "h1"}) {
        CHECK(numeric(out, k) >= 0.0);
        CHECK(numeric(out, k) <= 1.0);
      }
    }
  }
}
