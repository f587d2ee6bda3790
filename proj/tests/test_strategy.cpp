#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "consensus/strategy.hpp"

using namespace consensus;

namespace {

StrategySpec spec_of(StrategyKind kind, double sigma = 0.0) {
  StrategySpec s;
  s.kind = kind;
  s.noise_sigma = sigma;
  return s;
}

Observation obs1(double self, std::vector<double> others, std::size_t round = 0) {
  Observation o{State(self), {}, round};
  for (double v : others) o.neighbor_states.emplace_back(v);
  return o;
}

State run(StrategyKind kind, const Observation& o, std::uint64_t seed = 1) {
  Rng rng(seed);
  return decide(spec_of(kind), o, rng);
}

std::vector<double> random_values(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

}  // namespace

TEST(Strategy, KindNamesRoundTrip) {
  for (auto k : {StrategyKind::AverageIncludeSelf, StrategyKind::AverageExcludeSelf, StrategyKind::Suggestible,
                 StrategyKind::Stubborn, StrategyKind::Erroneous})
    EXPECT_EQ(parse_strategy_kind(to_string(k)), k);
  EXPECT_EQ(parse_strategy_kind("average"), std::nullopt);
}

TEST(Strategy, Examples) {
  EXPECT_EQ(run(StrategyKind::AverageIncludeSelf, obs1(20, {80})), State(50.0));
  EXPECT_EQ(run(StrategyKind::AverageExcludeSelf, obs1(10, {30, 50})), State(40.0));
  EXPECT_EQ(run(StrategyKind::Suggestible, obs1(0, {70, 70, 20})), State(70.0));
  EXPECT_EQ(run(StrategyKind::Suggestible, obs1(15, {85})), State(85.0));
  EXPECT_EQ(run(StrategyKind::Suggestible, obs1(85, {15})), State(15.0));
  EXPECT_EQ(run(StrategyKind::Stubborn, obs1(33, {1, 2, 3})), State(33.0));
}

TEST(Strategy, EmptyNeighborsKeepSelf) {
  for (auto k : {StrategyKind::AverageIncludeSelf, StrategyKind::AverageExcludeSelf, StrategyKind::Suggestible,
                 StrategyKind::Stubborn})
    EXPECT_EQ(run(k, obs1(42, {})), State(42.0));
}

TEST(Strategy, SuggestibleTieBreaks) {
  // all counts 1: nearest to self wins
  EXPECT_EQ(run(StrategyKind::Suggestible, obs1(50, {10, 45, 90})), State(45.0));
  // equidistant: smaller value wins
  EXPECT_EQ(run(StrategyKind::Suggestible, obs1(50, {60, 40})), State(40.0));
  // majority beats proximity
  EXPECT_EQ(run(StrategyKind::Suggestible, obs1(50, {49, 10, 10})), State(10.0));
}

TEST(Strategy, SuggestiblePlanarUsesWholePoints) {
  Observation o{State(0.0, 0.0), {State(5.0, 5.0), State(9.0, 1.0), State(9.0, 1.0)}, 0};
  EXPECT_EQ(run(StrategyKind::Suggestible, o), State(9.0, 1.0));
}

TEST(Strategy, PlanarAveragesComponentwise) {
  Observation o{State(10.0, 10.0), {State(90.0, 20.0), State(20.0, 80.0), State(70.0, 90.0)}, 0};
  EXPECT_EQ(run(StrategyKind::AverageIncludeSelf, o), State(47.5, 50.0));
  EXPECT_EQ(run(StrategyKind::AverageExcludeSelf, o), State(60.0, 190.0 / 3.0));
}

TEST(Strategy, NonFiniteObservationRejected) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(run(StrategyKind::AverageIncludeSelf, obs1(nan, {1})), InvalidObservation);
  EXPECT_THROW(run(StrategyKind::Stubborn, obs1(1, {inf})), InvalidObservation);
  Observation mixed{State(1.0), {State(1.0, 2.0)}, 0};
  EXPECT_THROW(run(StrategyKind::AverageIncludeSelf, mixed), InvalidObservation);
}

TEST(Strategy, InvalidParametersRejected) {
  StrategySpec s;
  s.noise_sigma = -1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.hallucination_rate = 1.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.kind = StrategyKind::Erroneous;
  s.wrapped_kind = StrategyKind::Erroneous;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Strategy, NoiselessIsPure) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto vals = random_values(gen, 1 + trial % 9);
    const double self = vals.back();
    vals.pop_back();
    const auto o = obs1(self, vals);
    for (auto k : {StrategyKind::AverageIncludeSelf, StrategyKind::AverageExcludeSelf, StrategyKind::Suggestible,
                   StrategyKind::Stubborn})
      EXPECT_EQ(run(k, o, 1), run(k, o, 999));
  }
}

TEST(Strategy, IncludeSelfIsConvex) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 500; ++trial) {
    auto vals = random_values(gen, 1 + trial % 10);
    const double self = vals.front();
    const auto o = obs1(self, {vals.begin() + 1, vals.end()});
    const double out = run(StrategyKind::AverageIncludeSelf, o).x();
    EXPECT_GE(out, *std::min_element(vals.begin(), vals.end()));
    EXPECT_LE(out, *std::max_element(vals.begin(), vals.end()));
  }
}

TEST(Strategy, ExcludeSelfPreservesSumUnderFullConnectivity) {
  std::mt19937_64 gen(9);
  for (std::size_t n = 2; n <= 10; ++n) {
    const auto x = random_values(gen, n);
    double before = 0.0, after = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> others;
      for (std::size_t m = 0; m < n; ++m)
        if (m != k) others.push_back(x[m]);
      before += x[k];
      after += run(StrategyKind::AverageExcludeSelf, obs1(x[k], others)).x();
    }
    EXPECT_NEAR(after, before, 1e-9 * before);
  }
}

TEST(Strategy, SuggestibleOutputIsANeighbor) {
  std::mt19937_64 gen(13);
  std::uniform_int_distribution<int> small(0, 5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> others;
    for (int i = 0; i < 1 + trial % 8; ++i) others.push_back(10.0 * small(gen));
    const auto out = run(StrategyKind::Suggestible, obs1(10.0 * small(gen), others)).x();
    EXPECT_NE(std::find(others.begin(), others.end(), out), others.end());
  }
}

TEST(Strategy, StubbornIgnoresNoise) {
  Rng rng(1);
  const auto s = spec_of(StrategyKind::Stubborn, 10.0);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(decide(s, obs1(33, {0, 100}), rng), State(33.0));
}

TEST(Strategy, NoiseHasRequestedSpread) {
  Rng rng(21);
  const auto s = spec_of(StrategyKind::AverageIncludeSelf, 1.5);
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = decide(s, obs1(40, {60}), rng).x() - 50.0;
    sum += d;
    sq += d * d;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 4 * 1.5 / std::sqrt(n));
  EXPECT_NEAR(sd, 1.5, 0.05);
}

TEST(Strategy, TemperatureMapping) {
  EXPECT_EQ(noise_sigma_for_temperature(0.0), 0.0);
  EXPECT_DOUBLE_EQ(noise_sigma_for_temperature(0.7), kTemperature07NoiseSigma);
}

TEST(Strategy, ErroneousRateZeroMatchesWrapped) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 100; ++trial) {
    auto vals = random_values(gen, 4);
    const auto o = obs1(vals[0], {vals[1], vals[2], vals[3]});
    StrategySpec e;
    e.kind = StrategyKind::Erroneous;
    e.wrapped_kind = StrategyKind::AverageExcludeSelf;
    Rng rng(trial);
    EXPECT_EQ(decide(e, o, rng), run(StrategyKind::AverageExcludeSelf, o));
  }
}

TEST(Strategy, ErroneousRateOneIsUniformChiSquare) {
  StrategySpec e;
  e.kind = StrategyKind::Erroneous;
  e.hallucination_rate = 1.0;
  Rng rng(2024);
  constexpr int kDraws = 10000, kBins = 10;
  std::array<int, kBins> counts{};
  for (int i = 0; i < kDraws; ++i) {
    const double v = decide(e, obs1(50, {50}), rng).x();
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 100.0);
    ++counts[std::min(kBins - 1, static_cast<int>(v / 10.0))];
  }
  const double expected = static_cast<double>(kDraws) / kBins;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // upper 1% point of chi-square with 9 degrees of freedom
  EXPECT_LT(chi2, 21.666);
}

TEST(Strategy, ErroneousPlanarHallucinatesBothAxes) {
  StrategySpec e;
  e.kind = StrategyKind::Erroneous;
  e.hallucination_rate = 1.0;
  Rng rng(8);
  bool differ = false;
  for (int i = 0; i < 50; ++i) {
    const auto s = decide(e, Observation{State(1.0, 1.0), {State(2.0, 2.0)}, 0}, rng);
    EXPECT_EQ(s.dimension(), 2);
    EXPECT_TRUE(Bounds{}.contains(s));
    differ = differ || s.x() != s.y();
  }
  EXPECT_TRUE(differ);
}

TEST(Strategy, CanonicalReply) {
  EXPECT_EQ(canonical_reply("why", State(50.0)), "Reasoning: why\nPosition: 50");
  EXPECT_EQ(canonical_reply("why", State(1.5, 2.0)), "Reasoning: why\nPosition: [1.5, 2]");
}

TEST(StateText, FormatAndParse) {
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_state_list(std::vector<State>{State(40.0), State(60.0), State(70.0)}), "[40, 60, 70]");
  EXPECT_EQ(parse_state_text(" [1.5, -2] ", 2), State(1.5, -2.0));
  EXPECT_EQ(parse_state_text("abc", 1), std::nullopt);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const State s(u(gen), u(gen));
    EXPECT_EQ(parse_state_text(format_state(s), 2), s);
  }
}

TEST(StateMath, MeanIsOrderIndependent) {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 200; ++trial) {
    auto v = random_values(gen, 2 + trial % 9);
    const double m = order_independent_mean(v);
    std::shuffle(v.begin(), v.end(), gen);
    EXPECT_EQ(order_independent_mean(v), m);
  }
}

TEST(StateMath, MeanOfIdenticalValuesIsThatValue) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-1000.0, 1000.0);
  for (int trial = 0; trial < 20000; ++trial) {
    const double v = u(gen);
    const std::vector<double> same(2 + trial % 15, v);
    ASSERT_EQ(order_independent_mean(same), v) << trial;
  }
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.uniform01(), b.uniform01());
}
