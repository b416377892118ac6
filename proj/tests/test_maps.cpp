#include <doctest.h>

#include <cmath>
#include <set>

#include "gml/maps.hpp"
#include "gml/rng.hpp"

using namespace gml;

namespace {

Eigen::MatrixXd two_state() {
  Eigen::MatrixXd p(2, 2);
  p << 0.9, 0.1, 0.2, 0.8;
  return p;
}

Eigen::MatrixXd golden_mean() {
  Eigen::MatrixXd p(2, 2);
  p << 0.5, 0.5, 1.0, 0.0;
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("maps");

TEST_CASE("philox matches the reference test vector") {
  // Salmon et al. known-answer vector: counter 0, key 0.
  Philox rng(0, 0);
  CHECK(rng.next_u32() == 0x6627e8d5u);
  CHECK(rng.next_u32() == 0xe169c58du);
  CHECK(rng.next_u32() == 0xbc57ac4cu);
  CHECK(rng.next_u32() == 0x9b00dbd8u);
}

TEST_CASE("philox streams are deterministic and separated") {
  Philox a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  int differs_c = 0, differs_d = 0;
  for (int i = 0; i < 64; ++i) {
    const auto va = a.next_u32();
    CHECK(va == b.next_u32());
    differs_c += va != c.next_u32();
    differs_d += va != d.next_u32();
  }
  CHECK(differs_c > 60);
  CHECK(differs_d > 60);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("two-state chain: stationary vector and distortion") {
  const auto m = build_finite_markov(two_state(), 0.5);
  // pi P = pi solved by hand: pi = (2/3, 1/3).
  CHECK(m.stationary[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(m.stationary[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  // Largest two-sided ratio P(a,b)/pi(b) is 1/0.3.
  CHECK(m.distortion == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
  CHECK(m.start_cdf[1] == 1.0);
}

TEST_CASE("stochasticity violations are rejected") {
  Eigen::MatrixXd p(2, 2);
  p << 0.9, 0.2, 0.2, 0.8;
  CHECK_THROWS_WITH_AS(static_cast<void>(build_finite_markov(p, 0.5)), doctest::Contains("row"),
                       Error);
  p << 1.1, -0.1, 0.2, 0.8;
  try {
    static_cast<void>(build_finite_markov(p, 0.5));
    FAIL("expected NotStochastic");
  } catch (const Error& e) {
    CHECK(e.code() == errc::not_stochastic);
  }
}

TEST_CASE("non-primitive supports are rejected") {
  Eigen::MatrixXd p(2, 2);
  p << 0.0, 1.0, 1.0, 0.0;  // period 2
  try {
    static_cast<void>(build_finite_markov(p, 0.5));
    FAIL("expected NotMixing");
  } catch (const Error& e) {
    CHECK(e.code() == errc::not_mixing);
  }
  p << 0.5, 0.5, 0.0, 1.0;  // absorbing state
  CHECK_THROWS_AS(static_cast<void>(build_finite_markov(p, 0.5)), Error);
  p = Eigen::MatrixXd::Identity(3, 3);  // reducible
  CHECK_THROWS_AS(static_cast<void>(build_finite_markov(p, 0.5)), Error);
}

TEST_CASE("slowly mixing primitive pattern still builds") {
  // Cycle of length 5 with one shortcut; primitive exponent near the
  // Wielandt bound relative to its size.
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(5, 5);
  p(0, 0) = 0.5;
  p(0, 1) = 0.5;
  for (int i = 1; i < 5; ++i) p(i, (i + 1) % 5) = 1.0;
  const auto m = build_finite_markov(p, 0.5);
  CHECK(m.stationary.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("geometric weights: exact truncation arithmetic") {
  WeightSpec w{WeightSpec::Form::geometric, 0.5};
  const auto m = build_countable_bernoulli(w, 1e-12);
  CHECK(m.states == 40);  // 2^-40 <= 1e-12 < 2^-39
  CHECK(m.discarded_mass == doctest::Approx(std::pow(0.5, 40.0)).epsilon(1e-13));
  CHECK(m.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.weights[0] == doctest::Approx(0.5 / (1.0 - std::pow(0.5, 40.0))).epsilon(1e-14));
  CHECK(m.weights[1] / m.weights[0] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("polynomial weights: zeta normalization and cell count") {
  WeightSpec w{WeightSpec::Form::polynomial, 1.5};
  const auto m = build_countable_bernoulli(w, 1e-7);
  CHECK(m.states == 29122);
  CHECK(m.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.weights[0] / m.weights[1] == doctest::Approx(std::pow(2.0, 2.5)).epsilon(1e-13));
  CHECK(m.discarded_mass < 1e-7);
  CHECK(m.discarded_mass > 0.0);
}

TEST_CASE("weight families reject non-summable or too-tight inputs") {
  try {
    static_cast<void>(build_countable_bernoulli({WeightSpec::Form::polynomial, 0.0}, 1e-6));
    FAIL("expected NotSummable");
  } catch (const Error& e) {
    CHECK(e.code() == errc::not_summable);
  }
  CHECK_THROWS_AS(
      static_cast<void>(build_countable_bernoulli({WeightSpec::Form::geometric, 1.1}, 1e-6)),
      Error);
  try {
    static_cast<void>(build_countable_bernoulli({WeightSpec::Form::polynomial, 0.2}, 1e-9));
    FAIL("expected TolTooTight");
  } catch (const Error& e) {
    CHECK(e.code() == errc::tol_too_tight);
  }
}

TEST_CASE("induced model: cell masses and truncated mean") {
  auto [m, f] = build_induced_doubling(0.5, 1e-12);
  CHECK(m.states == 40);
  CHECK(m.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
  // Return-time identity gives mean 2/(1-a) on the full alphabet; the
  // 40-cell truncation sits within 1e-5 of it.
  CHECK(induced_mean(m, f) == doctest::Approx(3.9999934879104186).epsilon(1e-12));
  CHECK(std::abs(induced_mean(m, f) - 4.0) < 1e-5);

  auto [m2, f2] = build_induced_doubling(0.625, 1e-12);
  CHECK(induced_mean(m2, f2) == doctest::Approx(16.0 / 3.0).epsilon(1e-4));

  CHECK_THROWS_AS(static_cast<void>(build_induced_doubling(1.0)), Error);
  CHECK_THROWS_AS(static_cast<void>(build_induced_doubling(-0.1)), Error);
}

TEST_CASE("induced observable values and Lipschitz bounds") {
  CHECK(induced_value(0.5, 0, 0.75) == doctest::Approx(1.1547005383792515).epsilon(1e-15));
  // Cell with return time 3 at its left edge: orbit 0.5625 -> 0.125 -> 0.25.
  CHECK(induced_value(0.5, 2, 0.5625) == doctest::Approx(6.161760458079524).epsilon(1e-14));
  CHECK(induced_lipschitz(0.5, 0) == doctest::Approx(0.769800358919501).epsilon(1e-14));
  CHECK(induced_lipschitz(0.5, 4) == doctest::Approx(464.8794245794118).epsilon(1e-12));
  // Geometric growth 2^{1+a} between consecutive cells.
  CHECK(induced_lipschitz(0.5, 30) / induced_lipschitz(0.5, 29) ==
        doctest::Approx(std::pow(2.0, 1.5)).epsilon(1e-3));
}

TEST_CASE("regularity series: convergent and divergent regimes") {
  auto [m, f] = build_induced_doubling(0.5, 1e-12);
  CHECK(regularity_sum(m, f, 0.4) == doctest::Approx(3.647005389485551).epsilon(1e-10));
  CHECK(std::isinf(regularity_sum(m, f, 1.0)));
  // Boundary (1+a) eta = 1: terms stop decaying.
  CHECK(std::isinf(regularity_sum(m, f, 2.0 / 3.0)));
  CHECK(std::isfinite(regularity_sum(m, f, 0.65)));
}

TEST_CASE("depth-one tables are locally constant") {
  const auto m = build_finite_markov(two_state(), 0.5);
  Observable f;
  f.values = Eigen::Vector2d(1.0, -1.0);
  CHECK(regularity_sum(m, f, 1.0) == 0.0);
}

TEST_CASE("depth-two Lipschitz sums") {
  const auto m = build_finite_markov(two_state(), 0.5);
  Observable f;
  f.depth = 2;
  f.values.resize(4);
  f.values << 1.0, 2.0, 5.0, 5.0;
  // Df(0) = |1-2| / gamma = 2, Df(1) = 0.
  CHECK(regularity_sum(m, f, 1.0) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(regularity_sum(m, f, 0.5) == doctest::Approx(std::sqrt(2.0) * 2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("cylinder enumeration matches transition support") {
  const auto m = build_finite_markov(golden_mean(), 0.5);
  CHECK(m.stationary[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  const auto c2 = enumerate_cylinders(m, 2);
  REQUIRE(c2.size() == 3);  // words 00, 01, 10
  CHECK(c2.mass.sum() == doctest::Approx(1.0).epsilon(1e-13));
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(c2.mass[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  }
  const auto c3 = enumerate_cylinders(m, 3);
  CHECK(c3.size() == 5);  // golden mean words grow like Fibonacci
  CHECK(c3.mass.sum() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(c3.find(0b11) == -1);
  const Eigen::Index i010 = c3.find(0 * 4 + 1 * 2 + 0);
  REQUIRE(i010 >= 0);
  CellId word[3];
  c3.unpack(i010, word);
  CHECK(word[0] == 0);
  CHECK(word[1] == 1);
  CHECK(word[2] == 0);
}

TEST_CASE("birkhoff sums over rolling windows") {
  const auto m = build_finite_markov(two_state(), 0.5);
  Trajectory t;
  t.symbols = {0, 1, 0};

  Observable f1;
  f1.values = Eigen::Vector2d(1.0, -1.0);
  CHECK(birkhoff_sum(m, f1, t) == doctest::Approx(1.0).epsilon(1e-15));

  Observable f2;
  f2.depth = 2;
  f2.values.resize(4);
  f2.values << 10.0, 20.0, 30.0, 40.0;
  // Windows (0,1) and (1,0): 20 + 30.
  CHECK(birkhoff_sum(m, f2, t) == doctest::Approx(50.0).epsilon(1e-15));

  Trajectory shorty;
  shorty.symbols = {1};
  try {
    static_cast<void>(birkhoff_sum(m, f2, shorty));
    FAIL("expected TrajectoryTooShort");
  } catch (const Error& e) {
    CHECK(e.code() == errc::trajectory_too_short);
  }
}

TEST_CASE("trajectories are reproducible and stream-separated") {
  const auto m = build_finite_markov(two_state(), 0.5);
  const auto a = sample_trajectory(m, 512, 11, 3);
  const auto b = sample_trajectory(m, 512, 11, 3);
  const auto c = sample_trajectory(m, 512, 11, 4);
  CHECK(a.symbols == b.symbols);
  CHECK(a.symbols != c.symbols);
}

TEST_CASE("sampled occupation frequencies track the stationary vector") {
  const auto m = build_finite_markov(two_state(), 0.5);
  const Eigen::Index n = 200000;
  const auto t = sample_trajectory(m, n, 2026, 0);
  double zeros = 0;
  for (CellId s : t.symbols) zeros += s == 0;
  CHECK(zeros / double(n) == doctest::Approx(2.0 / 3.0).epsilon(0.015));
}

TEST_CASE("bernoulli sampler hits cell masses") {
  const auto m = build_countable_bernoulli({WeightSpec::Form::geometric, 0.5}, 1e-12);
  const Eigen::Index n = 100000;
  const auto t = sample_trajectory(m, n, 7, 0);
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(m.states);
  for (CellId s : t.symbols) freq[s] += 1.0;
  freq /= double(n);
  CHECK(freq[0] == doctest::Approx(0.5).epsilon(0.02));
  CHECK(freq[1] == doctest::Approx(0.25).epsilon(0.04));
  CHECK(freq[2] == doctest::Approx(0.125).epsilon(0.08));
}

TEST_CASE("induced trajectories carry in-cell base points") {
  auto [m, f] = build_induced_doubling(0.5, 1e-12);
  const auto t = sample_trajectory(m, 4096, 5, 1);
  REQUIRE(t.points.size() == t.symbols.size());
  for (std::size_t i = 0; i < t.symbols.size(); ++i) {
    const int k = t.symbols[i] + 1;
    CHECK(t.points[i] >= 0.5 + std::pow(0.5, k + 1.0));
    CHECK(t.points[i] < 0.5 + std::pow(0.5, double(k)));
  }
  // Birkhoff sum of n = 4096 draws concentrates near n * mean.
  const double s = birkhoff_sum(m, f, t);
  CHECK(s / 4096.0 == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("observable distribution merges equal atoms") {
  const auto m = build_finite_markov(two_state(), 0.5);
  Observable f;
  f.values = Eigen::Vector2d(1.0, -1.0);
  const auto d = observable_distribution(m, f);
  REQUIRE(d.value.size() == 2);
  CHECK(d.value[0] == -1.0);
  CHECK(d.value[1] == 1.0);
  CHECK(d.mass[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  CHECK(d.mass[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-13));
  CHECK(d.mean == doctest::Approx(1.0 / 3.0).epsilon(1e-13));

  const auto gm = build_finite_markov(golden_mean(), 0.5);
  Observable g;
  g.depth = 2;
  g.values.resize(4);
  g.values << 1.0, 2.0, 2.0, -99.0;  // word 11 inadmissible, slot unused
  const auto dg = observable_distribution(gm, g);
  REQUIRE(dg.value.size() == 2);
  CHECK(dg.mass[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  CHECK(dg.mass[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-13));
}

TEST_CASE("sticky chain keeps the weights stationary") {
  const auto m = build_sticky_bernoulli({WeightSpec::Form::geometric, 0.5}, 0.3, 1e-3);
  REQUIRE(m.states == 10);
  CHECK(m.stickiness == 0.3);
  CHECK(m.stationary[0] == doctest::Approx(m.weights[0]).epsilon(1e-15));

  // Depth-2 masses follow w_a (theta [a==b] + (1-theta) w_b).
  const auto cs = enumerate_cylinders(m, 2);
  REQUIRE(cs.size() == m.states * m.states);
  const Eigen::Index diag = cs.find(0 * static_cast<std::uint64_t>(m.states) + 0);
  const Eigen::Index off = cs.find(0 * static_cast<std::uint64_t>(m.states) + 1);
  CHECK(cs.mass[diag] ==
        doctest::Approx(m.weights[0] * (0.3 + 0.7 * m.weights[0])).epsilon(1e-14));
  CHECK(cs.mass[off] == doctest::Approx(m.weights[0] * 0.7 * m.weights[1]).epsilon(1e-14));

  // Repeat frequency: P(X_{k+1} = X_k) = theta + (1-theta) sum w^2.
  const auto traj = sample_trajectory(m, 200001, 7, 0);
  Eigen::Index rep = 0;
  for (std::size_t i = 1; i < traj.symbols.size(); ++i) rep += traj.symbols[i] == traj.symbols[i - 1];
  const double expected = 0.3 + 0.7 * m.weights.squaredNorm();
  CHECK(double(rep) / 200000.0 == doctest::Approx(expected).epsilon(0.02));

  CHECK_THROWS_AS(static_cast<void>(build_sticky_bernoulli({WeightSpec::Form::geometric, 0.5}, 1.0, 1e-3)),
                  Error);
}

TEST_CASE("distribution sampler agrees with atom masses") {
  const auto m = build_finite_markov(two_state(), 0.5);
  Observable f;
  f.values = Eigen::Vector2d(1.0, -1.0);
  const auto d = observable_distribution(m, f);
  Philox rng(99, 0);
  int plus = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) plus += d.sample(rng) > 0.0;
  CHECK(plus / double(n) == doctest::Approx(2.0 / 3.0).epsilon(0.02));

  auto [im, iobs] = build_induced_doubling(0.5, 1e-12);
  const auto di = observable_distribution(im, iobs);
  CHECK(di.sampler_only);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += di.sample(rng);
  CHECK(acc / n == doctest::Approx(4.0).epsilon(0.25));
}

TEST_SUITE_END();
