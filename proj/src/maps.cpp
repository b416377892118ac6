#include "gml/maps.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace gml {
namespace {

constexpr double kStochasticTol = 1e-12;
constexpr Eigen::Index kMaxCells = 50'000'000;
constexpr Eigen::Index kMaxCylinders = 2'000'000;

std::string cell_str(Eigen::Index i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(i));
  return buf;
}

// Walker alias table; O(K) build, one table lookup per draw.
void build_alias(const Eigen::VectorXd& w, std::vector<double>& prob, std::vector<CellId>& cell) {
  const Eigen::Index k = w.size();
  prob.assign(static_cast<std::size_t>(k), 0.0);
  cell.assign(static_cast<std::size_t>(k), 0);
  std::vector<double> scaled(static_cast<std::size_t>(k));
  const double total = w.sum();
  for (Eigen::Index i = 0; i < k; ++i) scaled[static_cast<std::size_t>(i)] = w[i] * k / total;
  std::vector<CellId> small, large;
  small.reserve(static_cast<std::size_t>(k));
  large.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    (scaled[static_cast<std::size_t>(i)] < 1.0 ? small : large).push_back(static_cast<CellId>(i));
  }
  while (!small.empty() && !large.empty()) {
    const CellId s = small.back();
    small.pop_back();
    const CellId l = large.back();
    prob[static_cast<std::size_t>(s)] = scaled[static_cast<std::size_t>(s)];
    cell[static_cast<std::size_t>(s)] = l;
    scaled[static_cast<std::size_t>(l)] -= 1.0 - scaled[static_cast<std::size_t>(s)];
    if (scaled[static_cast<std::size_t>(l)] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (CellId i : large) prob[static_cast<std::size_t>(i)] = 1.0;
  for (CellId i : small) prob[static_cast<std::size_t>(i)] = 1.0;
}

CellId draw_alias(const std::vector<double>& prob, const std::vector<CellId>& cell, Philox& rng) {
  const auto k = prob.size();
  auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(k));
  if (j >= k) j = k - 1;
  return rng.uniform() < prob[j] ? static_cast<CellId>(j) : cell[j];
}

CellId draw_cdf(const double* cdf, Eigen::Index k, Philox& rng) {
  const double u = rng.uniform();
  const double* it = std::upper_bound(cdf, cdf + k, u);
  Eigen::Index j = it - cdf;
  if (j >= k) j = k - 1;
  return static_cast<CellId>(j);
}

// Primitivity of the support pattern. Boolean repeated squaring; a primitive
// S-state pattern has a positive power at or below the Wielandt bound
// S^2 - 2S + 2, so it must show up among the squarings checked here.
bool support_is_primitive(const Eigen::MatrixXd& p) {
  const Eigen::Index s = p.rows();
  const std::size_t words = static_cast<std::size_t>((s + 63) / 64);
  using Row = std::vector<std::uint64_t>;
  std::vector<Row> a(static_cast<std::size_t>(s), Row(words, 0));
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = 0; j < s; ++j) {
      if (p(i, j) > 0.0) a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j >> 6)] |= 1ull
                                                                                           << (j & 63);
    }
  }
  auto all_ones = [&](const std::vector<Row>& m) {
    for (Eigen::Index i = 0; i < s; ++i) {
      const Row& r = m[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < s; ++j) {
        if (!(r[static_cast<std::size_t>(j >> 6)] >> (j & 63) & 1ull)) return false;
      }
    }
    return true;
  };
  auto square = [&](const std::vector<Row>& m) {
    std::vector<Row> out(static_cast<std::size_t>(s), Row(words, 0));
    for (Eigen::Index i = 0; i < s; ++i) {
      Row& oi = out[static_cast<std::size_t>(i)];
      const Row& mi = m[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < s; ++j) {
        if (mi[static_cast<std::size_t>(j >> 6)] >> (j & 63) & 1ull) {
          const Row& mj = m[static_cast<std::size_t>(j)];
          for (std::size_t w = 0; w < words; ++w) oi[w] |= mj[w];
        }
      }
    }
    return out;
  };
  // Power doubling: if A^e > 0 then A^m > 0 for all m >= e (columns are all
  // nonzero whenever positivity is reachable), so checking powers 2^j up to
  // twice the Wielandt bound is exhaustive.
  const double bound = 2.0 * (static_cast<double>(s) * s - 2.0 * s + 2.0);
  double pow2 = 1.0;
  for (;;) {
    if (all_ones(a)) return true;
    if (pow2 > bound) return false;
    a = square(a);
    pow2 *= 2.0;
  }
}

}  // namespace

CellId GibbsMarkovModel::sample_start(Philox& rng) const {
  if (kind == ModelKind::finite_markov) return draw_cdf(start_cdf.data(), states, rng);
  return draw_alias(alias_prob, alias_cell, rng);
}

CellId GibbsMarkovModel::sample_step(CellId from, Philox& rng) const {
  if (kind == ModelKind::finite_markov) {
    return draw_cdf(row_cdf.row(from).data(), states, rng);
  }
  if (stickiness > 0.0 && rng.uniform() < stickiness) return from;
  return draw_alias(alias_prob, alias_cell, rng);
}

Eigen::Index CylinderSet::find(std::uint64_t key) const {
  auto it = std::lower_bound(packed.begin(), packed.end(), key);
  if (it == packed.end() || *it != key) return -1;
  return it - packed.begin();
}

void CylinderSet::unpack(Eigen::Index i, CellId* out) const {
  std::uint64_t key = packed[static_cast<std::size_t>(i)];
  for (int d = depth - 1; d >= 0; --d) {
    out[d] = static_cast<CellId>(key % static_cast<std::uint64_t>(states));
    key /= static_cast<std::uint64_t>(states);
  }
}

GibbsMarkovModel build_finite_markov(const Eigen::MatrixXd& transition, double gamma) {
  const Eigen::Index s = transition.rows();
  if (s < 1 || transition.cols() != s) fail(errc::bad_argument, "transition matrix must be square");
  if (!(gamma > 0.0 && gamma < 1.0)) fail(errc::bad_argument, "gamma must lie in (0,1)");
  for (Eigen::Index i = 0; i < s; ++i) {
    if (transition.row(i).minCoeff() < -kStochasticTol) {
      fail(errc::not_stochastic, "negative entry in row " + cell_str(i));
    }
    const double rs = transition.row(i).sum();
    if (std::abs(rs - 1.0) > kStochasticTol) {
      fail(errc::not_stochastic, "row " + cell_str(i) + " sums to " + std::to_string(rs));
    }
  }
  if (!support_is_primitive(transition)) {
    fail(errc::not_mixing, "support pattern is not primitive");
  }

  GibbsMarkovModel m;
  m.kind = ModelKind::finite_markov;
  m.states = s;
  m.transition = transition.cwiseMax(0.0);
  m.gamma = gamma;

  // Stationary row vector: pi P = pi with sum 1, solved as a square system
  // with the normalization replacing one redundant equation.
  Eigen::MatrixXd a = transition.transpose() - Eigen::MatrixXd::Identity(s, s);
  a.row(s - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(s);
  b[s - 1] = 1.0;
  m.stationary = a.fullPivLu().solve(b);
  if (m.stationary.minCoeff() <= 0.0) fail(errc::not_mixing, "stationary vector not positive");
  m.weights = m.stationary;

  double c = 1.0;
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = 0; j < s; ++j) {
      if (m.transition(i, j) <= 0.0) continue;
      const double ratio = m.transition(i, j) / m.stationary[j];
      c = std::max(c, std::max(ratio, 1.0 / ratio));
    }
  }
  m.distortion = c;

  m.row_cdf.resize(s, s);
  for (Eigen::Index i = 0; i < s; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < s; ++j) {
      acc += m.transition(i, j);
      m.row_cdf(i, j) = acc;
    }
    m.row_cdf(i, s - 1) = 1.0;
  }
  m.start_cdf.resize(s);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < s; ++i) {
    acc += m.stationary[i];
    m.start_cdf[i] = acc;
  }
  m.start_cdf[s - 1] = 1.0;
  return m;
}

GibbsMarkovModel build_countable_bernoulli(const WeightSpec& weights, double truncation_tol,
                                           double gamma) {
  if (!(truncation_tol > 0.0 && truncation_tol < 1.0)) {
    fail(errc::bad_argument, "truncation tolerance must lie in (0,1)");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) fail(errc::bad_argument, "gamma must lie in (0,1)");

  GibbsMarkovModel m;
  m.kind = ModelKind::countable_bernoulli;
  m.gamma = gamma;
  m.weight_spec = weights;
  m.truncation_tol = truncation_tol;

  Eigen::Index k = 0;
  if (weights.form == WeightSpec::Form::geometric) {
    const double r = weights.param;
    if (!(r > 0.0 && r < 1.0)) fail(errc::not_summable, "geometric ratio outside (0,1)");
    // Tail beyond k cells is exactly r^k.
    k = static_cast<Eigen::Index>(std::ceil(std::log(truncation_tol) / std::log(r)));
    k = std::max<Eigen::Index>(k, 2);
    if (k > kMaxCells) fail(errc::tol_too_tight, "geometric truncation needs " + cell_str(k) + " cells");
    m.weights.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) m.weights[i] = (1.0 - r) * std::pow(r, double(i));
    m.discarded_mass = std::pow(r, double(k));
  } else {
    const double q = weights.param;
    if (!(q > 0.0)) fail(errc::not_summable, "polynomial weights need q > 0");
    const double c = 1.0 / std::riemann_zeta(1.0 + q);
    // Integral bound: tail beyond k cells is at most C k^{-q} / q.
    const double kd = std::pow(c / (q * truncation_tol), 1.0 / q);
    if (kd > static_cast<double>(kMaxCells)) {
      fail(errc::tol_too_tight, "polynomial truncation needs about " + cell_str(static_cast<Eigen::Index>(kd)) + " cells");
    }
    k = std::max<Eigen::Index>(static_cast<Eigen::Index>(std::ceil(kd)), 2);
    m.weights.resize(k);
    double partial = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      m.weights[i] = c * std::pow(double(i) + 1.0, -(1.0 + q));
      partial += m.weights[i];
    }
    m.discarded_mass = std::max(0.0, 1.0 - partial);
  }
  m.states = k;
  m.truncation_index = k;
  m.weights /= m.weights.sum();
  m.stationary = m.weights;
  m.distortion = 1.0;
  build_alias(m.weights, m.alias_prob, m.alias_cell);
  return m;
}

GibbsMarkovModel build_sticky_bernoulli(const WeightSpec& weights, double stickiness,
                                        double truncation_tol, double gamma) {
  if (!(stickiness >= 0.0 && stickiness < 1.0)) {
    fail(errc::bad_argument, "stickiness must lie in [0,1)");
  }
  GibbsMarkovModel m = build_countable_bernoulli(weights, truncation_tol, gamma);
  m.stickiness = stickiness;
  // g on the pair (a,b) is m(a)(theta [a==b] + (1-theta) m(b)) / m(b); the
  // diagonal dominates the distortion ratio.
  const double wmin = m.weights.minCoeff();
  m.distortion = std::max(stickiness / wmin + (1.0 - stickiness), 1.0 / (1.0 - stickiness));
  return m;
}

std::pair<GibbsMarkovModel, Observable> build_induced_doubling(double a, double truncation_tol) {
  if (!(a > 0.0 && a < 1.0)) fail(errc::bad_argument, "exponent a must lie in (0,1)");
  if (!(truncation_tol > 0.0 && truncation_tol < 1.0)) {
    fail(errc::bad_argument, "truncation tolerance must lie in (0,1)");
  }
  GibbsMarkovModel m;
  m.kind = ModelKind::induced_doubling;
  m.gamma = 0.5;  // Euclidean expansion factor of the induced map
  m.truncation_tol = truncation_tol;
  m.induced_a = a;
  // Return-time-k cell has measure 2^{-k}; tail beyond K cells is 2^{-K}.
  const Eigen::Index k =
      std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::ceil(-std::log2(truncation_tol))));
  if (k > 60) fail(errc::tol_too_tight, "induced truncation needs " + cell_str(k) + " cells");
  m.states = k;
  m.truncation_index = k;
  m.weights.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) m.weights[i] = std::pow(0.5, double(i) + 1.0);
  m.discarded_mass = std::pow(0.5, double(k));
  m.weights /= m.weights.sum();
  m.stationary = m.weights;
  m.distortion = 1.0;
  build_alias(m.weights, m.alias_prob, m.alias_cell);

  Observable f;
  f.kind = ObsKind::induced_power;
  f.depth = 1;
  f.exponent = a;
  f.eta = 1.0;
  return {std::move(m), std::move(f)};
}

CylinderSet enumerate_cylinders(const GibbsMarkovModel& model, int depth) {
  if (depth < 1) fail(errc::bad_argument, "cylinder depth must be >= 1");
  const Eigen::Index s = model.states;
  if (std::pow(static_cast<double>(s), depth) > 9e18) {
    fail(errc::observable_not_representable, "packed cylinder ids overflow");
  }
  CylinderSet cs;
  cs.depth = depth;
  cs.states = s;

  if (depth == 1) {
    cs.packed.resize(static_cast<std::size_t>(s));
    for (Eigen::Index i = 0; i < s; ++i) cs.packed[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i);
    cs.mass = model.stationary;
    return cs;
  }

  // Depth-first over admissible words; lexicographic order makes packed keys
  // come out sorted.
  std::vector<double> mass;
  const bool markov = model.kind == ModelKind::finite_markov;
  const double theta = model.stickiness;
  auto extend = [&](auto&& self, CellId last, std::uint64_t key, double w, int left) -> void {
    if (left == 0) {
      if (static_cast<Eigen::Index>(cs.packed.size()) >= kMaxCylinders) {
        fail(errc::observable_not_representable, "too many admissible cylinders");
      }
      cs.packed.push_back(key);
      mass.push_back(w);
      return;
    }
    for (CellId b = 0; b < s; ++b) {
      const double step = markov ? model.transition(last, b)
                                 : (1.0 - theta) * model.weights[b] + (b == last ? theta : 0.0);
      if (step <= 0.0) continue;
      self(self, b, key * static_cast<std::uint64_t>(s) + static_cast<std::uint64_t>(b), w * step,
           left - 1);
    }
  };
  for (CellId a0 = 0; a0 < s; ++a0) {
    extend(extend, a0, static_cast<std::uint64_t>(a0), model.stationary[a0], depth - 1);
  }
  cs.mass = Eigen::Map<Eigen::VectorXd>(mass.data(), static_cast<Eigen::Index>(mass.size()));
  return cs;
}

Trajectory sample_trajectory(const GibbsMarkovModel& model, Eigen::Index n, std::uint64_t seed,
                             std::uint64_t stream_id) {
  if (n < 1) fail(errc::bad_argument, "trajectory length must be >= 1");
  Trajectory t;
  t.seed = seed;
  t.stream_id = stream_id;
  t.symbols.resize(static_cast<std::size_t>(n));
  const bool pts = model.kind == ModelKind::induced_doubling;
  if (pts) t.points.resize(static_cast<std::size_t>(n));
  Philox rng(seed, stream_id);
  CellId cur = model.sample_start(rng);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0) cur = model.sample_step(cur, rng);
    t.symbols[static_cast<std::size_t>(i)] = cur;
    if (pts) {
      const double lo = 0.5 + std::pow(0.5, double(cur) + 2.0);
      const double hi = 0.5 + std::pow(0.5, double(cur) + 1.0);
      t.points[static_cast<std::size_t>(i)] = lo + rng.uniform() * (hi - lo);
    }
  }
  return t;
}

double induced_value(double a, CellId cell, double y) {
  // Return time is cell+1; orbit under doubling stays below 1/2 after the
  // first step, so x_{j+1} = 2 x_j with x_1 = 2y - 1.
  const int k = cell + 1;
  double v = std::pow(y, -a);
  double x = 2.0 * y - 1.0;
  for (int j = 1; j < k; ++j) {
    v += std::pow(x, -a);
    x *= 2.0;
  }
  return v;
}

double induced_lipschitz(double a, CellId cell) {
  // |f'| is maximal at the left edge y0 = 1/2 + 2^{-k-1}, where x_j = 2^{j-1-k}.
  const int k = cell + 1;
  const double y0 = 0.5 + std::pow(0.5, double(k) + 1.0);
  double d = a * std::pow(y0, -a - 1.0);
  for (int j = 1; j < k; ++j) {
    const double xj = std::pow(2.0, double(j - 1 - k));
    d += a * std::pow(xj, -a - 1.0) * std::pow(2.0, double(j));
  }
  return d;
}

double induced_mean(const GibbsMarkovModel& model, const Observable& obs) {
  if (model.kind != ModelKind::induced_doubling || obs.kind != ObsKind::induced_power) {
    fail(errc::bad_argument, "induced_mean needs an induced model and observable");
  }
  const double a = obs.exponent;
  auto primitive = [a](double x) { return std::pow(x, 1.0 - a) / (1.0 - a); };
  double mean = 0.0;
  for (Eigen::Index c = 0; c < model.states; ++c) {
    const int k = static_cast<int>(c) + 1;
    const double lo = 0.5 + std::pow(0.5, double(k) + 1.0);
    const double hi = 0.5 + std::pow(0.5, double(k));
    // Cell integral of f in closed form; each orbit coordinate substitutes
    // to a power-function integral.
    double cell_int = primitive(hi) - primitive(lo);
    for (int j = 1; j < k; ++j) {
      const double xlo = std::pow(2.0, double(j - 1 - k));
      const double xhi = std::pow(2.0, double(j - k));
      cell_int += std::pow(0.5, double(j)) * (primitive(xhi) - primitive(xlo));
    }
    const double cell_mean = cell_int / (hi - lo);
    mean += model.weights[c] * cell_mean;
  }
  return mean;
}

double birkhoff_sum(const GibbsMarkovModel& model, const Observable& obs, const Trajectory& traj) {
  const auto len = static_cast<Eigen::Index>(traj.symbols.size());
  const int d = obs.depth;
  if (len < d) fail(errc::trajectory_too_short, "trajectory shorter than observable depth");

  if (obs.kind == ObsKind::induced_power) {
    double s = 0.0;
    for (std::size_t i = 0; i < traj.symbols.size(); ++i) {
      s += induced_value(obs.exponent, traj.symbols[i], traj.points[i]);
    }
    return s;
  }

  const auto su = static_cast<std::uint64_t>(model.states);
  if (d == 1) {
    double s = 0.0;
    for (CellId a : traj.symbols) s += obs.values[a];
    return s;
  }
  // Rolling packed index over depth-d windows.
  std::uint64_t base = 1;
  for (int i = 1; i < d; ++i) base *= su;
  std::uint64_t key = 0;
  for (int i = 0; i < d; ++i) key = key * su + static_cast<std::uint64_t>(traj.symbols[static_cast<std::size_t>(i)]);
  double s = obs.values[static_cast<Eigen::Index>(key)];
  for (Eigen::Index i = d; i < len; ++i) {
    key = (key % base) * su + static_cast<std::uint64_t>(traj.symbols[static_cast<std::size_t>(i)]);
    s += obs.values[static_cast<Eigen::Index>(key)];
  }
  return s;
}

double regularity_sum(const GibbsMarkovModel& model, const Observable& obs, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) fail(errc::bad_argument, "eta must lie in (0,1]");

  if (obs.kind == ObsKind::induced_power) {
    // Full-alphabet series sum_k 2^{-k} Df_k^eta with Df_k growing like
    // 2^{k(1+a)}; the term ratio tends to 2^{(1+a)eta - 1}, so the series
    // diverges exactly when that exponent is >= 0. Terms are computed in
    // log2 space (Df overflows double near k ~ 700) and the geometric tail
    // is closed off analytically once the ratio has settled.
    const double a = obs.exponent;
    if ((1.0 + a) * eta >= 1.0) return std::numeric_limits<double>::infinity();
    auto log2_lip = [a](int cell) {
      const int k = cell + 1;
      const double y0 = 0.5 + std::pow(0.5, double(k) + 1.0);
      const double l_edge = std::log2(a) - (a + 1.0) * std::log2(y0);
      if (k == 1) return l_edge;
      // Orbit terms are geometric with ratio 2^{-a} below the j = 1 term.
      const double geo = (1.0 - std::pow(2.0, -a * double(k - 1))) / (1.0 - std::pow(2.0, -a));
      const double l_orbit = std::log2(a) + double(k) * (a + 1.0) + 1.0 + std::log2(geo);
      const double hi = std::max(l_edge, l_orbit);
      return hi + std::log2(std::exp2(l_edge - hi) + std::exp2(l_orbit - hi));
    };
    double sum = 0.0;
    double prev = 0.0;
    for (int c = 0; c < 200; ++c) {
      const double term = std::exp2(-double(c) - 1.0 + eta * log2_lip(c));
      sum += term;
      prev = term;
    }
    const double rho = std::exp2((1.0 + a) * eta - 1.0);
    return sum + prev * rho / (1.0 - rho);
  }

  if (obs.depth == 1) return 0.0;  // constant on cells

  const CylinderSet cs = enumerate_cylinders(model, obs.depth);
  const Eigen::Index n = cs.size();
  std::vector<CellId> word(static_cast<std::size_t>(obs.depth));
  double total = 0.0;
  Eigen::Index i = 0;
  while (i < n) {
    cs.unpack(i, word.data());
    const CellId a0 = word[0];
    Eigen::Index j = i;
    while (j < n) {
      cs.unpack(j, word.data());
      if (word[0] != a0) break;
      ++j;
    }
    // Cylinders [i, j) share the first symbol. For each common-prefix length
    // l >= 1, the widest value range within a prefix group divided by gamma^l
    // bounds the pair quotients at that separation; the exact Df is the max
    // over levels because every pair attains its true quotient at its exact
    // common-prefix length.
    double df = 0.0;
    std::vector<CellId> wa(static_cast<std::size_t>(obs.depth)), wb(static_cast<std::size_t>(obs.depth));
    for (int lvl = 1; lvl < obs.depth; ++lvl) {
      Eigen::Index g = i;
      while (g < j) {
        cs.unpack(g, wa.data());
        double lo = obs.values[static_cast<Eigen::Index>(cs.packed[static_cast<std::size_t>(g)])];
        double hi = lo;
        Eigen::Index h = g + 1;
        for (; h < j; ++h) {
          cs.unpack(h, wb.data());
          bool same = true;
          for (int d = 0; d < lvl; ++d) same = same && wa[static_cast<std::size_t>(d)] == wb[static_cast<std::size_t>(d)];
          if (!same) break;
          const double v = obs.values[static_cast<Eigen::Index>(cs.packed[static_cast<std::size_t>(h)])];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        df = std::max(df, (hi - lo) / std::pow(model.gamma, double(lvl)));
        g = h;
      }
    }
    total += model.stationary[a0] * std::pow(df, eta);
    i = j;
  }
  return total;
}

ObservableDistribution observable_distribution(const GibbsMarkovModel& model,
                                               const Observable& obs) {
  ObservableDistribution d;
  if (obs.kind == ObsKind::induced_power) {
    d.sampler_only = true;
    d.induced_a = obs.exponent;
    d.alias_prob = model.alias_prob;
    d.alias_cell = model.alias_cell;
    d.mean = induced_mean(model, obs);
    return d;
  }

  const CylinderSet cs = enumerate_cylinders(model, obs.depth);
  const Eigen::Index n = cs.size();
  std::vector<std::pair<double, double>> atoms(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    atoms[static_cast<std::size_t>(i)] = {obs.values[static_cast<Eigen::Index>(cs.packed[static_cast<std::size_t>(i)])],
                                          cs.mass[i]};
  }
  std::sort(atoms.begin(), atoms.end());
  d.value.reserve(atoms.size());
  d.mass.reserve(atoms.size());
  for (const auto& [v, m] : atoms) {
    if (!d.value.empty() && v == d.value.back()) {
      d.mass.back() += m;
    } else {
      d.value.push_back(v);
      d.mass.push_back(m);
    }
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < d.value.size(); ++i) mean += d.value[i] * d.mass[i];
  d.mean = mean;
  Eigen::Map<const Eigen::VectorXd> w(d.mass.data(), static_cast<Eigen::Index>(d.mass.size()));
  build_alias(w, d.alias_prob, d.alias_cell);
  return d;
}

double ObservableDistribution::sample(Philox& rng) const {
  const CellId c = draw_alias(alias_prob, alias_cell, rng);
  if (!sampler_only) return value[static_cast<std::size_t>(c)];
  const double lo = 0.5 + std::pow(0.5, double(c) + 2.0);
  const double hi = 0.5 + std::pow(0.5, double(c) + 1.0);
  const double y = lo + rng.uniform() * (hi - lo);
  return induced_value(induced_a, c, y);
}

}  // namespace gml
