#include "gml/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "gml/spectral.hpp"

namespace gml {

namespace {

using cd = std::complex<double>;

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) {
    h ^= (x >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t double_bits(double x) {
  std::uint64_t u;
  static_assert(sizeof(u) == sizeof(x));
  std::memcpy(&u, &x, sizeof(u));
  return u;
}

struct PlanNorming {
  double a = 0.0;
  double b = 1.0;
};

PlanNorming norming_at(const SimulationPlan& plan, long long n) {
  PlanNorming out;
  if (plan.a_of_n) out.a = plan.a_of_n(n);
  if (plan.b_of_n) out.b = plan.b_of_n(n);
  if (!(out.b != 0.0) || !std::isfinite(out.b) || !std::isfinite(out.a)) {
    fail(errc::bad_argument, "norming must be finite with b != 0");
  }
  return out;
}

void check_plan(const SimulationPlan& plan) {
  if (plan.samples < 100) fail(errc::bad_argument, "need at least 100 samples per horizon");
  if (plan.n_list.empty()) fail(errc::bad_argument, "horizon list is empty");
  for (std::size_t i = 0; i < plan.n_list.size(); ++i) {
    if (plan.n_list[i] < 1) fail(errc::bad_argument, "horizons must be >= 1");
    if (i > 0 && plan.n_list[i] <= plan.n_list[i - 1]) {
      fail(errc::bad_argument, "horizon list must be strictly increasing");
    }
  }
}

std::uint64_t plan_hash(const SimulationPlan& plan) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, plan.seed);
  h = fnv1a(h, static_cast<std::uint64_t>(plan.samples));
  for (long long n : plan.n_list) {
    const PlanNorming nm = norming_at(plan, n);
    h = fnv1a(h, static_cast<std::uint64_t>(n));
    h = fnv1a(h, double_bits(nm.a));
    h = fnv1a(h, double_bits(nm.b));
  }
  return h;
}

// One fused trajectory: n Birkhoff terms without materializing symbols,
// drawing in exactly the order of sample_trajectory.
double birkhoff_draw(const GibbsMarkovModel& model, const Observable& obs, long long n,
                     Philox& rng) {
  if (obs.kind == ObsKind::induced_power) {
    double s = 0.0;
    CellId cur = model.sample_start(rng);
    for (long long i = 0; i < n; ++i) {
      if (i > 0) cur = model.sample_step(cur, rng);
      const double lo = 0.5 + std::pow(0.5, double(cur) + 2.0);
      const double hi = 0.5 + std::pow(0.5, double(cur) + 1.0);
      const double y = lo + rng.uniform() * (hi - lo);
      s += induced_value(obs.exponent, cur, y);
    }
    return s;
  }
  const int d = obs.depth;
  CellId cur = model.sample_start(rng);
  if (d == 1) {
    double s = obs.values[cur];
    for (long long i = 1; i < n; ++i) {
      cur = model.sample_step(cur, rng);
      s += obs.values[cur];
    }
    return s;
  }
  const auto su = static_cast<std::uint64_t>(model.states);
  std::uint64_t base = 1;
  for (int i = 1; i < d; ++i) base *= su;
  std::uint64_t key = static_cast<std::uint64_t>(cur);
  for (int i = 1; i < d; ++i) {
    cur = model.sample_step(cur, rng);
    key = key * su + static_cast<std::uint64_t>(cur);
  }
  double s = obs.values[static_cast<Eigen::Index>(key)];
  for (long long i = 1; i < n; ++i) {
    cur = model.sample_step(cur, rng);
    key = (key % base) * su + static_cast<std::uint64_t>(cur);
    s += obs.values[static_cast<Eigen::Index>(key)];
  }
  return s;
}

constexpr std::uint64_t kIidNamespace = 1ULL << 63;

std::uint64_t stream_id(std::size_t n_index, long long sample) {
  return (static_cast<std::uint64_t>(n_index + 1) << 32) ^ static_cast<std::uint64_t>(sample);
}

template <typename Draw>
std::map<long long, EmpiricalDistribution> run_generic(const SimulationPlan& plan,
                                                       std::uint64_t ns, Draw&& draw) {
  check_plan(plan);
  const std::uint64_t hash = plan_hash(plan);
  std::map<long long, EmpiricalDistribution> out;
  for (std::size_t ni = 0; ni < plan.n_list.size(); ++ni) {
    const long long n = plan.n_list[ni];
    const PlanNorming nm = norming_at(plan, n);
    EmpiricalDistribution dist;
    dist.n = n;
    dist.samples = plan.samples;
    dist.seed = plan.seed;
    dist.plan_hash = hash;
    dist.values.resize(static_cast<std::size_t>(plan.samples));
    parallel_for(plan.samples, plan.workers, [&](long long s) {
      Philox rng(plan.seed, ns | stream_id(ni, s));
      dist.values[static_cast<std::size_t>(s)] = (draw(n, rng) - nm.a) / nm.b;
    });
    std::sort(dist.values.begin(), dist.values.end());
    out.emplace(n, std::move(dist));
  }
  return out;
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y, double* band) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxy / sxx;
  if (band) {
    *band = 0.0;
    if (x.size() > 2) {
      double sse = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - my - slope * (x[i] - mx);
        sse += e * e;
      }
      *band = 1.96 * std::sqrt(sse / (n - 2.0) / sxx);
    }
  }
  return slope;
}

// Log-log slope over the top half of the positive entries; empty means the
// sequence vanished, which counts as bounded.
bool flat_or_falling(const std::vector<double>& x, const std::vector<double>& g) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(g[i]));
    }
  }
  if (lx.size() < 2) return true;
  const std::size_t half = lx.size() / 2;
  std::vector<double> tx(lx.begin() + static_cast<std::ptrdiff_t>(half), lx.end());
  std::vector<double> ty(ly.begin() + static_cast<std::ptrdiff_t>(half), ly.end());
  if (tx.size() < 2) return true;
  return ols_slope(tx, ty, nullptr) <= 0.05;
}

}  // namespace

std::map<long long, EmpiricalDistribution> run_plan(const GibbsMarkovModel& model,
                                                    const Observable& obs,
                                                    const SimulationPlan& plan) {
  return run_generic(plan, 0, [&](long long n, Philox& rng) {
    return birkhoff_draw(model, obs, n, rng);
  });
}

std::map<long long, EmpiricalDistribution> run_iid_plan(const GibbsMarkovModel& model,
                                                        const Observable& obs,
                                                        const SimulationPlan& plan) {
  const ObservableDistribution dist = observable_distribution(model, obs);
  return run_generic(plan, kIidNamespace, [&](long long n, Philox& rng) {
    double s = 0.0;
    for (long long k = 0; k < n; ++k) s += dist.sample(rng);
    return s;
  });
}

double ks_distance(const std::vector<double>& sorted_sample,
                   const std::function<double(double)>& cdf) {
  if (sorted_sample.empty()) fail(errc::bad_argument, "empty sample");
  const double n = static_cast<double>(sorted_sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted_sample.size(); ++i) {
    const double f = cdf(sorted_sample[i]);
    d = std::max(d, (double(i) + 1.0) / n - f);
    d = std::max(d, f - double(i) / n);
  }
  return d;
}

double ks_two_sample(const std::vector<double>& sorted_a, const std::vector<double>& sorted_b) {
  if (sorted_a.empty() || sorted_b.empty()) fail(errc::bad_argument, "empty sample");
  const double na = static_cast<double>(sorted_a.size());
  const double nb = static_cast<double>(sorted_b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sorted_a.size() && j < sorted_b.size()) {
    const double v = std::min(sorted_a[i], sorted_b[j]);
    while (i < sorted_a.size() && sorted_a[i] <= v) ++i;
    while (j < sorted_b.size() && sorted_b[j] <= v) ++j;
    d = std::max(d, std::abs(double(i) / na - double(j) / nb));
  }
  return d;
}

std::vector<cd> empirical_cf(const std::vector<double>& sample, const std::vector<double>& t_grid) {
  if (sample.empty()) fail(errc::bad_argument, "empty sample");
  std::vector<cd> out(t_grid.size());
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    double re = 0.0, im = 0.0;
    for (double x : sample) {
      re += std::cos(t_grid[k] * x);
      im += std::sin(t_grid[k] * x);
    }
    out[k] = cd(re, im) / static_cast<double>(sample.size());
  }
  return out;
}

EpsilonTable epsilon_n_estimate(const GibbsMarkovModel& model, const Observable& obs,
                                const std::vector<long long>& n_list,
                                const std::vector<double>& t_grid, long long samples,
                                std::uint64_t seed, int workers) {
  SimulationPlan plan;
  plan.n_list = n_list;
  plan.samples = samples;
  plan.seed = seed;
  plan.workers = workers;
  const auto runs = run_plan(model, obs, plan);
  const auto spectrum = spectral_grid(model, obs, t_grid, workers);

  EpsilonTable table;
  table.n_list = n_list;
  table.t_grid = t_grid;
  table.noise_floor = 2.0 / std::sqrt(static_cast<double>(samples));
  for (long long n : n_list) {
    const auto& dist = runs.at(n);
    auto row_ecf = empirical_cf(dist.values, t_grid);
    std::vector<cd> row_pred(t_grid.size());
    std::vector<double> row_eps(t_grid.size());
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      row_pred[k] = spectrum[k].mu * std::pow(spectrum[k].lambda, static_cast<double>(n));
      row_eps[k] = std::abs(row_ecf[k] - row_pred[k]);
    }
    table.ecf.push_back(std::move(row_ecf));
    table.pred.push_back(std::move(row_pred));
    table.eps.push_back(std::move(row_eps));
  }
  return table;
}

BerryEsseenCurve berry_esseen_curve(const GibbsMarkovModel& model, const Observable& obs,
                                    double sigma2, const std::vector<long long>& n_list,
                                    long long samples, std::uint64_t seed, int workers) {
  if (!(sigma2 > 1e-12)) fail(errc::sigma_zero, "Berry-Esseen rate needs sigma^2 > 0");
  const double mean = observable_distribution(model, obs).mean;

  SimulationPlan plan;
  plan.n_list = n_list;
  plan.samples = samples;
  plan.seed = seed;
  plan.workers = workers;
  plan.a_of_n = [mean](long long n) { return mean * static_cast<double>(n); };
  plan.b_of_n = [](long long n) { return std::sqrt(static_cast<double>(n)); };
  const auto runs = run_plan(model, obs, plan);

  const double sd = std::sqrt(sigma2);
  auto normal_cdf = [sd](double x) { return 0.5 * std::erfc(-x / (sd * std::sqrt(2.0))); };

  BerryEsseenCurve curve;
  curve.n_list = n_list;
  curve.sigma2 = sigma2;
  curve.noise_floor = 1.63 / std::sqrt(static_cast<double>(samples));
  for (long long n : n_list) curve.delta_n.push_back(ks_distance(runs.at(n).values, normal_cdf));

  const double cut = 3.0 * 0.87 / std::sqrt(static_cast<double>(samples));
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (curve.delta_n[i] <= cut) break;
    lx.push_back(std::log(static_cast<double>(n_list[i])));
    ly.push_back(std::log(curve.delta_n[i]));
  }
  curve.fit_points = static_cast<int>(lx.size());
  if (lx.size() >= 2) {
    curve.exponent = -ols_slope(lx, ly, &curve.band);
  } else {
    curve.exponent = std::numeric_limits<double>::quiet_NaN();
    curve.band = std::numeric_limits<double>::quiet_NaN();
  }
  return curve;
}

TailReport tail_condition_check(const GibbsMarkovModel& model, const Observable& obs, double delta,
                                const std::vector<double>& x_grid) {
  if (!(delta > 0.0 && delta <= 1.0)) fail(errc::bad_argument, "delta must lie in (0,1]");
  const ObservableDistribution dist = observable_distribution(model, obs);
  if (dist.sampler_only) {
    fail(errc::observable_not_representable, "tail check needs an atomic distribution");
  }
  TailReport rep;
  rep.delta = delta;
  rep.x_grid = x_grid;
  for (double x : x_grid) {
    if (!(x > 0.0)) fail(errc::bad_argument, "tail grid must be positive");
    double second = 0.0, third = 0.0;
    for (std::size_t i = 0; i < dist.value.size(); ++i) {
      const double v = dist.value[i];
      if (std::abs(v) > x) {
        second += dist.mass[i] * v * v;
      } else {
        third += dist.mass[i] * v * v * v;
      }
    }
    rep.weighted_tail.push_back(std::pow(x, delta) * second);
    if (delta == 1.0) rep.cubic.push_back(third);
  }
  rep.bounded = flat_or_falling(x_grid, rep.weighted_tail);
  if (delta == 1.0) {
    std::vector<double> abs_cubic;
    for (double c : rep.cubic) abs_cubic.push_back(std::abs(c));
    rep.cubic_bounded = flat_or_falling(x_grid, abs_cubic);
  }
  return rep;
}

CachedCdf::CachedCdf(std::function<double(double)> exact, double lo, double hi, int nodes)
    : exact_(std::move(exact)) {
  if (!(lo < hi) || nodes < 2) fail(errc::bad_argument, "cache needs lo < hi and >= 2 nodes");
  u_lo_ = std::asinh(lo);
  u_hi_ = std::asinh(hi);
  du_ = (u_hi_ - u_lo_) / static_cast<double>(nodes - 1);
  table_.resize(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) {
    table_[static_cast<std::size_t>(i)] = exact_(std::sinh(u_lo_ + du_ * i));
  }
}

double CachedCdf::operator()(double x) const {
  const double u = std::asinh(x);
  if (u <= u_lo_ || u >= u_hi_) return exact_(x);
  const double pos = (u - u_lo_) / du_;
  const auto i = static_cast<std::size_t>(pos);
  const double w = pos - static_cast<double>(i);
  return table_[i] * (1.0 - w) + table_[i + 1] * w;
}

}  // namespace gml
