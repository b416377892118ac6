#include "gml/domains.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace gml {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Gauss-Legendre 7 on [-1, 1].
constexpr double kGlNode[7] = {-0.9491079123427585, -0.7415311855993945, -0.4058451513773972,
                               0.0,                 0.4058451513773972,  0.7415311855993945,
                               0.9491079123427585};
constexpr double kGlWeight[7] = {0.1294849661688697, 0.2797053914892766, 0.3818300505051189,
                                 0.4179591836734694, 0.3818300505051189, 0.2797053914892766,
                                 0.1294849661688697};

template <class F>
double gl7(const F& f, double a, double b) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double s = 0.0;
  for (int k = 0; k < 7; ++k) s += kGlWeight[k] * f(mid + half * kGlNode[k]);
  return s * half;
}

std::vector<double> geom_grid(double lo, double hi, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < n; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(llo + (lhi - llo) * double(i) / double(n - 1));
  }
  return g;
}

// Distinct |value| knots with per-knot mass and P(|Z| >= knot) including the
// truncation remainder; the backbone of tail evaluation, smoothing, norming.
struct AbsKnots {
  std::vector<double> v;     // distinct |value|, ascending
  std::vector<double> m;     // mass at the knot
  std::vector<double> tail;  // P(|Z| >= v[i]) + remainder

  double beyond(double x) const {  // P(|Z| > x)
    const auto it = std::upper_bound(v.begin(), v.end(), x);
    if (it == v.end()) return tail.back() - m.back();
    return tail[static_cast<std::size_t>(it - v.begin())];
  }
};

AbsKnots abs_knots(const TailSpec& t) {
  std::vector<std::pair<double, double>> a;
  a.reserve(t.value.size());
  for (std::size_t i = 0; i < t.value.size(); ++i) a.emplace_back(std::abs(t.value[i]), t.mass[i]);
  std::sort(a.begin(), a.end());
  AbsKnots k;
  for (const auto& [v, m] : a) {
    if (!k.v.empty() && v == k.v.back()) {
      k.m.back() += m;
    } else {
      k.v.push_back(v);
      k.m.push_back(m);
    }
  }
  k.tail.resize(k.v.size());
  double acc = t.tail_remainder;
  for (std::size_t i = k.v.size(); i-- > 0;) {
    acc += k.m[i];
    k.tail[i] = acc;
  }
  return k;
}

// Log-log interpolation of a positive monotone function through knots;
// constant extension outside. Makes step tails continuous so norming roots
// solve to full tolerance.
std::function<double(double)> loglog_interp(const std::vector<double>& xs,
                                            const std::vector<double>& ys, double below) {
  auto lx = std::make_shared<std::vector<double>>();
  auto ly = std::make_shared<std::vector<double>>();
  lx->reserve(xs.size());
  ly->reserve(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] <= 0.0 || ys[i] <= 0.0) continue;  // zero-valued atoms carry no log coordinate
    lx->push_back(std::log(xs[i]));
    ly->push_back(std::log(ys[i]));
  }
  if (lx->empty()) fail(errc::bad_argument, "no positive knots to interpolate");
  const double last = std::exp(ly->back());
  const double x0 = std::exp(lx->front());
  return [lx, ly, x0, below, last](double x) {
    if (x <= x0) return below;
    const double l = std::log(x);
    if (l >= lx->back()) return last;
    const auto it = std::upper_bound(lx->begin(), lx->end(), l);
    const std::size_t j = static_cast<std::size_t>(it - lx->begin());
    const double t = (l - (*lx)[j - 1]) / ((*lx)[j] - (*lx)[j - 1]);
    return std::exp((*ly)[j - 1] * (1.0 - t) + (*ly)[j] * t);
  };
}

double atom_mean(const TailSpec& t) {
  double m = 0.0;
  for (std::size_t i = 0; i < t.value.size(); ++i) m += t.value[i] * t.mass[i];
  return m;
}

double atom_second(const TailSpec& t) {
  double m = 0.0;
  for (std::size_t i = 0; i < t.value.size(); ++i) m += t.value[i] * t.value[i] * t.mass[i];
  return m;
}

// Geometric bisection for the norming root g(x) = 0 where g goes from
// positive to negative along increasing x; the bracket is scanned over
// powers of two first.
double solve_norming(const std::function<double(double)>& g) {
  double lo = 0.0, hi = 0.0;
  double prev = 0.0;
  bool have_pos = false;
  for (int k = -60; k <= 400; ++k) {
    const double x = std::pow(2.0, double(k) / 2.0);
    const double v = g(x);
    if (v > 0.0) {
      have_pos = true;
      prev = x;
    } else if (have_pos) {
      lo = prev;
      hi = x;
      break;
    }
  }
  if (hi == 0.0) fail(errc::bad_argument, "norming equation has no bracketed root");
  for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-13; ++it) {
    const double mid = std::sqrt(lo * hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

}  // namespace

const char* variant_name(DomainVariant v) {
  switch (v) {
    case DomainVariant::d1: return "D1";
    case DomainVariant::d2: return "D2";
    case DomainVariant::d3: return "D3";
  }
  return "?";
}

TailSpec TailSpec::from_atoms(const ObservableDistribution& d, double remainder) {
  if (d.sampler_only) fail(errc::bad_argument, "sampler-only distributions carry no atom list");
  TailSpec t;
  t.value = d.value;
  t.mass = d.mass;
  t.tail_remainder = remainder;
  t.mean = d.mean;
  t.has_mean = true;
  return t;
}

TailSpec TailSpec::analytic_power(double p, double c1, double c2,
                                  std::function<double(double)> big_l, double mean) {
  if (!(p > 0.0)) fail(errc::bad_argument, "tail index must be positive");
  if (c1 < 0.0 || c2 < 0.0) fail(errc::bad_argument, "tail weights must be nonnegative");
  TailSpec t;
  t.analytic = true;
  t.p = p;
  t.c1 = c1;
  t.c2 = c2;
  t.big_l = std::move(big_l);
  t.mean = mean;
  t.has_mean = true;
  return t;
}

double TailSpec::two_sided_tail(double x) const {
  if (analytic) return (c1 + c2) * big_l(x) * std::pow(x, -p);
  double s = tail_remainder;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (std::abs(value[i]) > x) s += mass[i];
  }
  return s;
}

double TailSpec::positive_tail(double x) const {
  if (analytic) return c1 * big_l(x) * std::pow(x, -p);
  double maxpos = 0.0, maxneg = 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (value[i] > x) s += mass[i];
    maxpos = std::max(maxpos, value[i]);
    maxneg = std::max(maxneg, -value[i]);
  }
  if (maxpos >= maxneg) s += tail_remainder;
  return s;
}

double truncated_second_moment(const TailSpec& tail, double x) {
  if (!(x > 0.0)) fail(errc::bad_argument, "truncation point must be positive");
  if (!tail.analytic) {
    double s = 0.0;
    for (std::size_t i = 0; i < tail.value.size(); ++i) {
      if (std::abs(tail.value[i]) <= x) s += tail.value[i] * tail.value[i] * tail.mass[i];
    }
    return s;
  }
  if (x <= 1.0) return 0.0;
  // Tail-asymptotic representative: 2 int_1^x u^{1-p} L(u) du on a log grid.
  const double lx = std::log(x);
  const int panels = std::max(1, static_cast<int>(std::ceil(lx * 8.0)));
  double s = 0.0;
  const auto f = [&](double t) { return 2.0 * std::exp((2.0 - tail.p) * t) * tail.big_l(std::exp(t)); };
  for (int i = 0; i < panels; ++i) {
    s += gl7(f, lx * double(i) / panels, lx * double(i + 1) / panels);
  }
  return s;
}

SlowVariationReport slow_variation_diagnostic(const std::function<double(double)>& big_l,
                                              const std::vector<double>& lambdas,
                                              const std::vector<double>& xs, double tol) {
  if (xs.size() < 4) fail(errc::bad_argument, "slow-variation grid too small");
  std::vector<double> dev(xs.size(), 0.0);
  for (double lam : lambdas) {
    if (!(lam > 0.0)) fail(errc::bad_argument, "lambda must be positive");
    for (std::size_t i = 0; i < xs.size(); ++i) {
      dev[i] = std::max(dev[i], std::abs(big_l(lam * xs[i]) / big_l(xs[i]) - 1.0));
    }
  }
  // Trend compares grid halves; the verdict looks at the top quarter, the
  // best finite proxy for the x -> infinity limit.
  const std::size_t half = xs.size() / 2;
  const std::size_t quarter = xs.size() - xs.size() / 4;
  double head = 0.0, tail_mean = 0.0, top_max = 0.0;
  for (std::size_t i = 0; i < half; ++i) head += dev[i];
  for (std::size_t i = half; i < xs.size(); ++i) tail_mean += dev[i];
  for (std::size_t i = quarter; i < xs.size(); ++i) top_max = std::max(top_max, dev[i]);
  head /= double(half);
  tail_mean /= double(xs.size() - half);

  SlowVariationReport r;
  r.tol = tol;
  r.max_deviation = top_max;
  r.decreasing = head == 0.0 || tail_mean < 0.9 * head;
  r.pass = top_max < 0.1 * tol || (top_max < tol && r.decreasing);
  return r;
}

DomainClass classify(const TailSpec& tail) {
  if (tail.analytic) {
    DomainClass c;
    c.mean = tail.mean;
    if (tail.p < 2.0) {
      c.variant = DomainVariant::d3;
      c.p = tail.p;
      const double tot = tail.c1 + tail.c2;
      c.c1 = tail.c1 / tot;
      c.c2 = tail.c2 / tot;
      c.big_l = [l = tail.big_l, tot](double x) { return tot * l(x); };
      c.diagnostics.p_hat = tail.p;
      c.diagnostics.r_squared = 1.0;
      c.diagnostics.note = "analytic spec taken at face value";
      return c;
    }
    if (tail.p == 2.0) {
      c.variant = DomainVariant::d2;
      c.big_l = [spec = tail](double x) { return truncated_second_moment(spec, x); };
      c.diagnostics.note = "p = 2 routed to normal normalization";
      return c;
    }
    if (!tail.has_variance) {
      fail(errc::bad_argument, "analytic spec with p > 2 needs an explicit variance");
    }
    c.variant = DomainVariant::d1;
    c.variance = tail.variance;
    return c;
  }

  if (tail.value.empty()) fail(errc::bad_argument, "empty tail spec");
  if (tail.value.size() == 1) {
    fail(errc::degenerate, "constant observable has no nondegenerate limit");
  }
  const AbsKnots knots = abs_knots(tail);
  const double mean = tail.has_mean ? tail.mean : atom_mean(tail);
  const double variance = atom_second(tail) - mean * mean;
  if (variance <= 0.0) fail(errc::degenerate, "constant observable has no nondegenerate limit");

  const double xhi = knots.v.back();
  DomainClass c;
  c.mean = mean;
  ClassifyDiagnostics& d = c.diagnostics;
  d.grid_lo = xhi / 100.0;
  d.grid_hi = xhi * 0.999;
  const auto grid = geom_grid(d.grid_lo, d.grid_hi, 64);
  std::vector<double> tails(grid.size());
  int distinct = 1;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    tails[i] = knots.beyond(grid[i]);
    if (i > 0 && tails[i] != tails[i - 1]) ++distinct;
  }

  if (distinct < 8) {
    if (tails.front() >= 0.05) {
      // Mass concentrates within two decades of the top: compactly
      // supported, square-integrable.
      c.variant = DomainVariant::d1;
      c.variance = variance;
      d.note = "bounded-range atoms";
      return c;
    }
    fail(errc::not_in_domain, "tail too sparse for a regular-variation fit");
  }

  // Log-log tail regression over the top two decades.
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  const double n = double(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double lx = std::log(grid[i]), ly = std::log(tails[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = std::log(tails[i]) - (slope * std::log(grid[i]) + intercept);
    ss_res += r * r;
  }
  const double ss_tot = syy - sy * sy / n;
  d.p_hat = -slope;
  d.r_squared = 1.0 - ss_res / ss_tot;

  const auto sv_grid = geom_grid(xhi / 100.0, xhi / 2.0, 32);
  const std::vector<double> sv_lambdas = {std::sqrt(2.0), 2.0};

  if (d.p_hat > 2.1) {
    c.variant = DomainVariant::d1;
    c.variance = variance;
    d.note = "tail index above 2";
    return c;
  }

  // Cumulative second moment over the knots; step evaluation by search.
  std::vector<double> l2cum(knots.v.size());
  double l2acc = 0.0;
  for (std::size_t i = 0; i < knots.v.size(); ++i) {
    l2acc += knots.v[i] * knots.v[i] * knots.m[i];
    l2cum[i] = l2acc;
  }
  const auto l2 = [&knots, &l2cum](double x) {
    const auto it = std::upper_bound(knots.v.begin(), knots.v.end(), x);
    if (it == knots.v.begin()) return 0.0;
    return l2cum[static_cast<std::size_t>(it - knots.v.begin()) - 1];
  };

  if (d.p_hat >= 1.9) {
    // Boundary band: decide D1 vs D2 by whether the truncated second moment
    // keeps growing, and require it to grow slowly.
    const double growth = l2(xhi) / l2(xhi / 31.6);
    d.slow_variation = slow_variation_diagnostic(l2, sv_lambdas, sv_grid, 0.2);
    if (growth < 1.05) {
      c.variant = DomainVariant::d1;
      c.variance = variance;
      d.note = "second moment saturates";
      return c;
    }
    if (!d.slow_variation.pass) {
      fail(errc::not_in_domain, "second moment grows but is not slowly varying");
    }
    c.variant = DomainVariant::d2;
    c.big_l = loglog_interp(knots.v, l2cum, l2cum.front());
    d.note = "boundary tail index, unbounded slowly varying second moment";
    return c;
  }

  if (d.r_squared < 0.99) {
    fail(errc::not_in_domain, "tail regression residuals reject regular variation");
  }
  const double p_hat = d.p_hat;
  const auto l_hat = [&knots, p_hat](double x) { return std::pow(x, p_hat) * knots.beyond(x); };
  d.slow_variation = slow_variation_diagnostic(l_hat, sv_lambdas, sv_grid, 0.2);
  if (!d.slow_variation.pass) {
    fail(errc::not_in_domain, "tail constant is not slowly varying");
  }

  double share = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) share += tail.positive_tail(grid[i]) / tails[i];
  share /= double(grid.size());

  c.variant = DomainVariant::d3;
  c.p = p_hat;
  c.c1 = share;
  c.c2 = 1.0 - share;
  auto smooth_t = loglog_interp(knots.v, knots.tail, 1.0);
  c.big_l = [smooth_t, p_hat](double x) { return std::pow(x, p_hat) * smooth_t(x); };
  return c;
}

NormingSequence norming_sequence(const DomainClass& cls) {
  NormingSequence s;
  s.variant = cls.variant;
  s.p = cls.variant == DomainVariant::d3 ? cls.p : 2.0;
  s.big_l = cls.big_l;
  if (cls.variant == DomainVariant::d3) {
    if (std::abs(cls.p - 1.0) < 1e-9) {
      if (std::abs(cls.c1 - cls.c2) > 1e-9) {
        fail(errc::p1_non_integrable, "p = 1 with asymmetric tails has no simple centering");
      }
      s.mean = 0.0;
    } else if (cls.p < 1.0) {
      s.mean = 0.0;
    } else {
      s.mean = cls.mean;
    }
  } else {
    s.mean = cls.mean;
  }
  return s;
}

double NormingSequence::b(double n) const {
  if (!(n >= 1.0)) fail(errc::bad_argument, "n must be >= 1");
  if (variant == DomainVariant::d1) return std::sqrt(n);
  const double pp = p;
  const auto& l = big_l;
  return solve_norming([n, pp, &l](double x) { return n * l(x) - std::pow(x, pp); });
}

StableParams stable_params(const DomainClass& cls) {
  StableParams sp;
  if (cls.variant == DomainVariant::d1) {
    sp.gaussian = true;
    sp.c = cls.variance / 2.0;
    return sp;
  }
  if (cls.variant == DomainVariant::d2) {
    sp.gaussian = true;
    sp.c = 0.5;
    return sp;
  }
  sp.p = cls.p;
  sp.beta = cls.c1 - cls.c2;
  if (std::abs(cls.p - 1.0) < 1e-9) {
    sp.p = 1.0;
    sp.c = kPi / 2.0;
  } else {
    sp.c = std::tgamma(1.0 - cls.p) * std::cos(cls.p * kPi / 2.0);
  }
  return sp;
}

std::complex<double> stable_cf(const StableParams& params, double t) {
  if (t == 0.0) return {1.0, 0.0};
  const double at = std::abs(t);
  if (params.gaussian) return {std::exp(-params.c * at * at), 0.0};
  const double omega =
      params.p == 1.0 ? -(2.0 / kPi) * std::log(at) : std::tan(params.p * kPi / 2.0);
  const double mag = params.c * std::pow(at, params.p);
  const double sgn = t > 0.0 ? 1.0 : -1.0;
  return std::exp(std::complex<double>(-mag, mag * params.beta * sgn * omega));
}

double stable_cdf(const StableParams& params, double x) {
  if (params.gaussian) return 0.5 * std::erfc(-x / (2.0 * std::sqrt(params.c)));
  if (!(params.p > 0.0 && params.p < 2.0)) fail(errc::bad_argument, "stable index out of range");

  // phi decays like exp(-c t^p); beyond c t^p = 34 the remainder is below
  // 1e-14.
  const double t_max = std::pow(34.0 / params.c, 1.0 / params.p);
  if (!(t_max < 1e7)) fail(errc::quadrature_fail, "integration window too wide");
  const auto integrand = [&](double t) {
    const auto v = std::exp(std::complex<double>(0.0, -t * x)) * stable_cf(params, t);
    return v.imag() / t;
  };

  // Panel width keeps the oscillation e^{-itx} well resolved by GL7.
  const double w = std::min(1.0, kPi / (2.0 * (std::abs(x) + 1.0)));
  double total = 0.0;
  for (int j = 59; j >= 0; --j) {
    total += gl7(integrand, w * std::pow(0.5, double(j) + 1.0), w * std::pow(0.5, double(j)));
  }
  const auto panels = static_cast<long>(std::ceil((t_max - w) / w));
  if (panels > 3'000'000) fail(errc::quadrature_fail, "panel budget exceeded");
  const double step = (t_max - w) / double(panels);
  for (long i = 0; i < panels; ++i) {
    total += gl7(integrand, w + step * double(i), w + step * double(i + 1));
  }
  return std::clamp(0.5 - total / kPi, 0.0, 1.0);
}

PhiDiagnostic phi_diagnostic(const TailSpec& tail, const std::vector<double>& t_grid) {
  if (tail.analytic) fail(errc::bad_argument, "phi diagnostic needs an atom spec");
  PhiDiagnostic d;
  d.t = t_grid;
  d.phi.resize(t_grid.size());
  d.ratio.resize(t_grid.size());
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double t = t_grid[i];
    if (!(t > 0.0)) fail(errc::bad_argument, "phi grid must be positive");
    double phi = 0.0;
    for (std::size_t j = 0; j < tail.value.size(); ++j) {
      phi += tail.mass[j] * (1.0 - std::cos(t * tail.value[j]));
    }
    d.phi[i] = phi;
    d.ratio[i] = t * t / phi;
  }
  std::size_t hi = 0, lo = 0;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (t_grid[i] > t_grid[hi]) hi = i;
    if (t_grid[i] < t_grid[lo]) lo = i;
  }
  d.ratio_vanishes = d.ratio[lo] < 0.2 * d.ratio[hi];
  return d;
}

}  // namespace gml
