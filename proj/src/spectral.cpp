#include "gml/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

namespace gml {

namespace {

using cd = std::complex<double>;

constexpr Eigen::Index kDenseCap = 4096;       // largest materialized matrix
constexpr Eigen::Index kDenseEigenCap = 2000;  // full eigendecomposition below this
constexpr double kGapFloor = 1e-6;             // |lambda1| - |lambda2| below this is collapse

double step_prob(const GibbsMarkovModel& m, CellId a, CellId b) {
  if (m.kind == ModelKind::finite_markov) return m.transition(a, b);
  return (1.0 - m.stickiness) * m.weights[b] + (a == b ? m.stickiness : 0.0);
}

// Plain-transpose dot, no conjugation; the left-eigenvector algebra is
// bilinear.
cd tdot(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  return (a.array() * b.array()).sum();
}

struct PowerResult {
  cd lambda{0.0, 0.0};
  Eigen::VectorXcd vec;
  bool converged = false;
};

template <typename MatVec>
PowerResult power_iterate(Eigen::Index dim, const Eigen::VectorXcd& start, MatVec&& mv) {
  PowerResult r;
  Eigen::VectorXcd v = start;
  v /= v.norm();
  for (int it = 0; it < 20000; ++it) {
    Eigen::VectorXcd w = mv(v);
    const cd lam = v.dot(w);  // Rayleigh quotient, v has unit norm
    const double resid = (w - lam * v).cwiseAbs().maxCoeff();
    if (resid <= 1e-13 * (1.0 + std::abs(lam))) {
      r.lambda = lam;
      r.vec = std::move(w);
      if (r.vec.norm() > 0.0) r.vec /= r.vec.norm();
      r.converged = true;
      return r;
    }
    const double nw = w.norm();
    if (!(nw > 0.0)) break;
    v = w / nw;
    r.lambda = lam;
  }
  r.vec = v;
  return r;
}

// Modulus of the dominant eigenvalue of M restricted off the leading spectral
// projection r l^T / (l^T r).
template <typename MatVec>
double deflated_modulus(Eigen::Index dim, cd lambda, const Eigen::VectorXcd& right,
                        const Eigen::VectorXcd& left, MatVec&& mv) {
  const cd lr = tdot(left, right);
  if (std::abs(lr) < 1e-14) fail(errc::gap_collapse, "leading spectral projection is degenerate");
  Eigen::VectorXcd y(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double x = static_cast<double>(i + 1);
    y[i] = cd(std::sin(1.7 * x) + 0.3, std::cos(2.3 * x));
  }
  y -= right * (tdot(left, y) / lr);
  double prev = -1.0;
  for (int it = 0; it < 5000; ++it) {
    Eigen::VectorXcd z = mv(y) - right * (lambda * tdot(left, y) / lr);
    const double ny = y.norm(), nz = z.norm();
    if (!(nz > 1e-300)) return 0.0;
    const double mod = nz / ny;
    if (prev >= 0.0 && std::abs(mod - prev) <= 1e-11 * (1.0 + mod)) return mod;
    prev = mod;
    y = z / nz;
  }
  return prev;
}

Eigen::VectorXd observable_on_basis(const Observable& obs, const CylinderSet& cs) {
  Eigen::VectorXd f(cs.size());
  for (Eigen::Index i = 0; i < cs.size(); ++i) {
    f[i] = obs.values[static_cast<Eigen::Index>(cs.packed[static_cast<std::size_t>(i)])];
  }
  return f;
}

SpectralPoint leading_dense(const TransferMatrix& m) {
  SpectralPoint out;
  out.t = m.t;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(m.entries);
  if (es.info() != Eigen::Success) fail(errc::gap_collapse, "dense eigensolver failed");
  const Eigen::Index dim = m.dim;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(dim));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[b]);
  });
  out.lambda = es.eigenvalues()[idx[0]];
  if (dim > 1) {
    const double second = std::abs(es.eigenvalues()[idx[1]]);
    if (std::abs(out.lambda) - second < kGapFloor) {
      fail(errc::gap_collapse, "top eigenvalue moduli separated by less than 1e-6");
    }
    out.gap = second / std::abs(out.lambda);
  }
  Eigen::VectorXcd r = es.eigenvectors().col(idx[0]);
  const cd mr = tdot(m.mass.cast<cd>(), r);
  if (std::abs(mr) < 1e-14) fail(errc::gap_collapse, "eigenfunction has vanishing mean");
  r /= mr;
  out.xi = r;

  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> esl(m.entries.transpose());
  if (esl.info() != Eigen::Success) fail(errc::gap_collapse, "dense eigensolver failed");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < dim; ++i) {
    if (std::abs(esl.eigenvalues()[i] - out.lambda) < std::abs(esl.eigenvalues()[best] - out.lambda))
      best = i;
  }
  const Eigen::VectorXcd l = esl.eigenvectors().col(best);
  out.mu = l.sum() * tdot(m.mass.cast<cd>(), r) / tdot(l, r);
  return out;
}

SpectralPoint leading_power(const TransferMatrix& m) {
  SpectralPoint out;
  out.t = m.t;
  const Eigen::Index dim = m.dim;
  auto mv = [&m](const Eigen::VectorXcd& u) { return m.apply(u); };
  auto mvt = [&m](const Eigen::VectorXcd& u) { return m.apply_transpose(u); };

  const PowerResult right = power_iterate(dim, Eigen::VectorXcd::Ones(dim), mv);
  if (!right.converged) fail(errc::gap_collapse, "power iteration did not separate the top eigenvalue");
  const PowerResult left = power_iterate(dim, Eigen::VectorXcd::Ones(dim), mvt);
  if (!left.converged || std::abs(left.lambda - right.lambda) > 1e-8 * (1.0 + std::abs(right.lambda))) {
    fail(errc::gap_collapse, "left and right iterations disagree on the top eigenvalue");
  }
  out.lambda = right.lambda;

  const double second = deflated_modulus(dim, right.lambda, right.vec, left.vec, mv);
  if (std::abs(out.lambda) - second < kGapFloor) {
    fail(errc::gap_collapse, "top eigenvalue moduli separated by less than 1e-6");
  }
  out.gap = second / std::abs(out.lambda);

  Eigen::VectorXcd r = right.vec;
  const cd mr = tdot(m.mass.cast<cd>(), r);
  if (std::abs(mr) < 1e-14) fail(errc::gap_collapse, "eigenfunction has vanishing mean");
  r /= mr;
  out.xi = r;
  out.mu = left.vec.sum() * tdot(m.mass.cast<cd>(), r) / tdot(left.vec, r);
  return out;
}

// Partial-sum range of f - E(f) pooled over trajectories, sampled at a tenth
// of the horizon and at the full horizon.
struct RangeProbe {
  double tenth = 0.0;
  double full = 0.0;
};

RangeProbe partial_sum_ranges(const GibbsMarkovModel& model, const Observable& obs, double mean,
                              Eigen::Index windows, int trajectories, std::uint64_t seed) {
  const int depth = obs.depth;
  const Eigen::Index s = model.states;
  std::uint64_t modk = 1;
  for (int d = 1; d < depth; ++d) modk *= static_cast<std::uint64_t>(s);
  double lo10 = 0.0, hi10 = 0.0, lo = 0.0, hi = 0.0;
  const Eigen::Index tenth_mark = std::max<Eigen::Index>(1, windows / 10);
  for (int traj = 0; traj < trajectories; ++traj) {
    Philox rng(seed, static_cast<std::uint64_t>(traj));
    CellId cur = model.sample_start(rng);
    std::uint64_t key = static_cast<std::uint64_t>(cur);
    for (int d = 1; d < depth; ++d) {
      cur = model.sample_step(cur, rng);
      key = key * static_cast<std::uint64_t>(s) + static_cast<std::uint64_t>(cur);
    }
    double sum = 0.0;
    for (Eigen::Index w = 0; w < windows; ++w) {
      if (w > 0) {
        cur = model.sample_step(cur, rng);
        key = (key % modk) * static_cast<std::uint64_t>(s) + static_cast<std::uint64_t>(cur);
      }
      sum += obs.values[static_cast<Eigen::Index>(key)] - mean;
      if (w < tenth_mark) {
        lo10 = std::min(lo10, sum);
        hi10 = std::max(hi10, sum);
      }
      lo = std::min(lo, sum);
      hi = std::max(hi, sum);
    }
  }
  return {hi10 - lo10, hi - lo};
}

}  // namespace

Eigen::VectorXcd TransferMatrix::apply(const Eigen::VectorXcd& u) const {
  if (structured) {
    return (diag_part.array() * u.array()).matrix() +
           Eigen::VectorXcd::Constant(dim, (rank_one.array() * u.array()).sum());
  }
  return entries * u;
}

Eigen::VectorXcd TransferMatrix::apply_transpose(const Eigen::VectorXcd& u) const {
  if (structured) {
    return (diag_part.array() * u.array()).matrix() + rank_one * u.sum();
  }
  return entries.transpose() * u;
}

TransferMatrix transfer_matrix(const GibbsMarkovModel& model, const Observable& obs, double t) {
  if (obs.kind != ObsKind::depth_table) {
    fail(errc::observable_not_representable, "observable has no finite cylinder depth");
  }
  TransferMatrix m;
  m.t = t;
  m.depth = obs.depth;
  const cd it_unit(0.0, t);

  if (model.kind != ModelKind::finite_markov && obs.depth == 1) {
    const Eigen::Index s = model.states;
    m.dim = s;
    m.structured = true;
    m.mass = model.stationary;
    m.f_cyl = obs.values;
    m.diag_part.resize(s);
    m.rank_one.resize(s);
    const double theta = model.stickiness;
    for (Eigen::Index a = 0; a < s; ++a) {
      const cd phase = std::exp(it_unit * obs.values[a]);
      m.diag_part[a] = theta * phase;
      m.rank_one[a] = (1.0 - theta) * model.weights[a] * phase;
    }
    if (s <= 2048) {
      m.entries = Eigen::VectorXcd::Ones(s) * m.rank_one.transpose();
      m.entries.diagonal() += m.diag_part;
    }
    return m;
  }

  const CylinderSet cs = enumerate_cylinders(model, obs.depth);
  if (cs.size() > kDenseCap) {
    fail(errc::bad_argument, "transfer matrix needs " + std::to_string(cs.size()) +
                                 " cylinders, beyond the dense cap");
  }
  const Eigen::Index dim = cs.size();
  const Eigen::Index s = model.states;
  m.dim = dim;
  m.mass = cs.mass;
  m.f_cyl = observable_on_basis(obs, cs);
  m.entries = Eigen::MatrixXcd::Zero(dim, dim);

  if (obs.depth == 1) {
    for (Eigen::Index a = 0; a < s; ++a) {
      const cd coeff = std::exp(it_unit * m.f_cyl[a]) * model.stationary[a];
      for (Eigen::Index b = 0; b < s; ++b) {
        const double p = step_prob(model, static_cast<CellId>(a), static_cast<CellId>(b));
        if (p > 0.0) m.entries(b, a) = coeff * (p / model.stationary[b]);
      }
    }
    return m;
  }

  std::uint64_t modk = 1;
  for (int d = 1; d < obs.depth; ++d) modk *= static_cast<std::uint64_t>(s);
  std::vector<CellId> word(static_cast<std::size_t>(obs.depth));
  for (Eigen::Index j = 0; j < dim; ++j) {
    cs.unpack(j, word.data());
    const double g =
        model.stationary[word[0]] * step_prob(model, word[0], word[1]) / model.stationary[word[1]];
    const cd coeff = g * std::exp(it_unit * m.f_cyl[j]);
    const std::uint64_t base = (cs.packed[static_cast<std::size_t>(j)] % modk) *
                               static_cast<std::uint64_t>(s);
    const CellId last = word[static_cast<std::size_t>(obs.depth - 1)];
    for (Eigen::Index c = 0; c < s; ++c) {
      if (step_prob(model, last, static_cast<CellId>(c)) <= 0.0) continue;
      const Eigen::Index row = cs.find(base + static_cast<std::uint64_t>(c));
      if (row >= 0) m.entries(row, j) = coeff;
    }
  }
  return m;
}

SpectralPoint leading_eigen(const TransferMatrix& matrix) {
  if (matrix.dim == 1) {
    SpectralPoint out;
    out.t = matrix.t;
    out.lambda = matrix.structured ? matrix.diag_part[0] + matrix.rank_one[0] : matrix.entries(0, 0);
    out.mu = 1.0;
    out.xi = Eigen::VectorXcd::Ones(1) / matrix.mass[0];
    out.gap = 0.0;
    return out;
  }
  // Diag + rank-one matrices defeat the QR eigensolver outright (rank-one at
  // stickiness zero); the matrix-free path is exact for them in a few steps.
  if (!matrix.structured && matrix.entries.size() > 0 && matrix.dim < kDenseEigenCap) {
    return leading_dense(matrix);
  }
  return leading_power(matrix);
}

std::vector<SpectralScalars> spectral_grid(const GibbsMarkovModel& model, const Observable& obs,
                                           const std::vector<double>& t_grid, int workers) {
  std::vector<SpectralScalars> out(t_grid.size());
  parallel_for(static_cast<long long>(t_grid.size()), workers, [&](long long i) {
    const auto p = leading_eigen(transfer_matrix(model, obs, t_grid[static_cast<std::size_t>(i)]));
    out[static_cast<std::size_t>(i)] = {p.t, p.lambda, p.mu, p.gap};
  });
  return out;
}

double spectral_truncation_bias(const GibbsMarkovModel& model, const Observable& obs,
                                const std::vector<double>& t_grid, int workers) {
  if (model.kind == ModelKind::finite_markov) return 0.0;
  if (model.kind != ModelKind::countable_bernoulli || obs.kind != ObsKind::depth_table ||
      obs.depth != 1) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double coarse_tol = std::min(0.5, model.truncation_tol * 100.0);
  GibbsMarkovModel coarse =
      model.stickiness > 0.0
          ? build_sticky_bernoulli(model.weight_spec, model.stickiness, coarse_tol, model.gamma)
          : build_countable_bernoulli(model.weight_spec, coarse_tol, model.gamma);
  Observable cobs = obs;
  cobs.values = obs.values.head(coarse.states);
  const auto fine = spectral_grid(model, obs, t_grid, workers);
  const auto rough = spectral_grid(coarse, cobs, t_grid, workers);
  double bias = 0.0;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    bias = std::max(bias, std::abs(fine[i].lambda - rough[i].lambda));
  }
  return bias;
}

double lambda_identity_check(const GibbsMarkovModel& model, const Observable& obs, double t) {
  const TransferMatrix m = transfer_matrix(model, obs, t);
  const SpectralPoint p = leading_eigen(m);
  cd expectation(0.0, 0.0), coupling(0.0, 0.0);
  for (Eigen::Index i = 0; i < m.dim; ++i) {
    const cd phase = std::exp(cd(0.0, t) * m.f_cyl[i]);
    expectation += m.mass[i] * phase;
    coupling += m.mass[i] * (phase - 1.0) * (p.xi[i] - 1.0);
  }
  return std::abs(p.lambda - expectation - coupling);
}

namespace {

Eigen::Index horizon_from_gap(double gap) {
  if (gap <= 1e-14) return 1;
  if (gap >= 1.0 - 1e-9) fail(errc::slow_mixing, "spectral gap too close to 1");
  const double k = std::ceil(std::log(1e-12) / std::log(gap));
  if (k > 1e5) fail(errc::slow_mixing, "gap needs a correlation horizon beyond 1e5");
  return static_cast<Eigen::Index>(k);
}

}  // namespace

GreenKuboResult green_kubo_sigma2(const GibbsMarkovModel& model, const Observable& obs,
                                  Eigen::Index horizon) {
  const TransferMatrix m0 = transfer_matrix(model, obs, 0.0);
  const SpectralPoint p0 = leading_eigen(m0);
  GreenKuboResult r;
  r.gap = p0.gap;
  r.horizon = horizon > 0 ? horizon : horizon_from_gap(p0.gap);

  const double mean = m0.mass.dot(m0.f_cyl);
  const Eigen::VectorXd ftilde = m0.f_cyl.array() - mean;
  const double var = m0.mass.dot(ftilde.cwiseProduct(ftilde).eval());
  double acc = var;
  Eigen::VectorXcd w = ftilde.cast<cd>();
  for (Eigen::Index k = 1; k <= r.horizon; ++k) {
    w = m0.apply(w);
    acc += 2.0 * m0.mass.dot(ftilde.cwiseProduct(w.real()).eval());
  }
  r.sigma2 = acc;
  r.tail_bound = r.gap < 1.0 ? 2.0 * var * std::pow(r.gap, double(r.horizon + 1)) / (1.0 - r.gap)
                             : std::numeric_limits<double>::infinity();
  return r;
}

double sigma2_from_lambda(const GibbsMarkovModel& model, const Observable& obs, double h) {
  if (!(h > 0.0)) fail(errc::bad_argument, "step must be positive");
  auto lam = [&](double t) { return leading_eigen(transfer_matrix(model, obs, t)).lambda; };
  auto second_diff = [&](double step) {
    return (-lam(2.0 * step) + 16.0 * lam(step) - 30.0 * lam(0.0) + 16.0 * lam(-step) -
            lam(-2.0 * step)) /
           (12.0 * step * step);
  };
  const cd coarse = second_diff(h);
  const cd fine = second_diff(h / 2.0);
  if (std::abs(coarse - fine) > 1e-5) {
    fail(errc::step_too_large, "second-derivative stencils disagree beyond 1e-5");
  }
  const cd dd = (16.0 * fine - coarse) / 15.0;
  const TransferMatrix m0 = transfer_matrix(model, obs, 0.0);
  const double mean = m0.mass.dot(m0.f_cyl);
  return -dd.real() - mean * mean;
}

BiasFunction bias_function_u1(const GibbsMarkovModel& model, const Observable& obs,
                              Eigen::Index horizon) {
  const TransferMatrix m0 = transfer_matrix(model, obs, 0.0);
  const SpectralPoint p0 = leading_eigen(m0);
  BiasFunction out;
  out.horizon = horizon > 0 ? horizon : horizon_from_gap(p0.gap);

  const double mean = m0.mass.dot(m0.f_cyl);
  const Eigen::VectorXd ftilde = m0.f_cyl.array() - mean;
  Eigen::VectorXcd w = ftilde.cast<cd>();
  Eigen::VectorXd series = Eigen::VectorXd::Zero(m0.dim);
  for (Eigen::Index k = 0; k <= out.horizon; ++k) {
    w = m0.apply(w);
    series += w.real();
  }
  out.u1 = cd(0.0, 1.0) * series;

  if (m0.entries.size() > 0 && m0.dim < kDenseEigenCap) {
    // (I - T)u = T ftilde has a one-dimensional kernel (constants); pinning
    // the m-integral to zero makes the solve unique.
    Eigen::MatrixXd a(m0.dim + 1, m0.dim);
    a.topRows(m0.dim) = Eigen::MatrixXd::Identity(m0.dim, m0.dim) - m0.entries.real();
    a.row(m0.dim) = m0.mass.transpose();
    Eigen::VectorXd b(m0.dim + 1);
    b.head(m0.dim) = (m0.entries.real() * ftilde);
    b[m0.dim] = 0.0;
    const Eigen::VectorXd solved = a.colPivHouseholderQr().solve(b);
    out.crosscheck_residual = (series - solved).cwiseAbs().maxCoeff();
  }
  return out;
}

ExpansionFit expansion_fit(const GibbsMarkovModel& model, const Observable& obs, double p_hint,
                           const std::vector<double>& t_grid, int workers) {
  if (t_grid.size() < 8) fail(errc::bad_argument, "expansion fit needs at least 8 grid points");
  for (double t : t_grid) {
    if (!(t > 0.0)) fail(errc::bad_argument, "expansion grid must be positive");
  }
  ExpansionFit fit;
  fit.t_lo = *std::min_element(t_grid.begin(), t_grid.end());
  fit.t_hi = *std::max_element(t_grid.begin(), t_grid.end());
  for (int i = 2; i < std::max(p_hint, 2.0) + 0.5; ++i) fit.powers.push_back(i);

  const auto spectrum = spectral_grid(model, obs, t_grid, workers);
  const auto atoms = observable_distribution(model, obs);
  const Eigen::Index n = static_cast<Eigen::Index>(t_grid.size());
  Eigen::VectorXcd r(n);
  parallel_for(n, workers, [&](long long j) {
    cd e(0.0, 0.0);
    for (std::size_t i = 0; i < atoms.value.size(); ++i) {
      e += atoms.mass[i] * std::exp(cd(0.0, t_grid[static_cast<std::size_t>(j)]) * atoms.value[i]);
    }
    r[j] = spectrum[static_cast<std::size_t>(j)].lambda - e;
  });

  const Eigen::Index np = static_cast<Eigen::Index>(fit.powers.size());
  fit.coefficients = Eigen::VectorXcd::Zero(np);
  if (r.cwiseAbs().maxCoeff() < 1e-12) {
    fit.zero_residual = true;
    fit.q_hat = std::numeric_limits<double>::infinity();
    return fit;
  }
  Eigen::VectorXcd rho = r;
  if (np > 0) {
    // Kept coefficients come from the low end of the window, weighted by
    // t^{-lowest power}, with two extra powers as nuisance columns. Unweighted
    // whole-window fits let the unmodeled high-order terms at large t leak
    // into the kept coefficients and flatten the residual slope.
    const double t_mid = std::sqrt(fit.t_lo * fit.t_hi);
    std::vector<Eigen::Index> low;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (t_grid[static_cast<std::size_t>(j)] <= t_mid) low.push_back(j);
    }
    const Eigen::Index nb = np + 2;
    if (static_cast<Eigen::Index>(low.size()) < nb + 2) {
      low.resize(static_cast<std::size_t>(n));
      std::iota(low.begin(), low.end(), 0);
    }
    const Eigen::Index nl = static_cast<Eigen::Index>(low.size());
    const int top_power = fit.powers.back();
    Eigen::MatrixXd a(nl, nb);
    Eigen::VectorXd bre(nl), bim(nl);
    for (Eigen::Index j = 0; j < nl; ++j) {
      const double t = t_grid[static_cast<std::size_t>(low[static_cast<std::size_t>(j)])];
      const double wgt = std::pow(t, -fit.powers.front());
      for (Eigen::Index p = 0; p < np; ++p) {
        a(j, p) = wgt * std::pow(t, fit.powers[static_cast<std::size_t>(p)]);
      }
      a(j, np) = wgt * std::pow(t, top_power + 1);
      a(j, np + 1) = wgt * std::pow(t, top_power + 2);
      const cd rv = r[low[static_cast<std::size_t>(j)]];
      bre[j] = wgt * rv.real();
      bim[j] = wgt * rv.imag();
    }
    const auto qr = a.colPivHouseholderQr();
    const Eigen::VectorXd cre = qr.solve(bre);
    const Eigen::VectorXd cim = qr.solve(bim);
    for (Eigen::Index p = 0; p < np; ++p) fit.coefficients[p] = cd(cre[p], cim[p]);
    for (Eigen::Index j = 0; j < n; ++j) {
      cd removed(0.0, 0.0);
      for (Eigen::Index p = 0; p < np; ++p) {
        removed += fit.coefficients[p] *
                   std::pow(t_grid[static_cast<std::size_t>(j)], fit.powers[static_cast<std::size_t>(p)]);
      }
      rho[j] = r[j] - removed;
    }
  }

  std::vector<double> lx, ly;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::abs(rho[j]) > 1e-13) {
      lx.push_back(std::log(t_grid[static_cast<std::size_t>(j)]));
      ly.push_back(std::log(std::abs(rho[j])));
    }
  }
  if (lx.size() < 4) {
    fit.zero_residual = true;
    fit.q_hat = std::numeric_limits<double>::infinity();
    return fit;
  }
  const double nn = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / nn;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / nn;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  fit.q_hat = sxy / sxx;
  double sse = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - my - fit.q_hat * (lx[i] - mx);
    sse += e * e;
  }
  fit.band = lx.size() > 2 ? 1.96 * std::sqrt(sse / (nn - 2.0) / sxx) : 0.0;
  if (fit.band > 0.5) fail(errc::fit_unstable, "residual-exponent band wider than 0.5");
  return fit;
}

const char* coboundary_verdict_name(CoboundaryVerdict v) {
  switch (v) {
    case CoboundaryVerdict::coboundary: return "Coboundary";
    case CoboundaryVerdict::not_coboundary: return "NotCoboundary";
    case CoboundaryVerdict::inconclusive: return "Inconclusive";
  }
  return "Unknown";
}

CoboundaryReport coboundary_detect(const GibbsMarkovModel& model, const Observable& obs,
                                   double tol) {
  CoboundaryReport rep;
  rep.sigma2 = green_kubo_sigma2(model, obs).sigma2;
  const auto dist = observable_distribution(model, obs);
  rep.c_estimate = dist.mean;
  if (rep.sigma2 > 10.0 * tol) {
    rep.verdict = CoboundaryVerdict::not_coboundary;
    return rep;
  }
  const RangeProbe probe = partial_sum_ranges(model, obs, rep.c_estimate, 10000, 100, 0x636f626fULL);
  rep.range_stat = probe.full;
  rep.growth_ratio = probe.full / std::max(probe.tenth, 1e-300);
  const bool flat = probe.full <= 1.25 * probe.tenth + 1e-9;
  rep.verdict = (rep.sigma2 < tol && flat) ? CoboundaryVerdict::coboundary
                                           : CoboundaryVerdict::inconclusive;
  return rep;
}

}  // namespace gml
