#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "gml/common.hpp"
#include "gml/maps.hpp"

namespace gml {

// Transfer operator at frequency t on functions of depth-k cylinders. Basis
// order is the packed cylinder order of enumerate_cylinders (states ascending
// at depth 1). Column a-cyl feeds row b-cyl when shift(a-cyl) prefixes b-cyl,
// with entry g(a-cyl) e^{i t f(a-cyl)}.
//
// Product-measure chains factor as diag + rank-one and keep that form at any
// alphabet size; entries is additionally materialized for small dimensions.
struct TransferMatrix {
  double t = 0.0;
  int depth = 1;
  Eigen::Index dim = 0;
  bool structured = false;
  Eigen::MatrixXcd entries;    // dense form, empty above the materialization cap
  Eigen::VectorXcd diag_part;  // structured: M = diag(diag_part) + ones rank_one^T
  Eigen::VectorXcd rank_one;
  Eigen::VectorXd mass;   // m-weight of each basis cylinder
  Eigen::VectorXd f_cyl;  // observable value on each basis cylinder

  Eigen::VectorXcd apply(const Eigen::VectorXcd& u) const;
  Eigen::VectorXcd apply_transpose(const Eigen::VectorXcd& u) const;
};

TransferMatrix transfer_matrix(const GibbsMarkovModel& model, const Observable& obs, double t);

// Leading eigendata. xi is the right eigenvector normalized to integral 1
// against mass; mu = (l . 1)(m . xi) / (l . xi) with l the plain-transpose
// left eigenvector; gap = |second eigenvalue| / |lambda|.
struct SpectralPoint {
  double t = 0.0;
  std::complex<double> lambda{1.0, 0.0};
  std::complex<double> mu{1.0, 0.0};
  Eigen::VectorXcd xi;
  double gap = 0.0;
};

SpectralPoint leading_eigen(const TransferMatrix& matrix);

struct SpectralScalars {
  double t = 0.0;
  std::complex<double> lambda{1.0, 0.0};
  std::complex<double> mu{1.0, 0.0};
  double gap = 0.0;
};

// Per-t eigendata over a grid, parallel across grid points.
std::vector<SpectralScalars> spectral_grid(const GibbsMarkovModel& model, const Observable& obs,
                                           const std::vector<double>& t_grid, int workers = 1);

// Max |lambda| shift over the grid when the truncated alphabet is rebuilt a
// hundred times coarser. Zero for finite models.
double spectral_truncation_bias(const GibbsMarkovModel& model, const Observable& obs,
                                const std::vector<double>& t_grid, int workers = 1);

// Residual of lambda(t) = E(e^{itf}) + integral (e^{itf}-1)(xi_t-1) dm, an
// exact identity on the finite matrix.
double lambda_identity_check(const GibbsMarkovModel& model, const Observable& obs, double t);

struct GreenKuboResult {
  double sigma2 = 0.0;
  Eigen::Index horizon = 0;  // correlation lags summed
  double gap = 0.0;
  double tail_bound = 0.0;  // geometric bound on the dropped lags
};

// sigma^2 = int ftilde^2 + 2 sum_{k=1}^K int ftilde ftilde o T^k through
// repeated transfer-matrix application; horizon <= 0 picks K from the gap so
// gap^K < 1e-12.
GreenKuboResult green_kubo_sigma2(const GibbsMarkovModel& model, const Observable& obs,
                                  Eigen::Index horizon = 0);

// sigma^2 = -Re lambda''(0) - E(f)^2 with a 5-point stencil at h and h/2,
// Richardson-extrapolated; the two step sizes must agree within 1e-5.
double sigma2_from_lambda(const GibbsMarkovModel& model, const Observable& obs, double h = 1e-2);

struct BiasFunction {
  Eigen::VectorXcd u1;  // i sum_{k=0}^K T^{k+1} ftilde on the cylinder basis
  Eigen::Index horizon = 0;
  // |series - direct solve of (I-T)u = T ftilde on mean-zero functions|_inf;
  // -1 when the dimension is too large for the dense solve.
  double crosscheck_residual = -1.0;
};

BiasFunction bias_function_u1(const GibbsMarkovModel& model, const Observable& obs,
                              Eigen::Index horizon = 0);

struct ExpansionFit {
  std::vector<int> powers;  // integer powers removed alongside E(e^{itf})
  Eigen::VectorXcd coefficients;
  double q_hat = 0.0;  // log-log slope of the remaining residual
  double band = 0.0;   // 95% band on q_hat
  double t_lo = 0.0, t_hi = 0.0;
  bool zero_residual = false;  // residual at roundoff everywhere (i.i.d. input)
};

// Fits lambda(t) - E(e^{itf}) to the integer powers 2 <= i < max(p_hint,2)+1/2
// over the grid, then regresses the leftover on log t.
ExpansionFit expansion_fit(const GibbsMarkovModel& model, const Observable& obs, double p_hint,
                           const std::vector<double>& t_grid, int workers = 1);

enum class CoboundaryVerdict { coboundary, not_coboundary, inconclusive };

struct CoboundaryReport {
  CoboundaryVerdict verdict = CoboundaryVerdict::inconclusive;
  double sigma2 = 0.0;
  double c_estimate = 0.0;   // E(f), the additive constant if f = u - u o T + c
  double range_stat = 0.0;   // pooled range of partial sums of f - E(f)
  double growth_ratio = 0.0; // range at the full horizon over range at a tenth
};

const char* coboundary_verdict_name(CoboundaryVerdict v);

// Coboundary when sigma^2 < tol and the partial-sum range stays flat along
// 100 trajectories of length 10^4; NotCoboundary when sigma^2 > 10 tol.
CoboundaryReport coboundary_detect(const GibbsMarkovModel& model, const Observable& obs,
                                   double tol = 1e-10);

}  // namespace gml
