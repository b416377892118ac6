#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "gml/common.hpp"
#include "gml/maps.hpp"

namespace gml {

enum class DomainVariant { d1, d2, d3 };

const char* variant_name(DomainVariant v);

// Distribution seen from its tails: either an explicit atom list (finite or
// truncated model) or the analytic form P(Z > x) = (c1+o(1)) L(x) x^{-p},
// P(Z < -x) = (c2+o(1)) L(x) x^{-p} with c1 + c2 = 1.
struct TailSpec {
  bool analytic = false;

  // Atom form. Values sorted ascending, masses positive. tail_remainder is
  // the mass beyond the largest |value| when the model was truncated; it is
  // attributed to the sign carrying the largest |value|.
  std::vector<double> value, mass;
  double tail_remainder = 0.0;

  // Analytic form.
  double p = 0.0, c1 = 0.0, c2 = 0.0;
  std::function<double(double)> big_l;

  double mean = 0.0;
  bool has_mean = false;
  double variance = 0.0;
  bool has_variance = false;

  static TailSpec from_atoms(const ObservableDistribution& d, double remainder = 0.0);
  static TailSpec analytic_power(double p, double c1, double c2,
                                 std::function<double(double)> big_l, double mean);

  double two_sided_tail(double x) const;  // P(|Z| > x), exact for atoms
  double positive_tail(double x) const;   // P(Z > x)
};

double truncated_second_moment(const TailSpec& tail, double x);

struct SlowVariationReport {
  bool pass = false;
  double max_deviation = 0.0;  // over the upper half of the grid
  bool decreasing = false;
  double tol = 0.0;
};

// L is slowly varying when L(lambda x)/L(x) -> 1. Pass requires the late-grid
// deviations below tol with a decreasing trend (or outright negligible).
SlowVariationReport slow_variation_diagnostic(const std::function<double(double)>& big_l,
                                              const std::vector<double>& lambdas,
                                              const std::vector<double>& xs, double tol = 0.05);

struct ClassifyDiagnostics {
  double p_hat = 0.0;
  double r_squared = 0.0;
  SlowVariationReport slow_variation;
  double grid_lo = 0.0, grid_hi = 0.0;
  std::string note;
};

struct DomainClass {
  DomainVariant variant = DomainVariant::d1;
  double mean = 0.0;
  double variance = 0.0;                // d1
  double p = 2.0;                       // d3 tail index (2 otherwise)
  double c1 = 0.0, c2 = 0.0;            // d3 tail split
  std::function<double(double)> big_l;  // d2: E(Z^2 1_{|Z|<=x}); d3: x^p P(|Z|>x)
  ClassifyDiagnostics diagnostics;
};

// Tail-regression classifier; throws Degenerate for constants and NotInD
// when the regular-variation diagnostics reject the spec.
DomainClass classify(const TailSpec& tail);

struct NormingSequence {
  DomainVariant variant = DomainVariant::d1;
  double mean = 0.0;  // a(n) = n * mean; zero when p < 1 or symmetric p = 1
  double p = 2.0;
  std::function<double(double)> big_l;

  double a(double n) const { return n * mean; }
  // d1: sqrt(n); d2: root of n L(B) = B^2; d3: root of n L(B) = B^p,
  // bracketed geometric bisection to relative tolerance 1e-12.
  double b(double n) const;
};

NormingSequence norming_sequence(const DomainClass& cls);

struct StableParams {
  double p = 2.0;
  double c = 0.5;
  double beta = 0.0;
  bool gaussian = false;  // limit law N(0, 2c)
};

// d3 -> the stable law with c = Gamma(1-p) cos(p pi/2) (pi/2 at p = 1) and
// beta = c1 - c2; d1/d2 -> gaussian with c = variance/2 resp. 1/2.
StableParams stable_params(const DomainClass& cls);

// exp(-c|t|^p (1 - i beta sgn(t) omega)), omega = tan(p pi/2), or
// -(2/pi) log|t| when p = 1.
std::complex<double> stable_cf(const StableParams& params, double t);

// Gil-Pelaez inversion: F(x) = 1/2 - (1/pi) int_0^inf Im(e^{-itx} phi(t))/t dt.
double stable_cdf(const StableParams& params, double x);

struct PhiDiagnostic {
  std::vector<double> t, phi, ratio;  // phi(t) = E(1 - cos(t Z)), ratio = t^2/phi
  bool ratio_vanishes = false;        // signature of infinite second moment
};

PhiDiagnostic phi_diagnostic(const TailSpec& tail, const std::vector<double>& t_grid);

}  // namespace gml
