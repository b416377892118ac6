#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "gml/common.hpp"
#include "gml/maps.hpp"

namespace gml {

// One Monte-Carlo run: for each horizon n, `samples` independent draws of
// (S_n f - a(n)) / b(n). Null a_of_n means centering 0, null b_of_n scaling 1.
struct SimulationPlan {
  std::vector<long long> n_list;  // strictly increasing
  long long samples = 0;          // at least 100
  std::uint64_t seed = 0;
  int workers = 1;
  std::function<double(long long)> a_of_n;
  std::function<double(long long)> b_of_n;
};

struct EmpiricalDistribution {
  std::vector<double> values;  // sorted ascending, samples entries
  long long n = 0;
  long long samples = 0;
  std::uint64_t seed = 0;
  std::uint64_t plan_hash = 0;
};

// Trajectory generation and Birkhoff summation are fused; each sample owns
// the RNG stream (horizon index, sample index), so results are identical for
// any worker count.
std::map<long long, EmpiricalDistribution> run_plan(const GibbsMarkovModel& model,
                                                    const Observable& obs,
                                                    const SimulationPlan& plan);

// Same normalization applied to sums of i.i.d. draws from the observable's
// one-step distribution. Streams live in a separate namespace so paired runs
// never share randomness.
std::map<long long, EmpiricalDistribution> run_iid_plan(const GibbsMarkovModel& model,
                                                        const Observable& obs,
                                                        const SimulationPlan& plan);

// Exact sup over the jump points: max_i max(i/N - F(x_i), F(x_i) - (i-1)/N).
double ks_distance(const std::vector<double>& sorted_sample,
                   const std::function<double(double)>& cdf);
double ks_two_sample(const std::vector<double>& sorted_a, const std::vector<double>& sorted_b);

std::vector<std::complex<double>> empirical_cf(const std::vector<double>& sample,
                                               const std::vector<double>& t_grid);

// eps[i][j] = |ECF of S_{n_i} f at t_j - lambda(t_j)^{n_i} mu(t_j)|.
struct EpsilonTable {
  std::vector<long long> n_list;
  std::vector<double> t_grid;
  std::vector<std::vector<std::complex<double>>> ecf;
  std::vector<std::vector<std::complex<double>>> pred;
  std::vector<std::vector<double>> eps;
  double noise_floor = 0.0;  // 2/sqrt(samples)
};

EpsilonTable epsilon_n_estimate(const GibbsMarkovModel& model, const Observable& obs,
                                const std::vector<long long>& n_list,
                                const std::vector<double>& t_grid, long long samples,
                                std::uint64_t seed, int workers = 1);

struct BerryEsseenCurve {
  std::vector<long long> n_list;
  std::vector<double> delta_n;  // KS of S_n ftilde / sqrt(n) against Normal(0, sigma2)
  double sigma2 = 0.0;
  double exponent = 0.0;  // decay rate: delta_n ~ n^{-exponent}
  double band = 0.0;      // 95% band; 0 when only two points carry the fit
  int fit_points = 0;     // leading run of horizons above the inclusion cut
  double noise_floor = 0.0;  // 1.63/sqrt(samples), the KS sampling scale
};

// Centers f internally; sigma2 comes from the spectral side. Horizons whose
// delta_n sit below 3 * 0.87/sqrt(samples) are too noisy to date and drop
// out of the exponent fit (the fit stops at the first such horizon).
BerryEsseenCurve berry_esseen_curve(const GibbsMarkovModel& model, const Observable& obs,
                                    double sigma2, const std::vector<long long>& n_list,
                                    long long samples, std::uint64_t seed, int workers = 1);

struct TailReport {
  double delta = 0.0;
  std::vector<double> x_grid;
  std::vector<double> weighted_tail;  // x^delta E(f^2 1_{|f|>x})
  std::vector<double> cubic;          // delta = 1 only: E(f^3 1_{|f|<x})
  bool bounded = false;
  bool cubic_bounded = true;
};

// Bounded verdict: the weighted tail is flat-or-falling over the top half of
// the grid (log-log slope <= 0.05), or vanishes outright. delta = 1 applies
// the same rule to the truncated third moment.
TailReport tail_condition_check(const GibbsMarkovModel& model, const Observable& obs, double delta,
                                const std::vector<double>& x_grid);

// Memoized CDF for expensive targets: nodes uniform in asinh(x) between the
// construction bounds, linear interpolation inside, the exact function
// outside. Bounds are evaluated exactly, so sample extremes stay exact when
// the cache is built on them.
class CachedCdf {
 public:
  CachedCdf(std::function<double(double)> exact, double lo, double hi, int nodes = 4096);
  double operator()(double x) const;

 private:
  std::function<double(double)> exact_;
  double u_lo_ = 0.0, u_hi_ = 0.0, du_ = 0.0;
  std::vector<double> table_;
};

}  // namespace gml
