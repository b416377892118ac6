#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "gml/common.hpp"
#include "gml/rng.hpp"

namespace gml {

using CellId = std::int32_t;

enum class ModelKind { finite_markov, countable_bernoulli, induced_doubling };

// Analytic weight family for countable alphabets; tail sums are known in
// closed form so truncation indices are computed, not searched.
struct WeightSpec {
  enum class Form { geometric, polynomial } form = Form::geometric;
  double param = 0.5;  // geometric ratio r, or polynomial q with m(a_i) = C (i+1)^{-(1+q)}
};

struct GibbsMarkovModel {
  ModelKind kind = ModelKind::finite_markov;
  Eigen::Index states = 0;
  Eigen::MatrixXd transition;  // finite_markov only, row-stochastic
  Eigen::VectorXd weights;     // m(a); equals stationary for product measures
  Eigen::VectorXd stationary;  // pi(a)
  double gamma = 0.5;
  double distortion = 1.0;  // C with C^{-1} m(a) <= g <= C m(a)
  WeightSpec weight_spec{};
  double truncation_tol = 0.0;
  Eigen::Index truncation_index = 0;  // retained cells (countable kinds)
  double discarded_mass = 0.0;        // tail mass before renormalization
  double induced_a = 0.0;             // induced_doubling exponent
  // Countable chains may carry a self-transition weight: P(a,b) =
  // stickiness*[a==b] + (1-stickiness)*m(b). Zero means a product measure.
  double stickiness = 0.0;

  // Sampling caches, built once; the model is immutable afterwards.
  std::vector<double> alias_prob;  // Walker alias table over weights (product measures)
  std::vector<CellId> alias_cell;
  // Per-row cumulative transition, row-major so a row is contiguous for
  // binary search.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_cdf;
  Eigen::VectorXd start_cdf;  // cumulative stationary

  CellId sample_start(Philox& rng) const;
  CellId sample_step(CellId from, Philox& rng) const;
};

enum class ObsKind { depth_table, induced_power };

struct Observable {
  ObsKind kind = ObsKind::depth_table;
  int depth = 1;
  // Dense table over packed depth-k cylinders: index a0*S^{k-1} + a1*S^{k-2} + ... + a_{k-1}.
  // Only admissible slots are ever read.
  Eigen::VectorXd values;
  double eta = 1.0;
  double exponent = 0.0;  // induced_power: a of f0(x) = x^{-a}
};

struct Trajectory {
  std::vector<CellId> symbols;
  std::vector<double> points;  // induced_doubling: sampled base point per symbol
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

// Admissible depth-k cylinders of a model, in increasing packed order,
// with their measures m([a0..a_{k-1}]).
struct CylinderSet {
  int depth = 1;
  Eigen::Index states = 0;
  std::vector<std::uint64_t> packed;
  Eigen::VectorXd mass;

  Eigen::Index size() const { return static_cast<Eigen::Index>(packed.size()); }
  Eigen::Index find(std::uint64_t key) const;  // -1 if not admissible
  void unpack(Eigen::Index i, CellId* out) const;
};

GibbsMarkovModel build_finite_markov(const Eigen::MatrixXd& transition, double gamma);
GibbsMarkovModel build_countable_bernoulli(const WeightSpec& weights, double truncation_tol,
                                           double gamma = 0.5);
// Countable chain with a self-transition: stays put with probability
// stickiness, otherwise redraws from the weights. The weights stay stationary.
GibbsMarkovModel build_sticky_bernoulli(const WeightSpec& weights, double stickiness,
                                        double truncation_tol, double gamma = 0.5);
std::pair<GibbsMarkovModel, Observable> build_induced_doubling(double a,
                                                               double truncation_tol = 1e-12);

CylinderSet enumerate_cylinders(const GibbsMarkovModel& model, int depth);

Trajectory sample_trajectory(const GibbsMarkovModel& model, Eigen::Index n, std::uint64_t seed,
                             std::uint64_t stream_id);

// Birkhoff sum over the n = len - depth + 1 windows the trajectory supports.
double birkhoff_sum(const GibbsMarkovModel& model, const Observable& obs, const Trajectory& traj);

// sum_a m(a) Df(a)^eta. Df is the exact Lipschitz constant of f per cell:
// depth-k tables under d(x,y) = gamma^{s(x,y)}, induced sums under the
// Euclidean metric on [1/2,1). For induced observables the series runs over
// the full alphabet and +inf is returned when partial sums grow unboundedly.
double regularity_sum(const GibbsMarkovModel& model, const Observable& obs, double eta);

// Value of the induced observable at base point y in return-time-k cell.
double induced_value(double a, CellId cell, double y);
// Analytic sup |f'| over the return-time-k cell.
double induced_lipschitz(double a, CellId cell);
// Exact mean of the induced observable over the truncated, renormalized model.
double induced_mean(const GibbsMarkovModel& model, const Observable& obs);

struct ObservableDistribution {
  bool sampler_only = false;
  std::vector<double> value;  // sorted strictly increasing (atoms merged)
  std::vector<double> mass;
  double mean = 0.0;

  // Sampler state: atoms use their own alias table; induced observables
  // draw a cell from the model weights and a uniform point inside it.
  std::vector<double> alias_prob;
  std::vector<CellId> alias_cell;
  double induced_a = 0.0;

  double sample(Philox& rng) const;
};

ObservableDistribution observable_distribution(const GibbsMarkovModel& model,
                                               const Observable& obs);

}  // namespace gml
