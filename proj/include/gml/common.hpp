#pragma once

#include <algorithm>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gml {

enum class errc {
  not_stochastic,
  not_mixing,
  not_summable,
  tol_too_tight,
  trajectory_too_short,
  observable_not_representable,
  not_in_domain,
  degenerate,
  p1_non_integrable,
  quadrature_fail,
  gap_collapse,
  slow_mixing,
  step_too_large,
  fit_unstable,
  sigma_zero,
  bad_argument,
};

// Single exception type; code() is what tests and the CLI dispatch on.
class Error : public std::runtime_error {
public:
  Error(errc c, const std::string& what) : std::runtime_error(what), code_(c) {}
  errc code() const { return code_; }

private:
  errc code_;
};

[[noreturn]] inline void fail(errc c, const std::string& what) { throw Error(c, what); }

// Runs fn(i) for i in [0,n) split into contiguous chunks, one thread per
// chunk. fn must write only to slot i of shared output, so the result is
// independent of the worker count.
template <typename Fn>
void parallel_for(long long n, int workers, Fn&& fn) {
  if (n <= 0) return;
  workers = static_cast<int>(std::max<long long>(1, std::min<long long>(workers, n)));
  if (workers == 1) {
    for (long long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const long long chunk = (n + workers - 1) / workers;
  std::exception_ptr first_error;
  std::mutex guard;
  for (int w = 0; w < workers; ++w) {
    const long long lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (long long i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(guard);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::not_stochastic: return "NotStochastic";
    case errc::not_mixing: return "NotMixing";
    case errc::not_summable: return "NotSummable";
    case errc::tol_too_tight: return "TolTooTight";
    case errc::trajectory_too_short: return "TrajectoryTooShort";
    case errc::observable_not_representable: return "ObservableNotRepresentable";
    case errc::not_in_domain: return "NotInD";
    case errc::degenerate: return "Degenerate";
    case errc::p1_non_integrable: return "P1NonIntegrable";
    case errc::quadrature_fail: return "QuadratureFail";
    case errc::gap_collapse: return "GapCollapse";
    case errc::slow_mixing: return "SlowMixing";
    case errc::step_too_large: return "StepTooLarge";
    case errc::fit_unstable: return "FitUnstable";
    case errc::sigma_zero: return "SigmaZero";
    case errc::bad_argument: return "BadArgument";
  }
  return "Unknown";
}

}  // namespace gml
