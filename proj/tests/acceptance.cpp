#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "gml/domains.hpp"
#include "gml/maps.hpp"
#include "gml/simulate.hpp"
#include "gml/spectral.hpp"

namespace fs = std::filesystem;
using namespace gml;

namespace {

constexpr std::uint64_t kSeed = 2024;
constexpr int kWorkers = 2;
constexpr double kPi = 3.14159265358979323846;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::setprecision(digits) << v;
  return ss.str();
}

GibbsMarkovModel markov2() {
  Eigen::MatrixXd p(2, 2);
  p << 0.9, 0.1, 0.2, 0.8;
  return build_finite_markov(p, 0.5);
}

Observable table1(std::initializer_list<double> vals) {
  Observable f;
  f.values.resize(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (const double v : vals) f.values[i++] = v;
  return f;
}

Observable index_power(Eigen::Index states, double s) {
  Observable f;
  f.values.resize(states);
  for (Eigen::Index i = 0; i < states; ++i) f.values[i] = std::pow(double(i) + 1.0, s);
  return f;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double sample_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= double(v.size());
  double s = 0.0;
  for (const double x : v) s += (x - mean) * (x - mean);
  return s / double(v.size() - 1);
}

// --- 1: independence identity on the fair coin ------------------------------

Outcome criterion1() {
  Eigen::MatrixXd p(2, 2);
  p << 0.5, 0.5, 0.5, 0.5;
  const auto model = build_finite_markov(p, 0.5);
  const auto f = table1({0.0, 1.0});
  std::vector<double> grid(201);
  for (int i = 0; i < 201; ++i) grid[static_cast<std::size_t>(i)] = -1.0 + 0.01 * i;
  const auto pts = spectral_grid(model, f, grid, kWorkers);
  double worst_l = 0.0, worst_m = 0.0;
  for (const auto& pt : pts) {
    const std::complex<double> want = 0.5 * (1.0 + std::exp(std::complex<double>(0.0, pt.t)));
    worst_l = std::max(worst_l, std::abs(pt.lambda - want));
    worst_m = std::max(worst_m, std::abs(pt.mu - 1.0));
  }
  const bool ok = worst_l < 1e-12 && worst_m < 1e-12;
  return {ok, "max |lambda - (1+e^{it})/2| = " + num(worst_l) + " (tol 1e-12), max |mu - 1| = " +
                  num(worst_m) + " (tol 1e-12)"};
}

// --- 2: three variance estimates agree --------------------------------------

Outcome criterion2() {
  const auto model = markov2();
  const auto f = table1({1.0, -1.0});
  const double want = 136.0 / 27.0;

  const auto gk = green_kubo_sigma2(model, f);
  const double spec = sigma2_from_lambda(model, f);

  SimulationPlan plan;
  plan.n_list = {100000};
  plan.samples = 10000;
  plan.seed = kSeed;
  plan.workers = kWorkers;
  const auto runs = run_plan(model, f, plan);
  const double mc = sample_variance(runs.at(100000).values) / 1e5;

  const double gk_err = std::abs(gk.sigma2 - want);
  const double spec_err = std::abs(spec - want);
  const double mc_rel = std::abs(mc - want) / want;
  const bool ok = gk_err < 1e-9 && spec_err < 1e-6 && mc_rel < 0.02;
  return {ok, "green-kubo err = " + num(gk_err) + " (tol 1e-9), spectral err = " + num(spec_err) +
                  " (tol 1e-6), MC rel err = " + num(mc_rel) + " (tol 0.02)"};
}

// --- 3: CLT with the dynamical variance -------------------------------------

Outcome criterion3() {
  const auto model = markov2();
  const auto f = table1({1.0, -1.0});
  const double mean = observable_distribution(model, f).mean;
  const double s2 = green_kubo_sigma2(model, f).sigma2;

  SimulationPlan plan;
  plan.n_list = {100, 1000, 10000};
  plan.samples = 100000;
  plan.seed = kSeed;
  plan.workers = kWorkers;
  plan.a_of_n = [mean](long long n) { return mean * double(n); };
  plan.b_of_n = [s2](long long n) { return std::sqrt(double(n) * s2); };
  const auto runs = run_plan(model, f, plan);

  std::vector<double> ks;
  for (const long long n : plan.n_list) ks.push_back(ks_distance(runs.at(n).values, normal_cdf));
  const double slack = 2.0 * 0.87 / std::sqrt(double(plan.samples));
  const bool final_ok = ks.back() <= 0.01;
  const bool mono = ks[1] <= ks[0] + slack && ks[2] <= ks[1] + slack;
  return {final_ok && mono,
          "ks = [" + num(ks[0]) + ", " + num(ks[1]) + ", " + num(ks[2]) +
              "] at n = [100, 1000, 10000]; ks(10000) tol 0.01, decreasing within slack " +
              num(slack)};
}

// --- 4: stable limit and i.i.d. equivalence ---------------------------------

Outcome criterion4() {
  const auto model = build_countable_bernoulli({WeightSpec::Form::polynomial, 1.0}, 1e-6);
  const auto f = index_power(model.states, 2.0 / 3.0);

  const auto cls = classify(TailSpec::from_atoms(observable_distribution(model, f),
                                                 model.discarded_mass));
  const bool cls_ok = cls.variant == DomainVariant::d3 && std::abs(cls.p - 1.5) < 0.05 &&
                      std::abs(cls.c1 - cls.c2 - 1.0) < 1e-6;

  const auto ns = norming_sequence(cls);
  SimulationPlan plan;
  plan.n_list = {10000};
  plan.samples = 100000;
  plan.seed = kSeed;
  plan.workers = kWorkers;
  plan.a_of_n = [&ns](long long n) { return ns.a(double(n)); };
  plan.b_of_n = [&ns](long long n) { return ns.b(double(n)); };
  const auto dyn = run_plan(model, f, plan);
  const auto iid = run_iid_plan(model, f, plan);

  const auto sp = stable_params(cls);
  const auto& values = dyn.at(10000).values;
  const CachedCdf target([sp](double x) { return stable_cdf(sp, x); }, values.front(),
                         values.back());
  const double ks1 = ks_distance(values, [&target](double x) { return target(x); });
  const double ks2 = ks_two_sample(values, iid.at(10000).values);

  const bool ok = cls_ok && ks1 <= 0.05 && ks2 <= 0.02;
  return {ok, std::string("classifier ") + (cls_ok ? "ok" : "WRONG") + " (p = " + num(cls.p) +
                  ", beta = " + num(cls.c1 - cls.c2) + "); one-sample ks = " + num(ks1) +
                  " (tol 0.05), two-sample ks = " + num(ks2) + " (tol 0.02)"};
}

// --- 5: Cauchy inversion oracle ---------------------------------------------

Outcome criterion5() {
  StableParams sp;
  sp.p = 1.0;
  sp.beta = 0.0;
  sp.c = kPi / 2.0;
  sp.gaussian = false;
  double worst = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double x = -50.0 + 0.1 * i;
    const double want = 0.5 + std::atan(2.0 * x / kPi) / kPi;
    worst = std::max(worst, std::abs(stable_cdf(sp, x) - want));
  }
  return {worst < 1e-6, "sup |stable_cdf - closed form| = " + num(worst) + " (tol 1e-6)"};
}

// --- 6: Berry-Esseen decay rates --------------------------------------------

Outcome criterion6() {
  Eigen::MatrixXd p(2, 2);
  p << 0.5, 0.5, 0.5, 0.5;
  const auto coin = build_finite_markov(p, 0.5);
  const auto pm1 = table1({1.0, -1.0});
  const std::vector<long long> horizons = {100, 1000, 10000};
  const auto curve_a =
      berry_esseen_curve(coin, pm1, 1.0, horizons, 100000, kSeed, kWorkers);
  const bool a_ok = std::abs(curve_a.exponent - 0.5) <= 0.1;

  const auto model = build_countable_bernoulli({WeightSpec::Form::polynomial, 1.5}, 1e-7);
  const auto f = index_power(model.states, 0.6);
  const double s2 = green_kubo_sigma2(model, f).sigma2;
  const auto curve_b = berry_esseen_curve(model, f, s2, horizons, 100000, kSeed, kWorkers);
  const bool b_ok = std::abs(curve_b.exponent - 0.25) <= 0.1;

  std::vector<double> grid;
  for (int i = 0; i < 12; ++i) grid.push_back(2.0 * std::pow(5.0, double(i) / 11.0));
  const auto good = tail_condition_check(model, f, 0.5, grid);
  const auto bad = tail_condition_check(model, f, 0.9, grid);
  const bool tails_ok = good.bounded && !bad.bounded;

  return {a_ok && b_ok && tails_ok,
          "pm1 exponent = " + num(curve_a.exponent) + " (want 0.5 +- 0.1), heavy-tail exponent = " +
              num(curve_b.exponent) + " (want 0.25 +- 0.1), tail delta 0.5 " +
              (good.bounded ? "bounded" : "UNBOUNDED") + " / delta 0.9 " +
              (bad.bounded ? "BOUNDED" : "unbounded")};
}

// --- 7: coboundary dichotomy ------------------------------------------------

Outcome criterion7() {
  const auto model = markov2();
  Observable f;
  f.depth = 2;
  f.values.resize(4);
  f.values << 3.0, 4.5, 1.5, 3.0;  // u - u o T + 3 with u = (1.5, 0)

  const auto rep = coboundary_detect(model, f);
  const bool verdict_ok = rep.verdict == CoboundaryVerdict::coboundary;
  const bool sigma_ok = rep.sigma2 < 1e-10;
  const bool c_ok = std::abs(rep.c_estimate - 3.0) < 1e-10;

  SimulationPlan plan;
  plan.n_list = {10000};
  plan.samples = 200;
  plan.seed = kSeed;
  plan.workers = kWorkers;
  plan.a_of_n = [](long long n) { return 3.0 * double(n); };
  const auto runs = run_plan(model, f, plan);
  const auto& v = runs.at(10000).values;
  const double range = v.back() - v.front();
  const double bound = 2.0 * 1.5 + 1e-6;
  const bool range_ok = range < bound;

  return {verdict_ok && sigma_ok && c_ok && range_ok,
          std::string("verdict ") + coboundary_verdict_name(rep.verdict) + ", sigma2 = " +
              num(rep.sigma2) + " (tol 1e-10), |c - 3| = " + num(std::abs(rep.c_estimate - 3.0)) +
              " (tol 1e-10), S_n - 3n range = " + num(range) + " (bound " + num(bound) + ")"};
}

// --- 8: characteristic-function error decay ---------------------------------

Outcome criterion8() {
  const auto model = markov2();
  const auto f = table1({1.0, -1.0});
  const auto table = epsilon_n_estimate(model, f, {5, 10, 20, 40}, {0.1, 0.3}, 100000, kSeed,
                                        kWorkers);
  const double floor3 = 3.0 * table.noise_floor;
  bool ok = true;
  std::string detail;
  for (std::size_t j = 0; j < table.t_grid.size(); ++j) {
    bool dec = true;
    for (std::size_t i = 1; i < table.n_list.size(); ++i) {
      // Below the noise floor, ordering is luck; above it, decay must show.
      if (table.eps[i][j] > std::max(table.eps[i - 1][j], floor3)) dec = false;
    }
    const bool reached = table.eps.back()[j] <= floor3;
    ok = ok && dec && reached;
    if (!detail.empty()) detail += "; ";
    detail += "t = " + num(table.t_grid[j]) + ": eps(40) = " + num(table.eps.back()[j]) +
              (dec ? ", decreasing" : ", NOT decreasing");
  }
  detail += "; 3x noise floor = " + num(floor3);
  return {ok, detail};
}

// --- 9: expansion residual order --------------------------------------------

Outcome criterion9() {
  std::vector<double> grid(41);
  for (int i = 0; i < 41; ++i) {
    grid[static_cast<std::size_t>(i)] = std::pow(10.0, -3.0 + 2.0 * i / 40.0);
  }
  const auto fit_m = expansion_fit(markov2(), table1({1.0, -1.0}), 2.0, grid, kWorkers);
  const bool m_ok = fit_m.q_hat >= 2.8;

  const auto model =
      build_sticky_bernoulli({WeightSpec::Form::polynomial, 1.0}, 0.3, 1e-4);
  const auto f = index_power(model.states, 2.0 / 3.0);
  const auto cls = classify(TailSpec::from_atoms(observable_distribution(model, f),
                                                 model.discarded_mass));
  const auto fit_h = expansion_fit(model, f, cls.p, grid, kWorkers);
  const bool h_ok = fit_h.q_hat > 1.5;

  return {m_ok && h_ok, "bounded-f q_hat = " + num(fit_m.q_hat) +
                            " (want >= 2.8), heavy-tail q_hat = " + num(fit_h.q_hat) +
                            " (want > 1.5, p_hint = " + num(cls.p) + ")"};
}

// --- 10: byte-identical preset reruns ---------------------------------------

struct PresetRun {
  const char* preset;
  const char* args;
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GML_BIN) + " " + args + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome criterion10() {
  const PresetRun runs[] = {
      {"clt_markov.json", "simulate --n 50,200 --samples 2000"},
      {"stable_p15.json", "simulate --n 100 --samples 2000"},
      {"d2_boundary.json", "simulate --n 100 --samples 2000"},
      {"coboundary.json", "spectrum --t-min=-0.5 --t-max=0.5 --t-steps 21 --n 20 --samples 2000"},
      {"induced_doubling.json", "simulate --n 50 --samples 2000"},
      {"berry_esseen_d05.json", "berry-esseen --n 100,400 --samples 2000"},
      {"berry_esseen_pm1.json", "berry-esseen --n 100,400 --samples 2000"},
      {"expansion_p15.json", "expansion --t-steps 21"},
  };
  const fs::path root = fs::temp_directory_path() / "gml_acceptance_det";
  fs::remove_all(root);
  int checked = 0;
  for (const auto& r : runs) {
    const std::string stem = fs::path(r.preset).stem().string();
    const fs::path base = root / stem;
    const std::string common = std::string(r.args) + " --config " +
                               (fs::path(GML_PRESET_DIR) / r.preset).string() + " --seed 2024";
    for (const auto& [leaf, threads] :
         std::vector<std::pair<const char*, const char*>>{{"a", "1"}, {"b", "1"}, {"c", "4"}}) {
      const fs::path dir = base / leaf;
      fs::create_directories(dir);
      const int rc = run_cli(common + " --threads " + threads + " --out " + dir.string());
      if (rc != 0) return {false, stem + " exited with code " + std::to_string(rc)};
    }
    int csvs = 0;
    for (const auto& entry : fs::directory_iterator(base / "a")) {
      if (entry.path().extension() != ".csv") continue;
      ++csvs;
      const auto name = entry.path().filename();
      const auto a = slurp(entry.path());
      if (a.empty()) return {false, stem + "/" + name.string() + " is empty"};
      if (a != slurp(base / "b" / name)) {
        return {false, stem + "/" + name.string() + " differs between identical reruns"};
      }
      if (a != slurp(base / "c" / name)) {
        return {false, stem + "/" + name.string() + " differs between 1 and 4 workers"};
      }
    }
    if (csvs == 0) return {false, stem + " produced no CSV output"};
    checked += csvs;
  }
  return {true, "8 presets, " + std::to_string(checked) +
                    " CSVs byte-identical across reruns and worker counts"};
}

using CriterionFn = Outcome (*)();
const CriterionFn kCriteria[] = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                 criterion6, criterion7, criterion8, criterion9, criterion10};

int run_one(int k) {
  const auto out = kCriteria[k - 1]();
  std::printf("criterion %d: %s  %s\n", k, out.pass ? "PASS" : "FAIL", out.detail.c_str());
  std::fflush(stdout);
  return out.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) {
    const int k = std::atoi(argv[1]);
    if (k < 1 || k > 10) {
      std::fprintf(stderr, "usage: %s [criterion 1..10]\n", argv[0]);
      return 2;
    }
    return run_one(k);
  }
  int failures = 0;
  for (int k = 1; k <= 10; ++k) failures += run_one(k);
  return failures;
}
