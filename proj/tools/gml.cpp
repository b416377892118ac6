#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gml/domains.hpp"
#include "gml/maps.hpp"
#include "gml/simulate.hpp"
#include "gml/spectral.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gml;

namespace {

// Config and filesystem problems exit with code 2; analysis failures exit
// with code 1. The two never share an exception type.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] void bad_config(const std::string& msg) { throw ConfigError(msg); }

std::string fmt(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string fmt(long long v) {
  std::array<char, 24> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string hex64(std::uint64_t v) {
  std::array<char, 18> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, 16);
  return std::string(buf.data(), res.ptr);
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string& k = it.key();
    bool known = false;
    for (const char* a : allowed) known = known || k == a;
    if (known) continue;
    std::string msg = "unknown key \"" + k + "\" in " + where;
    const char* best = nullptr;
    std::size_t best_d = 4;
    for (const char* a : allowed) {
      const std::size_t d = edit_distance(k, a);
      if (d < best_d) {
        best_d = d;
        best = a;
      }
    }
    if (best != nullptr) msg += " (did you mean \"" + std::string(best) + "\"?)";
    bad_config(msg);
  }
}

const json& member(const json& obj, const std::string& where, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) bad_config(where + "." + key + " is required");
  return *it;
}

double to_num(const json& v, const std::string& loc) {
  if (!v.is_number()) bad_config(loc + " must be a number");
  return v.get<double>();
}

double num_or(const json& obj, const std::string& where, const char* key, double fallback) {
  const auto it = obj.find(key);
  return it == obj.end() ? fallback : to_num(*it, where + "." + std::string(key));
}

// A parsed experiment: the model/observable pair plus run defaults that the
// command-line flags may override.
struct Experiment {
  GibbsMarkovModel model;
  Observable obs;
  std::vector<long long> n_list;
  long long samples = 20000;
  std::uint64_t seed = 1;
  int workers = 1;
  bool target_auto = true;
  DomainClass target;
};

Eigen::Index table_size(Eigen::Index states, int depth) {
  Eigen::Index n = 1;
  for (int d = 0; d < depth; ++d) {
    if (n > (1 << 24) / states) bad_config("observable.depth makes the value table too large");
    n *= states;
  }
  return n;
}

void parse_model(const json& jm, Experiment& ex) {
  check_keys(jm, "model",
             {"kind", "transition", "gamma", "weights", "truncation_tol", "stickiness", "a"});
  const auto& jk = member(jm, "model", "kind");
  if (!jk.is_string()) bad_config("model.kind must be a string");
  const std::string kind = jk.get<std::string>();
  const double gamma = num_or(jm, "model", "gamma", 0.5);

  if (kind == "finite_markov") {
    const auto& jt = member(jm, "model", "transition");
    if (!jt.is_array() || jt.empty()) bad_config("model.transition must be a non-empty array");
    const auto s = static_cast<Eigen::Index>(jt.size());
    Eigen::MatrixXd P(s, s);
    for (Eigen::Index i = 0; i < s; ++i) {
      const auto& row = jt[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != s) {
        bad_config("model.transition row " + fmt(static_cast<long long>(i)) + " needs " +
                   fmt(static_cast<long long>(s)) + " entries");
      }
      double sum = 0.0;
      for (Eigen::Index j = 0; j < s; ++j) {
        const double v = to_num(row[static_cast<std::size_t>(j)],
                                "model.transition row " + fmt(static_cast<long long>(i)));
        if (v < 0.0) {
          bad_config("model.transition row " + fmt(static_cast<long long>(i)) +
                     " has a negative entry");
        }
        P(i, j) = v;
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        bad_config("model.transition row " + fmt(static_cast<long long>(i)) + " sums to " +
                   fmt(sum) + ", rows must sum to 1");
      }
    }
    ex.model = build_finite_markov(P, gamma);
    return;
  }

  if (kind == "countable_bernoulli") {
    const auto& jw = member(jm, "model", "weights");
    if (!jw.is_object()) bad_config("model.weights must be an object");
    check_keys(jw, "model.weights", {"form", "param"});
    const auto& jf = member(jw, "model.weights", "form");
    if (!jf.is_string()) bad_config("model.weights.form must be a string");
    const std::string form = jf.get<std::string>();
    WeightSpec w;
    if (form == "geometric") {
      w.form = WeightSpec::Form::geometric;
    } else if (form == "polynomial") {
      w.form = WeightSpec::Form::polynomial;
    } else {
      bad_config("model.weights.form must be \"geometric\" or \"polynomial\"");
    }
    w.param = to_num(member(jw, "model.weights", "param"), "model.weights.param");
    const double tol = to_num(member(jm, "model", "truncation_tol"), "model.truncation_tol");
    const double stick = num_or(jm, "model", "stickiness", 0.0);
    ex.model = stick > 0.0 ? build_sticky_bernoulli(w, stick, tol, gamma)
                           : build_countable_bernoulli(w, tol, gamma);
    return;
  }

  if (kind == "induced_doubling") {
    const double a = to_num(member(jm, "model", "a"), "model.a");
    const double tol = num_or(jm, "model", "truncation_tol", 1e-6);
    auto pair = build_induced_doubling(a, tol);
    ex.model = std::move(pair.first);
    ex.obs = std::move(pair.second);
    return;
  }

  bad_config("model.kind must be finite_markov, countable_bernoulli, or induced_doubling");
}

void parse_observable(const json& cfg, Experiment& ex) {
  const auto it = cfg.find("observable");
  if (ex.model.kind == ModelKind::induced_doubling) {
    // The builder already produced the return-time observable; the section
    // may only adjust its exponent and modulus.
    if (it == cfg.end()) return;
    const auto& jo = *it;
    check_keys(jo, "observable", {"kind", "exponent", "eta"});
    if (jo.contains("kind") && jo["kind"].get<std::string>() != "induced_power") {
      bad_config("observable.kind must be induced_power for an induced model");
    }
    ex.obs.exponent = num_or(jo, "observable", "exponent", ex.obs.exponent);
    if (!(ex.obs.exponent > 0.0 && ex.obs.exponent < 1.0)) {
      bad_config("observable.exponent must lie in (0,1) for an induced model");
    }
    ex.obs.eta = num_or(jo, "observable", "eta", ex.obs.eta);
    return;
  }

  if (it == cfg.end()) bad_config("observable section is required");
  const auto& jo = *it;
  check_keys(jo, "observable", {"kind", "depth", "values", "exponent", "eta"});
  std::string kind = "depth_table";
  if (jo.contains("kind")) {
    if (!jo["kind"].is_string()) bad_config("observable.kind must be a string");
    kind = jo["kind"].get<std::string>();
  }
  ex.obs.eta = num_or(jo, "observable", "eta", 1.0);

  if (kind == "depth_table") {
    const double d = num_or(jo, "observable", "depth", 1.0);
    if (d < 1.0 || d > 8.0 || d != std::floor(d)) {
      bad_config("observable.depth must be an integer in [1,8]");
    }
    ex.obs.kind = ObsKind::depth_table;
    ex.obs.depth = static_cast<int>(d);
    const auto& jv = member(jo, "observable", "values");
    if (!jv.is_array()) bad_config("observable.values must be an array");
    const Eigen::Index want = table_size(ex.model.states, ex.obs.depth);
    if (static_cast<Eigen::Index>(jv.size()) != want) {
      bad_config("observable.values needs " + fmt(static_cast<long long>(want)) +
                 " entries (" + fmt(static_cast<long long>(ex.model.states)) + " cells, depth " +
                 fmt(static_cast<long long>(ex.obs.depth)) + ")");
    }
    ex.obs.values.resize(want);
    for (Eigen::Index i = 0; i < want; ++i) {
      ex.obs.values[i] = to_num(jv[static_cast<std::size_t>(i)], "observable.values");
    }
    return;
  }

  if (kind == "index_power") {
    const double s = to_num(member(jo, "observable", "exponent"), "observable.exponent");
    ex.obs.kind = ObsKind::depth_table;
    ex.obs.depth = 1;
    ex.obs.exponent = s;
    ex.obs.values.resize(ex.model.states);
    for (Eigen::Index i = 0; i < ex.model.states; ++i) {
      ex.obs.values[i] = std::pow(double(i) + 1.0, s);
    }
    return;
  }

  if (kind == "induced_power") {
    bad_config("observable.kind induced_power needs an induced_doubling model");
  }
  bad_config("observable.kind must be depth_table, index_power, or induced_power");
}

void parse_run(const json& cfg, Experiment& ex) {
  const auto it = cfg.find("run");
  if (it == cfg.end()) return;
  const auto& jr = *it;
  check_keys(jr, "run", {"n_list", "samples", "seed", "workers"});
  if (jr.contains("n_list")) {
    const auto& jn = jr["n_list"];
    if (!jn.is_array()) bad_config("run.n_list must be an array");
    ex.n_list.clear();
    for (const auto& v : jn) {
      if (!v.is_number_integer()) bad_config("run.n_list entries must be integers");
      ex.n_list.push_back(v.get<long long>());
    }
  }
  ex.samples = static_cast<long long>(num_or(jr, "run", "samples", double(ex.samples)));
  if (jr.contains("seed")) {
    if (!jr["seed"].is_number_unsigned() && !jr["seed"].is_number_integer()) {
      bad_config("run.seed must be an unsigned integer");
    }
    ex.seed = jr["seed"].get<std::uint64_t>();
  }
  ex.workers = static_cast<int>(num_or(jr, "run", "workers", double(ex.workers)));
}

void parse_target(const json& cfg, Experiment& ex) {
  const auto it = cfg.find("target");
  if (it == cfg.end()) return;
  const auto& jt = *it;
  check_keys(jt, "target", {"auto", "variant", "mean", "variance", "p", "c1", "c2"});
  if (jt.contains("auto")) {
    if (!jt["auto"].is_boolean()) bad_config("target.auto must be a boolean");
    ex.target_auto = jt["auto"].get<bool>();
  }
  if (ex.target_auto) return;
  const auto& jv = member(jt, "target", "variant");
  if (!jv.is_string()) bad_config("target.variant must be a string");
  const std::string v = jv.get<std::string>();
  DomainClass cls;
  cls.mean = num_or(jt, "target", "mean", 0.0);
  if (v == "D1" || v == "d1") {
    cls.variant = DomainVariant::d1;
    cls.variance = to_num(member(jt, "target", "variance"), "target.variance");
  } else if (v == "D2" || v == "d2") {
    cls.variant = DomainVariant::d2;
    cls.big_l = [](double) { return 1.0; };
  } else if (v == "D3" || v == "d3") {
    cls.variant = DomainVariant::d3;
    cls.p = to_num(member(jt, "target", "p"), "target.p");
    cls.c1 = num_or(jt, "target", "c1", 0.5);
    cls.c2 = num_or(jt, "target", "c2", 0.5);
    cls.big_l = [](double) { return 1.0; };
  } else {
    bad_config("target.variant must be D1, D2, or D3");
  }
  ex.target = cls;
}

Experiment load_config(const std::string& path, std::string* raw_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) bad_config("cannot open config " + path);
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (raw_out != nullptr) *raw_out = raw;
  json cfg;
  try {
    cfg = json::parse(raw);
  } catch (const json::exception& e) {
    bad_config(path + ": " + e.what());
  }
  if (!cfg.is_object()) bad_config("config root must be a JSON object");
  check_keys(cfg, "config", {"model", "observable", "run", "target"});
  Experiment ex;
  const auto& jm = member(cfg, "config", "model");
  if (!jm.is_object()) bad_config("model section must be an object");
  parse_model(jm, ex);
  parse_observable(cfg, ex);
  parse_run(cfg, ex);
  parse_target(cfg, ex);
  return ex;
}

// ---------------------------------------------------------------------------
// Classification and norming shared by the pipelines.

DomainClass classify_experiment(const Experiment& ex) {
  if (!ex.target_auto) return ex.target;
  const auto dist = observable_distribution(ex.model, ex.obs);
  if (dist.sampler_only) {
    // Return-time tail of the induced chain: cell k has measure 2^{-k} and
    // the observable blows up like x^{-a} at the cell's left edge, giving
    // P(f > u) ~ kappa^p u^{-p} with p = 1/a.
    const double a = ex.obs.exponent;
    const double kappa = std::pow(1.0 - std::pow(2.0, -a), -1.0 / a);
    return classify(TailSpec::analytic_power(
        1.0 / a, 1.0, 0.0, [kappa](double) { return kappa; }, induced_mean(ex.model, ex.obs)));
  }
  return classify(TailSpec::from_atoms(dist, ex.model.discarded_mass));
}

struct TargetLaw {
  StableParams params;
  std::function<double(long long)> a_of_n;
  std::function<double(long long)> b_of_n;
  std::function<double(double)> cdf;  // law of (S_n - a(n))/b(n)
  std::string name;
  double sigma2 = 0.0;  // d1 only
};

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// d1 normalizes by the dynamical variance (correlations included); d2/d3 use
// the tail normings, exact for the product chains these regimes ship with.
TargetLaw make_target(const Experiment& ex, const DomainClass& cls) {
  TargetLaw tl;
  tl.params = stable_params(cls);
  if (cls.variant == DomainVariant::d1) {
    double s2 = 0.0;
    try {
      s2 = green_kubo_sigma2(ex.model, ex.obs).sigma2;
    } catch (const Error& e) {
      if (e.code() != errc::observable_not_representable) throw;
      // No transfer matrix for sampler-only observables; the induced chain
      // is a product measure, so successive values are independent.
      s2 = cls.variance;
    }
    if (!(s2 > 0.0)) {
      fail(errc::sigma_zero, "dynamical variance vanishes; the observable is a coboundary");
    }
    tl.sigma2 = s2;
    const double mean = cls.mean;
    tl.a_of_n = [mean](long long n) { return mean * double(n); };
    tl.b_of_n = [s2](long long n) { return std::sqrt(double(n) * s2); };
    tl.cdf = normal_cdf;
    tl.name = "normal";
    return tl;
  }
  const auto ns = norming_sequence(cls);
  tl.a_of_n = [ns](long long n) { return ns.a(double(n)); };
  tl.b_of_n = [ns](long long n) { return ns.b(double(n)); };
  if (cls.variant == DomainVariant::d2) {
    tl.cdf = normal_cdf;
    tl.name = "normal";
  } else {
    const StableParams sp = tl.params;
    tl.cdf = [sp](double x) { return stable_cdf(sp, x); };
    tl.name = "stable(p=" + fmt(sp.p) + ",beta=" + fmt(sp.beta) + ",c=" + fmt(sp.c) + ")";
  }
  return tl;
}

// ---------------------------------------------------------------------------
// Run artifacts.

struct RunContext {
  std::string command;
  fs::path out_dir;
  std::string config_path;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  json verdicts = json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

void write_text(RunContext& ctx, const std::string& name, const std::string& body) {
  const fs::path p = ctx.out_dir / name;
  std::ofstream f(p, std::ios::binary);
  if (!f) bad_config("cannot write " + p.string());
  f << body;
  f.close();
  if (!f) bad_config("cannot write " + p.string());
  ctx.outputs.push_back(name);
}

void write_report(RunContext& ctx) {
  const auto elapsed = std::chrono::steady_clock::now() - ctx.start;
  json rep;
  rep["command"] = ctx.command;
  rep["config"] = {{"path", ctx.config_path}, {"fnv1a64", hex64(ctx.config_hash)}};
  rep["seed"] = ctx.seed;
  rep["wall_time_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
  rep["outputs"] = ctx.outputs;
  rep["verdicts"] = ctx.verdicts;
  const fs::path p = ctx.out_dir / "report.json";
  std::ofstream f(p, std::ios::binary);
  if (!f) bad_config("cannot write " + p.string());
  f << rep.dump(2) << "\n";
}

std::string gp_prelude() {
  return "# gnuplot script; run from the directory holding the CSVs\n"
         "set datafile separator ','\n"
         "set key autotitle columnhead\n"
         "set key left top\n";
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns the process exit code.

int cmd_classify(RunContext& ctx, const Experiment& ex) {
  const auto cls = classify_experiment(ex);
  const auto sp = stable_params(cls);
  json rep;
  rep["variant"] = variant_name(cls.variant);
  rep["p"] = cls.variant == DomainVariant::d3 ? cls.p : 2.0;
  rep["c1"] = cls.c1;
  rep["c2"] = cls.c2;
  rep["beta"] = sp.beta;
  rep["c"] = sp.c;
  rep["diagnostics"] = {
      {"p_hat", cls.diagnostics.p_hat},
      {"r_squared", cls.diagnostics.r_squared},
      {"grid_lo", cls.diagnostics.grid_lo},
      {"grid_hi", cls.diagnostics.grid_hi},
      {"note", cls.diagnostics.note},
      {"slow_variation",
       {{"pass", cls.diagnostics.slow_variation.pass},
        {"max_deviation", cls.diagnostics.slow_variation.max_deviation},
        {"decreasing", cls.diagnostics.slow_variation.decreasing},
        {"tol", cls.diagnostics.slow_variation.tol}}},
      {"mean", cls.mean},
      {"variance", cls.variance}};
  write_text(ctx, "classification.json", rep.dump(2) + "\n");
  ctx.verdicts["variant"] = variant_name(cls.variant);
  ctx.verdicts["p"] = rep["p"];
  ctx.verdicts["beta"] = sp.beta;
  std::cout << "classify: " << variant_name(cls.variant) << " p=" << fmt(rep["p"].get<double>())
            << " beta=" << fmt(sp.beta) << " c=" << fmt(sp.c) << "\n";
  return 0;
}

int cmd_norming(RunContext& ctx, const Experiment& ex) {
  if (ex.n_list.empty()) bad_config("no horizons: pass --n or set run.n_list");
  const auto cls = classify_experiment(ex);
  const auto ns = norming_sequence(cls);
  std::string csv = "n,a_n,b_n\n";
  for (const long long n : ex.n_list) {
    const double a = ns.a(double(n));
    const double b = ns.b(double(n));
    csv += fmt(n) + "," + fmt(a) + "," + fmt(b) + "\n";
    std::cout << "A_" << fmt(n) << " = " << fmt(a) << "\n";
    std::cout << "B_" << fmt(n) << " = " << fmt(b) << "\n";
  }
  write_text(ctx, "norming.csv", csv);
  write_text(ctx, "plot.gp",
             gp_prelude() + "set logscale xy\nset xlabel 'n'\n"
                            "plot 'norming.csv' using 1:3 with linespoints title 'B_n'\n");
  ctx.verdicts["variant"] = variant_name(cls.variant);
  ctx.verdicts["mean"] = cls.mean;
  write_report(ctx);
  return 0;
}

int cmd_simulate(RunContext& ctx, const Experiment& ex) {
  if (ex.n_list.empty()) bad_config("no horizons: pass --n or set run.n_list");
  const auto cls = classify_experiment(ex);
  const auto tl = make_target(ex, cls);
  SimulationPlan plan;
  plan.n_list = ex.n_list;
  plan.samples = ex.samples;
  plan.seed = ex.seed;
  plan.workers = ex.workers;
  plan.a_of_n = tl.a_of_n;
  plan.b_of_n = tl.b_of_n;
  const auto runs = run_plan(ex.model, ex.obs, plan);

  json ks = json::object();
  std::string plot = gp_prelude() + "set xlabel 'x'\nset ylabel 'CDF'\nplot ";
  bool first = true;
  for (const auto& [n, dist] : runs) {
    std::function<double(double)> target = tl.cdf;
    std::shared_ptr<CachedCdf> cache;
    if (cls.variant == DomainVariant::d3) {
      // Stable CDF evaluations dominate the cost at 1e5 sample points; the
      // cache's interpolation error is far below the KS noise floor.
      cache = std::make_shared<CachedCdf>(tl.cdf, dist.values.front(), dist.values.back());
      target = [cache](double x) { return (*cache)(x); };
    }
    std::string csv = "x,f_emp,f_target\n";
    const auto big_n = static_cast<double>(dist.values.size());
    for (std::size_t i = 0; i < dist.values.size(); ++i) {
      csv += fmt(dist.values[i]) + "," + fmt(double(i + 1) / big_n) + "," +
             fmt(target(dist.values[i])) + "\n";
    }
    const std::string name = "ecdf_" + fmt(n) + ".csv";
    write_text(ctx, name, csv);
    const double d = ks_distance(dist.values, target);
    ks[fmt(n)] = d;
    std::cout << "simulate: n=" << fmt(n) << " ks=" << fmt(d) << "\n";
    if (!first) plot += ", ";
    plot += "'" + name + "' using 1:2 with steps title 'empirical n=" + fmt(n) + "', '" + name +
            "' using 1:3 with lines title 'target n=" + fmt(n) + "'";
    first = false;
  }
  plot += "\n";
  write_text(ctx, "plot.gp", plot);
  ctx.verdicts["target"] = tl.name;
  ctx.verdicts["ks"] = ks;
  if (cls.variant == DomainVariant::d1) ctx.verdicts["sigma2"] = tl.sigma2;
  ctx.verdicts["plan_hash"] = hex64(runs.begin()->second.plan_hash);
  write_report(ctx);
  return 0;
}

std::vector<double> linear_grid(double lo, double hi, int steps) {
  if (steps < 1) bad_config("--t-steps must be positive");
  if (steps == 1) return {lo};
  std::vector<double> g(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    g[static_cast<std::size_t>(i)] = lo + (hi - lo) * double(i) / double(steps - 1);
  }
  return g;
}

std::vector<double> log_grid(double lo, double hi, int steps) {
  if (!(lo > 0.0 && hi > lo)) bad_config("expansion needs 0 < --t-min < --t-max");
  if (steps < 2) bad_config("--t-steps must be at least 2");
  std::vector<double> g(static_cast<std::size_t>(steps));
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < steps; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(llo + (lhi - llo) * double(i) / double(steps - 1));
  }
  return g;
}

int cmd_spectrum(RunContext& ctx, const Experiment& ex, const std::vector<double>& grid) {
  const auto pts = spectral_grid(ex.model, ex.obs, grid, ex.workers);
  std::string csv = "t,re_lambda,im_lambda,abs_lambda,re_mu,im_mu,gap\n";
  double min_gap = 1.0, max_abs = 0.0;
  for (const auto& p : pts) {
    csv += fmt(p.t) + "," + fmt(p.lambda.real()) + "," + fmt(p.lambda.imag()) + "," +
           fmt(std::abs(p.lambda)) + "," + fmt(p.mu.real()) + "," + fmt(p.mu.imag()) + "," +
           fmt(p.gap) + "\n";
    min_gap = std::min(min_gap, p.gap);
    max_abs = std::max(max_abs, std::abs(p.lambda));
  }
  write_text(ctx, "spectrum.csv", csv);
  std::string plot = gp_prelude() + "set xlabel 't'\n"
      "plot 'spectrum.csv' using 1:4 with lines title '|lambda|', "
      "'spectrum.csv' using 1:7 with lines title 'gap'\n";

  if (ex.model.kind == ModelKind::countable_bernoulli) {
    ctx.verdicts["truncation_bias"] = spectral_truncation_bias(ex.model, ex.obs, grid, ex.workers);
  }

  if (!ex.n_list.empty()) {
    const auto eps = epsilon_n_estimate(ex.model, ex.obs, ex.n_list, grid, ex.samples, ex.seed,
                                        ex.workers);
    for (std::size_t i = 0; i < eps.n_list.size(); ++i) {
      std::string cf = "t,re_ecf,im_ecf,re_pred,im_pred,eps_n\n";
      for (std::size_t j = 0; j < eps.t_grid.size(); ++j) {
        cf += fmt(eps.t_grid[j]) + "," + fmt(eps.ecf[i][j].real()) + "," +
              fmt(eps.ecf[i][j].imag()) + "," + fmt(eps.pred[i][j].real()) + "," +
              fmt(eps.pred[i][j].imag()) + "," + fmt(eps.eps[i][j]) + "\n";
      }
      const std::string name = "cf_" + fmt(eps.n_list[i]) + ".csv";
      write_text(ctx, name, cf);
      plot += "plot '" + name + "' using 1:6 with lines title 'eps n=" + fmt(eps.n_list[i]) +
              "'\n";
    }
    ctx.verdicts["noise_floor"] = eps.noise_floor;
  }
  write_text(ctx, "plot.gp", plot);
  ctx.verdicts["points"] = pts.size();
  ctx.verdicts["min_gap"] = min_gap;
  ctx.verdicts["max_abs_lambda"] = max_abs;
  std::cout << "spectrum: " << fmt(static_cast<long long>(pts.size())) << " points, max |lambda|="
            << fmt(max_abs) << ", min gap=" << fmt(min_gap) << "\n";
  write_report(ctx);
  return 0;
}

int cmd_expansion(RunContext& ctx, const Experiment& ex, const std::vector<double>& grid) {
  const auto cls = classify_experiment(ex);
  const double p_hint = cls.variant == DomainVariant::d3 ? cls.p : 2.0;
  const auto fit = expansion_fit(ex.model, ex.obs, p_hint, grid, ex.workers);

  // Rebuild the fitted residual pointwise for the plot.
  const auto pts = spectral_grid(ex.model, ex.obs, grid, ex.workers);
  const auto dist = observable_distribution(ex.model, ex.obs);
  std::string csv = "t,abs_residual\n";
  for (std::size_t j = 0; j < grid.size(); ++j) {
    std::complex<double> base{0.0, 0.0};
    for (std::size_t k = 0; k < dist.value.size(); ++k) {
      base += dist.mass[k] * std::exp(std::complex<double>(0.0, grid[j] * dist.value[k]));
    }
    std::complex<double> r = pts[j].lambda - base;
    for (std::size_t k = 0; k < fit.powers.size(); ++k) {
      r -= fit.coefficients[static_cast<Eigen::Index>(k)] *
           std::pow(grid[j], double(fit.powers[k]));
    }
    csv += fmt(grid[j]) + "," + fmt(std::abs(r)) + "\n";
  }
  write_text(ctx, "expansion.csv", csv);
  write_text(ctx, "plot.gp",
             gp_prelude() + "set logscale xy\nset xlabel 't'\n"
                            "plot 'expansion.csv' using 1:2 with linespoints title 'residual'\n");

  json powers = json::array();
  for (const int p : fit.powers) powers.push_back(p);
  json coeffs = json::array();
  for (Eigen::Index k = 0; k < fit.coefficients.size(); ++k) {
    coeffs.push_back({fit.coefficients[k].real(), fit.coefficients[k].imag()});
  }
  ctx.verdicts["q_hat"] = fit.q_hat;
  ctx.verdicts["band"] = fit.band;
  ctx.verdicts["powers"] = powers;
  ctx.verdicts["coefficients"] = coeffs;
  ctx.verdicts["zero_residual"] = fit.zero_residual;
  ctx.verdicts["t_lo"] = fit.t_lo;
  ctx.verdicts["t_hi"] = fit.t_hi;
  std::cout << "expansion: q_hat=" << fmt(fit.q_hat) << " band=" << fmt(fit.band) << "\n";
  write_report(ctx);
  return 0;
}

int cmd_berry_esseen(RunContext& ctx, const Experiment& ex) {
  if (ex.n_list.empty()) bad_config("no horizons: pass --n or set run.n_list");
  const auto cls = classify_experiment(ex);
  if (cls.variant != DomainVariant::d1) {
    fail(errc::bad_argument, "berry-esseen rates need a square-integrable observable");
  }
  const auto tl = make_target(ex, cls);
  const auto curve =
      berry_esseen_curve(ex.model, ex.obs, tl.sigma2, ex.n_list, ex.samples, ex.seed, ex.workers);
  std::string csv = "n,delta_n,noise_floor\n";
  for (std::size_t i = 0; i < curve.n_list.size(); ++i) {
    csv += fmt(curve.n_list[i]) + "," + fmt(curve.delta_n[i]) + "," + fmt(curve.noise_floor) +
           "\n";
  }
  write_text(ctx, "berry_esseen.csv", csv);
  write_text(ctx, "plot.gp",
             gp_prelude() +
                 "set logscale xy\nset xlabel 'n'\n"
                 "plot 'berry_esseen.csv' using 1:2 with linespoints title 'delta_n', "
                 "'berry_esseen.csv' using 1:3 with lines title 'noise floor'\n");
  ctx.verdicts["exponent"] = curve.exponent;
  ctx.verdicts["band"] = curve.band;
  ctx.verdicts["fit_points"] = curve.fit_points;
  ctx.verdicts["sigma2"] = curve.sigma2;
  ctx.verdicts["noise_floor"] = curve.noise_floor;
  std::cout << "berry-esseen: exponent=" << fmt(curve.exponent) << " (fit on "
            << fmt(static_cast<long long>(curve.fit_points)) << " horizons)\n";
  write_report(ctx);
  return 0;
}

int cmd_equivalence(RunContext& ctx, const Experiment& ex) {
  if (ex.n_list.empty()) bad_config("no horizons: pass --n or set run.n_list");
  const auto cls = classify_experiment(ex);
  const auto tl = make_target(ex, cls);
  SimulationPlan plan;
  plan.n_list = ex.n_list;
  plan.samples = ex.samples;
  plan.seed = ex.seed;
  plan.workers = ex.workers;
  plan.a_of_n = tl.a_of_n;
  plan.b_of_n = tl.b_of_n;
  const auto dyn = run_plan(ex.model, ex.obs, plan);
  const auto iid = run_iid_plan(ex.model, ex.obs, plan);

  const double floor = 0.87 * std::sqrt(2.0 / double(ex.samples));
  const double threshold = std::max(0.02, 3.0 * floor);
  std::string csv = "n,ks_two_sample,noise_floor\n";
  json ks = json::object();
  double worst = 0.0;
  for (const long long n : ex.n_list) {
    const double d = ks_two_sample(dyn.at(n).values, iid.at(n).values);
    csv += fmt(n) + "," + fmt(d) + "," + fmt(floor) + "\n";
    ks[fmt(n)] = d;
    worst = std::max(worst, d);
    std::cout << "equivalence: n=" << fmt(n) << " ks=" << fmt(d) << "\n";
  }
  write_text(ctx, "equivalence.csv", csv);
  write_text(ctx, "plot.gp",
             gp_prelude() +
                 "set logscale x\nset xlabel 'n'\n"
                 "plot 'equivalence.csv' using 1:2 with linespoints title 'two-sample KS', "
                 "'equivalence.csv' using 1:3 with lines title 'noise floor'\n");
  const bool pass = worst <= threshold;
  ctx.verdicts["ks"] = ks;
  ctx.verdicts["threshold"] = threshold;
  ctx.verdicts["pass"] = pass;
  ctx.verdicts["plan_hash"] = hex64(dyn.begin()->second.plan_hash);
  std::cout << "equivalence: " << (pass ? "pass" : "fail") << " (max ks=" << fmt(worst)
            << ", threshold=" << fmt(threshold) << ")\n";
  write_report(ctx);
  return pass ? 0 : 1;
}

int cmd_coboundary(RunContext& ctx, const Experiment& ex) {
  const auto rep = coboundary_detect(ex.model, ex.obs);
  ctx.verdicts["verdict"] = coboundary_verdict_name(rep.verdict);
  ctx.verdicts["sigma2"] = rep.sigma2;
  ctx.verdicts["c_estimate"] = rep.c_estimate;
  ctx.verdicts["range_stat"] = rep.range_stat;
  ctx.verdicts["growth_ratio"] = rep.growth_ratio;
  std::cout << "coboundary: " << coboundary_verdict_name(rep.verdict)
            << " sigma2=" << fmt(rep.sigma2) << " c=" << fmt(rep.c_estimate) << "\n";
  write_report(ctx);
  return rep.verdict == CoboundaryVerdict::coboundary ? 0 : 1;
}

int resolve_workers(int flag_threads, int config_workers) {
  if (flag_threads > 0) return flag_threads;
  if (const char* env = std::getenv("GML_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return config_workers > 0 ? config_workers : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Limit-theorem workbench for Gibbs-Markov chains"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 0;
  long long samples = 0;
  std::vector<long long> n_flag;
  double t_min = 0.0, t_max = 0.0;
  int t_steps = 0;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* samples_opt = nullptr;
  CLI::Option* n_opt = nullptr;
  CLI::Option* tmin_opt = nullptr;
  CLI::Option* tmax_opt = nullptr;
  CLI::Option* tsteps_opt = nullptr;

  const std::vector<std::pair<std::string, std::string>> subs = {
      {"classify", "classify the observable's domain of attraction"},
      {"norming", "print and tabulate the norming sequences A_n, B_n"},
      {"simulate", "Monte-Carlo ECDFs of normalized Birkhoff sums"},
      {"spectrum", "perturbed transfer-operator eigendata over a t grid"},
      {"expansion", "fit the residual order of the eigenvalue expansion"},
      {"berry-esseen", "Kolmogorov-distance decay rate against the CLT"},
      {"equivalence", "two-sample test: Birkhoff sums vs i.i.d. sums"},
      {"coboundary", "degenerate-variance dichotomy check"},
  };
  for (const auto& [name, desc] : subs) {
    auto* s = app.add_subcommand(name, desc);
    s->add_option("--config", config_path, "experiment config (JSON)")->required();
    s->add_option("--out", out_dir, "output directory");
    seed_opt = s->add_option("--seed", seed, "RNG seed override");
    s->add_option("--threads", threads, "worker threads (or GML_THREADS)");
    samples_opt = s->add_option("--samples", samples, "Monte-Carlo sample count override");
    n_opt = s->add_option("--n", n_flag, "horizon list override")->delimiter(',');
    tmin_opt = s->add_option("--t-min", t_min, "left end of the t grid");
    tmax_opt = s->add_option("--t-max", t_max, "right end of the t grid");
    tsteps_opt = s->add_option("--t-steps", t_steps, "t grid size");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  auto* sub = app.get_subcommands().front();
  const auto given = [&sub](const char* flag) { return sub->count(flag) > 0; };

  Experiment ex;
  RunContext ctx;
  try {
    std::string raw;
    ex = load_config(config_path, &raw);
    ctx.command = command;
    ctx.config_path = config_path;
    ctx.config_hash = fnv1a(raw);
    if (given("--seed")) ex.seed = seed;
    if (given("--samples")) ex.samples = samples;
    if (given("--n")) ex.n_list = n_flag;
    ex.workers = resolve_workers(given("--threads") ? threads : 0, ex.workers);
    ctx.seed = ex.seed;
    ctx.out_dir = out_dir;

    if (ex.samples < 100) bad_config("--samples must be at least 100");
    for (std::size_t i = 0; i < ex.n_list.size(); ++i) {
      if (ex.n_list[i] <= 0 || (i > 0 && ex.n_list[i] <= ex.n_list[i - 1])) {
        bad_config("horizons must be positive and strictly increasing");
      }
    }
    std::error_code fs_err;
    fs::create_directories(ctx.out_dir, fs_err);
    if (fs_err) bad_config("cannot create output directory " + ctx.out_dir.string());
  } catch (const ConfigError& e) {
    std::cerr << "gml: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "gml: " << e.what() << "\n";
    return 2;
  }

  try {
    if (command == "classify") {
      const int rc = cmd_classify(ctx, ex);
      write_report(ctx);
      return rc;
    }
    if (command == "norming") return cmd_norming(ctx, ex);
    if (command == "simulate") return cmd_simulate(ctx, ex);
    if (command == "spectrum") {
      const double lo = given("--t-min") ? t_min : -1.0;
      const double hi = given("--t-max") ? t_max : 1.0;
      const int steps = given("--t-steps") ? t_steps : 201;
      return cmd_spectrum(ctx, ex, linear_grid(lo, hi, steps));
    }
    if (command == "expansion") {
      const double lo = given("--t-min") ? t_min : 1e-3;
      const double hi = given("--t-max") ? t_max : 1e-1;
      const int steps = given("--t-steps") ? t_steps : 41;
      return cmd_expansion(ctx, ex, log_grid(lo, hi, steps));
    }
    if (command == "berry-esseen") return cmd_berry_esseen(ctx, ex);
    if (command == "equivalence") return cmd_equivalence(ctx, ex);
    if (command == "coboundary") return cmd_coboundary(ctx, ex);
    std::cerr << "gml: unknown subcommand " << command << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "gml: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "gml: inconclusive: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "gml: " << e.what() << "\n";
    return 2;
  }
}
