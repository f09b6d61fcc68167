#include "qrsub_cli/cli.hpp"

#include "qrsub/datagen.hpp"
#include "qrsub/dataset.hpp"
#include "qrsub/errors.hpp"
#include "qrsub/estimator.hpp"
#include "qrsub/experiment.hpp"
#include "qrsub/version.hpp"
#include "qrsub_cli/config_file.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <thread>

namespace qrsub::cli {

namespace {

using json = nlohmann::ordered_json;

struct DataArgs {
  std::string input;
  std::string response = "y";
  bool no_header = false;
  bool intercept = false;
};

struct FitArgs {
  DataArgs data;
  std::string method = "lopt";
  std::optional<double> tau;
  Index n0 = 1000;
  Index n = 1000;
  Index batches = 10;
  std::optional<std::uint64_t> seed;
  double level = 0.95;
  std::string out;
  std::optional<unsigned> threads;
};

struct PlanArgs {
  DataArgs data;
  std::string method = "lopt";
  std::optional<double> tau;
  std::string beta;
  Index n0 = 1000;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct RunArgs {
  std::string config;
  std::string out;
  std::string format;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Logger {
 public:
  Logger(std::ostream& err, bool quiet) : err_(err), quiet_(quiet) {}
  void info(const std::string& msg) const {
    if (!quiet_) err_ << msg << "\n";
  }

 private:
  std::ostream& err_;
  bool quiet_;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--input", a.input, "CSV file with one row per observation")->required();
  cmd->add_option("--response", a.response, "response column: header name or 0-based index")
      ->capture_default_str();
  cmd->add_flag("--no-header", a.no_header, "first line holds data, not column names");
  cmd->add_flag("--intercept", a.intercept, "prepend a column of ones to the design");
}

Dataset load(const DataArgs& a) {
  CsvOptions opts;
  opts.has_header = !a.no_header;
  opts.add_intercept = a.intercept;
  Index index = 0;
  const auto* end = a.response.data() + a.response.size();
  const auto [ptr, ec] = std::from_chars(a.response.data(), end, index);
  const bool numeric = ec == std::errc{} && ptr == end;
  if (numeric && a.no_header) {
    opts.response = index;
    return load_csv(a.input, opts);
  }
  opts.response = a.response;
  if (!numeric) return load_csv(a.input, opts);
  // A numeric response with a header: prefer a column of that name, else the index.
  try {
    return load_csv(a.input, opts);
  } catch (const InvalidArgument&) {
    opts.response = index;
    return load_csv(a.input, opts);
  }
}

unsigned resolve_threads(std::optional<unsigned> flag) {
  if (flag) return std::max(1u, *flag);
  if (const char* env = std::getenv("QRS_THREADS")) {
    unsigned v = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v == 0) {
      throw UsageError("QRS_THREADS must be a positive integer");
    }
    return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void require_tau(const std::optional<double>& tau) {
  if (!tau) throw UsageError("--tau is required");
  if (!(*tau > 0.0 && *tau < 1.0)) throw UsageError("--tau must lie strictly inside (0, 1)");
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("error writing '" + path + "'");
}

json matrix_json(const SquareMatrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

int cmd_fit(const FitArgs& a, std::ostream& out, const Logger& log) {
  require_tau(a.tau);
  if (a.n0 < 1 || a.n < 1 || a.batches < 1) throw UsageError("--n0, --n and --B must be positive");
  if (!(a.level > 0.0 && a.level < 1.0)) throw UsageError("--level must lie strictly inside (0, 1)");
  IterativeOptions opts;
  try {
    opts.method = parse_method(a.method);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  opts.tau = *a.tau;
  opts.n0 = a.n0;
  opts.n = a.n;
  opts.batches = a.batches;
  opts.threads = resolve_threads(a.threads);

  const Dataset data = load(a.data);
  const Index p = data.n_cols();
  if (a.n < p + 1) throw UsageError("--n must be at least p + 1 = " + std::to_string(p + 1));
  const bool uses_pilot = opts.method == Method::Lopt || opts.method == Method::Aopt;
  if (uses_pilot && a.n0 < p + 1) throw UsageError("--n0 must be at least p + 1 = " + std::to_string(p + 1));

  const std::uint64_t seed = a.seed ? *a.seed : entropy_seed();
  if (!a.seed) log.info("seed drawn from entropy: " + std::to_string(seed));
  const auto est = iterative(data, opts, RngKey{seed, 0});
  for (const auto& w : est.warnings) log.info("warning: " + w);

  json doc;
  doc["method"] = std::string(to_string(est.method));
  doc["tau"] = est.tau;
  doc["n0"] = est.n0;
  doc["n"] = est.n;
  doc["B"] = est.batches;
  doc["beta"] = vector_json(est.beta_pooled);
  doc["vcov"] = est.vcov ? matrix_json(*est.vcov) : json(nullptr);
  doc["r_ef"] = est.r_ef.value;
  doc["r_ef_raw"] = est.r_ef.raw;
  doc["level"] = a.level;
  if (est.vcov) {
    json ci = json::array();
    for (const auto& iv : confidence_intervals(est, a.level)) ci.push_back({iv.lower, iv.upper});
    doc["ci"] = std::move(ci);
  } else {
    doc["ci"] = nullptr;
  }
  doc["seed"] = seed;
  doc["warnings"] = est.warnings;
  doc["version"] = std::string(kVersion);
  doc["timings"] = {{"plan_ms", est.plan_ms}, {"solve_ms_total", est.solve_ms_total}};
  write_text(a.out, doc.dump(2) + "\n", out);
  return kOk;
}

Vector parse_beta(const std::string& text) {
  std::vector<double> values;
  std::string_view s(text);
  while (true) {
    const auto comma = s.find(',');
    std::string_view item = s.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size()) {
      throw UsageError("--beta must be a comma-separated list of numbers");
    }
    values.push_back(v);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

int cmd_plan(const PlanArgs& a, std::ostream& out, const Logger& log) {
  Method method{};
  try {
    method = parse_method(a.method);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const bool optimal = method == Method::Lopt || method == Method::Aopt;
  if (optimal) require_tau(a.tau);
  std::optional<Vector> beta;
  if (!a.beta.empty()) beta = parse_beta(a.beta);
  if (optimal && !beta && a.n0 < 1) throw UsageError("--n0 must be positive");

  const Dataset data = load(a.data);
  if (beta && beta->size() != data.n_cols()) {
    throw UsageError("--beta has " + std::to_string(beta->size()) + " entries but the design has " +
                     std::to_string(data.n_cols()) + " columns");
  }

  SamplingPlan plan;
  const double tau = a.tau.value_or(0.5);
  if (!optimal) {
    plan = build_plan(data, method, tau, nullptr);
  } else if (beta) {
    PilotResult given;
    given.beta0 = *beta;
    if (method == Method::Aopt) {
      const Index n_rows = data.n_rows();
      given.dn = estimate_dn(data.x, residuals(data, *beta),
                             Vector::Constant(n_rows, 1.0 / static_cast<double>(n_rows)), n_rows);
    }
    plan = build_plan(data, method, tau, &given);
  } else {
    const std::uint64_t seed = a.seed ? *a.seed : entropy_seed();
    if (!a.seed) log.info("seed drawn from entropy: " + std::to_string(seed));
    Engine eng = make_engine(RngKey{seed, 0}, streams::kPilot);
    const auto pilot_result = pilot(data, a.n0, tau, eng, method == Method::Aopt);
    plan = build_plan(data, method, tau, &pilot_result);
  }
  plan.validate();

  std::string text = "row_index,pi\n";
  char buf[64];
  for (Index i = 0; i < plan.pi.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g\n", static_cast<long long>(i), plan.pi(i));
    text += buf;
  }
  write_text(a.out, text, out);
  return kOk;
}

ExperimentConfig load_config(const RunArgs& a, bool* sweep, const Logger& log) {
  ExperimentConfig config;
  const bool seeded = apply_config(read_config_file(a.config), config, sweep);
  if (a.seed) {
    config.base_seed = *a.seed;
  } else if (!seeded) {
    config.base_seed = entropy_seed();
    log.info("seed drawn from entropy: " + std::to_string(config.base_seed));
  }
  try {
    config.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
  return config;
}

int cmd_simulate(const RunArgs& a, std::ostream& out, const Logger& log) {
  const ExperimentConfig config = load_config(a, nullptr, log);
  SyntheticSpec spec;
  spec.n_rows = config.n_rows;
  spec.covariate_law = config.covariate_law;
  spec.error_law = config.error_law;
  spec.tau = config.taus.front();
  spec.beta_true = Vector::Ones(config.p);
  spec.seed = config.base_seed;
  spec.add_intercept = config.add_intercept;
  spec.noise_scale = config.noise_scale;
  const auto synthetic = generate(spec);
  save_csv(synthetic.data, a.out);
  out << "rows,cols,covariate_law,error_law,tau,seed,path\n"
      << synthetic.data.n_rows() << "," << synthetic.data.n_cols() << ","
      << to_string(spec.covariate_law) << "," << to_string(spec.error_law) << "," << spec.tau << ","
      << spec.seed << "," << a.out << "\n";
  return kOk;
}

OutputFormat resolve_format(const RunArgs& a) {
  std::string f = a.format;
  if (f.empty()) {
    const auto dot = a.out.rfind('.');
    f = dot != std::string::npos && a.out.substr(dot) == ".json" ? "json" : "csv";
  }
  if (f == "csv") return OutputFormat::Csv;
  if (f == "json") return OutputFormat::Json;
  throw UsageError("--format must be csv or json");
}

void print_summary(const ExperimentResult& r, std::ostream& out) {
  out << "method     tau     n       B     S     mse           emse          runtime_ms\n";
  char buf[200];
  for (const auto& c : r.cells) {
    std::snprintf(buf, sizeof buf, "%-10s %-7.4g %-7lld %-5lld %-5lld %-13.6g %-13.6g %.3f%s\n",
                  std::string(to_string(c.method)).c_str(), c.tau, static_cast<long long>(c.n),
                  static_cast<long long>(c.batches), static_cast<long long>(c.replicates),
                  c.empirical_mse, c.mean_estimated_mse, c.mean_runtime_ms,
                  c.failed ? "  FAILED" : "");
    out << buf;
  }
}

int cmd_bench(const RunArgs& a, std::ostream& out, const Logger& log) {
  const OutputFormat format = resolve_format(a);
  bool sweep = false;
  ExperimentConfig config = load_config(a, &sweep, log);
  if (a.threads || !read_config_file(a.config).contains("threads")) {
    config.threads = resolve_threads(a.threads);
  }
  const auto result = sweep ? multi_tau_sweep(config) : run_experiment(config);
  for (const auto& c : result.cells) {
    if (c.failed) log.info("cell " + std::string(to_string(c.method)) + " failed: " + c.error);
  }
  emit(result, format, a.out);
  print_summary(result, out);
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal subsampling for quantile regression", "qrsub"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress log messages on stderr");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "estimate coefficients with iterative subsampling");
  add_data_options(fit_cmd, fit.data);
  fit_cmd->add_option("--method", fit.method, "uniform, lopt, aopt or universal")->capture_default_str();
  fit_cmd->add_option("--tau", fit.tau, "quantile level in (0, 1)");
  fit_cmd->add_option("--n0", fit.n0, "pilot subsample size")->capture_default_str();
  fit_cmd->add_option("--n", fit.n, "subsample size per batch")->capture_default_str();
  fit_cmd->add_option("--B", fit.batches, "number of batches")->capture_default_str();
  fit_cmd->add_option("--seed", fit.seed, "RNG seed (drawn from entropy when omitted)");
  fit_cmd->add_option("--level", fit.level, "confidence level")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "output path (stdout when omitted)");
  fit_cmd->add_option("--threads", fit.threads, "worker threads (QRS_THREADS fallback)");

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "export sampling probabilities as CSV");
  add_data_options(plan_cmd, plan.data);
  plan_cmd->add_option("--method", plan.method, "uniform, lopt, aopt or universal")->capture_default_str();
  plan_cmd->add_option("--tau", plan.tau, "quantile level in (0, 1)");
  plan_cmd->add_option("--beta", plan.beta, "comma-separated coefficients for the residuals");
  plan_cmd->add_option("--n0", plan.n0, "pilot size when --beta is omitted")->capture_default_str();
  plan_cmd->add_option("--seed", plan.seed, "RNG seed for the pilot");
  plan_cmd->add_option("--out", plan.out, "output path (stdout when omitted)");

  RunArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "write a synthetic dataset");
  sim_cmd->add_option("--config", sim.config, "key = value config file")->required();
  sim_cmd->add_option("--out", sim.out, "CSV output path")->required();
  sim_cmd->add_option("--seed", sim.seed, "overrides base_seed");

  RunArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "run a simulation experiment");
  bench_cmd->add_option("--config", bench.config, "key = value config file")->required();
  bench_cmd->add_option("--out", bench.out, "result path")->required();
  bench_cmd->add_option("--format", bench.format, "csv or json (default from extension)");
  bench_cmd->add_option("--seed", bench.seed, "overrides base_seed");
  bench_cmd->add_option("--threads", bench.threads, "worker threads (QRS_THREADS fallback)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name());
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  const Logger log(err, quiet);
  try {
    if (*fit_cmd) return cmd_fit(fit, out, log);
    if (*plan_cmd) return cmd_plan(plan, out, log);
    if (*sim_cmd) return cmd_simulate(sim, out, log);
    if (*bench_cmd) return cmd_bench(bench, out, log);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    if (!subs.empty()) err << subs.front()->help();
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace qrsub::cli
