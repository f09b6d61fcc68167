#include "qrsub/experiment.hpp"

#include "qrsub/errors.hpp"
#include "qrsub/version.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <thread>

namespace qrsub {

std::string_view to_string(BenchMethod m) noexcept {
  switch (m) {
    case BenchMethod::Uniform: return "uniform";
    case BenchMethod::Lopt: return "lopt";
    case BenchMethod::Aopt: return "aopt";
    case BenchMethod::Universal: return "universal";
    case BenchMethod::DivideConquer: return "dc";
    case BenchMethod::FullData: return "full";
  }
  return "?";
}

BenchMethod parse_bench_method(std::string_view s) {
  if (s == "uniform") return BenchMethod::Uniform;
  if (s == "lopt") return BenchMethod::Lopt;
  if (s == "aopt") return BenchMethod::Aopt;
  if (s == "universal") return BenchMethod::Universal;
  if (s == "dc" || s == "divide_conquer" || s == "divideconquer") return BenchMethod::DivideConquer;
  if (s == "full" || s == "fulldata" || s == "full_data") return BenchMethod::FullData;
  throw InvalidArgument("unknown benchmark method '" + std::string(s) + "'");
}

void ExperimentConfig::validate() const {
  if (n_rows < 1 || p < 1 || n0 < 1 || replicates < 1) {
    throw InvalidArgument("experiment sizes must be positive");
  }
  if (add_intercept && p < 2) throw InvalidArgument("p must be at least 2 with an intercept");
  if (taus.empty() || ns.empty() || bs.empty() || methods.empty()) {
    throw InvalidArgument("tau, n, B and methods lists must be non-empty");
  }
  for (double t : taus) {
    if (!(t > 0.0 && t < 1.0)) throw InvalidArgument("tau must lie strictly inside (0, 1)");
  }
  for (Index n : ns) {
    if (n < p + 1) throw InvalidArgument("every n must be at least p + 1");
  }
  for (Index b : bs) {
    if (b < 1) throw InvalidArgument("every B must be at least 1");
  }
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("level must lie in (0, 1)");
  if (!(noise_scale >= 0.0)) throw InvalidArgument("noise_scale must be non-negative");
  const bool uses_pilot = std::any_of(methods.begin(), methods.end(), [](BenchMethod m) {
    return m == BenchMethod::Lopt || m == BenchMethod::Aopt;
  });
  if (uses_pilot && n0 < p + 1) throw InvalidArgument("n0 must be at least p + 1");
  const bool full = std::find(methods.begin(), methods.end(), BenchMethod::FullData) != methods.end();
  if (full && n_rows > full_data_cap) {
    throw InvalidArgument("full-data fits are capped at N = " + std::to_string(full_data_cap));
  }
}

Vector divide_and_conquer(const Dataset& data, Index batches, double tau,
                          const SolveOptions& solve_options) {
  const Index big_n = data.n_rows();
  if (batches < 1 || batches > big_n) throw InvalidArgument("B must lie in [1, N]");
  const Index block = big_n / batches;
  Vector total = Vector::Zero(data.n_cols());
  for (Index b = 0; b < batches; ++b) {
    const Index start = b * block;
    const Index rows = (b == batches - 1) ? big_n - start : block;
    WeightedProblem problem;
    problem.x = data.x.middleRows(start, rows);
    problem.y = data.y.segment(start, rows);
    problem.weights = Vector::Constant(rows, 1.0 / static_cast<double>(rows));
    problem.tau = tau;
    total += solve(problem, solve_options).beta;
  }
  return total / static_cast<double>(batches);
}

QuantileFit full_data_fit(const Dataset& data, double tau, const SolveOptions& solve_options) {
  WeightedProblem problem;
  problem.x = data.x;
  problem.y = data.y;
  problem.weights = Vector::Constant(data.n_rows(), 1.0 / static_cast<double>(data.n_rows()));
  problem.tau = tau;
  return solve(problem, solve_options);
}

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct CellSpec {
  BenchMethod method;
  std::size_t tau_index;
  Index n;
  Index batches;
};

struct Outcome {
  double sq_err = kNaN;
  double est_mse = kNaN;
  std::vector<double> hits;
  double runtime_ms = 0.0;
  std::optional<std::string> error;
};

std::vector<CellSpec> enumerate_cells(const ExperimentConfig& cfg) {
  std::vector<CellSpec> cells;
  for (std::size_t t = 0; t < cfg.taus.size(); ++t) {
    for (BenchMethod m : cfg.methods) {
      switch (m) {
        case BenchMethod::FullData:
          cells.push_back({m, t, cfg.n_rows, 1});
          break;
        case BenchMethod::DivideConquer:
          for (Index b : cfg.bs) cells.push_back({m, t, cfg.n_rows / b, b});
          break;
        default:
          for (Index n : cfg.ns) {
            for (Index b : cfg.bs) cells.push_back({m, t, n, b});
          }
      }
    }
  }
  return cells;
}

Method sampling_method(BenchMethod m) {
  switch (m) {
    case BenchMethod::Uniform: return Method::Uniform;
    case BenchMethod::Lopt: return Method::Lopt;
    case BenchMethod::Aopt: return Method::Aopt;
    case BenchMethod::Universal: return Method::Universal;
    default: break;
  }
  throw InvalidArgument("not a subsampling method");
}

class ReplicateRunner {
 public:
  ReplicateRunner(const ExperimentConfig& cfg, const std::vector<CellSpec>& cells)
      : cfg_(cfg), cells_(cells) {}

  void run(Index s, std::vector<std::vector<Outcome>>& outcomes) const {
    SyntheticSpec spec;
    spec.n_rows = cfg_.n_rows;
    spec.covariate_law = cfg_.covariate_law;
    spec.error_law = cfg_.error_law;
    spec.tau = cfg_.taus.front();
    spec.beta_true = Vector::Ones(cfg_.p);
    spec.seed = cfg_.base_seed + static_cast<std::uint64_t>(s);
    spec.add_intercept = cfg_.add_intercept;
    spec.noise_scale = cfg_.noise_scale;

    const auto us = static_cast<std::size_t>(s);
    LatentSample latent;
    try {
      latent = draw_latent(spec);
    } catch (const std::exception& e) {
      for (auto& cell : outcomes) cell[us].error = e.what();
      return;
    }

    std::optional<SamplingPlan> universal;
    for (std::size_t t = 0; t < cfg_.taus.size(); ++t) {
      const double tau = cfg_.taus[t];
      const Dataset data = realize(latent, tau);
      for (std::size_t c = 0; c < cells_.size(); ++c) {
        if (cells_[c].tau_index != t) continue;
        Outcome& out = outcomes[c][us];
        const auto t0 = Clock::now();
        try {
          run_cell(cells_[c], c, data, tau, spec, universal, out);
        } catch (const std::exception& e) {
          out.error = e.what();
        }
        out.runtime_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      }
    }
  }

 private:
  void run_cell(const CellSpec& cell, std::size_t cell_index, const Dataset& data, double tau,
                const SyntheticSpec& spec, std::optional<SamplingPlan>& universal,
                Outcome& out) const {
    const Vector& truth = spec.beta_true;
    const RngKey key{spec.seed, static_cast<std::uint64_t>(cell_index) + 1};
    switch (cell.method) {
      case BenchMethod::FullData: {
        out.sq_err = (full_data_fit(data, tau).beta - truth).squaredNorm();
        return;
      }
      case BenchMethod::DivideConquer: {
        out.sq_err = (divide_and_conquer(data, cell.batches, tau) - truth).squaredNorm();
        return;
      }
      default: break;
    }

    IterativeOptions opts;
    opts.n0 = cfg_.n0;
    opts.n = cell.n;
    opts.batches = cell.batches;
    opts.tau = tau;
    opts.method = sampling_method(cell.method);
    IterativeEstimate est;
    if (cell.method == BenchMethod::Universal) {
      if (!universal) universal = pi_universal(data);
      SamplingPlan plan = *universal;
      plan.tau = tau;
      est = iterative_with_plan(data, plan, opts, key);
    } else {
      est = iterative(data, opts, key);
    }
    out.sq_err = (est.beta_pooled - truth).squaredNorm();
    if (est.vcov) {
      out.est_mse = est.vcov->trace();
      const auto ci = confidence_intervals(est, cfg_.level);
      out.hits.resize(ci.size());
      for (std::size_t j = 0; j < ci.size(); ++j) {
        const double b = truth(static_cast<Index>(j));
        out.hits[j] = (ci[j].lower <= b && b <= ci[j].upper) ? 1.0 : 0.0;
      }
    }
  }

  const ExperimentConfig& cfg_;
  const std::vector<CellSpec>& cells_;
};

CellResult aggregate(const CellSpec& spec, const ExperimentConfig& cfg,
                     const std::vector<Outcome>& outcomes) {
  CellResult cell;
  cell.method = spec.method;
  cell.tau = cfg.taus[spec.tau_index];
  cell.n = spec.n;
  cell.batches = spec.batches;
  cell.replicates = static_cast<Index>(outcomes.size());
  cell.coverage.assign(static_cast<std::size_t>(cfg.p), kNaN);

  for (std::size_t s = 0; s < outcomes.size(); ++s) {
    if (outcomes[s].error) {
      cell.failed = true;
      cell.error = "replicate " + std::to_string(s) + ": " + *outcomes[s].error;
      break;
    }
  }
  double mse = 0.0, emse = 0.0, runtime = 0.0;
  std::vector<double> cover(static_cast<std::size_t>(cfg.p), 0.0);
  bool has_var = !outcomes.empty();
  for (const auto& o : outcomes) {
    mse += o.sq_err;
    emse += o.est_mse;
    runtime += o.runtime_ms;
    if (o.hits.size() != cover.size()) {
      has_var = false;
    } else {
      for (std::size_t j = 0; j < cover.size(); ++j) cover[j] += o.hits[j];
    }
  }
  const double s = static_cast<double>(outcomes.size());
  cell.mean_runtime_ms = runtime / s;
  if (cell.failed) {
    cell.empirical_mse = kNaN;
    cell.mean_estimated_mse = kNaN;
    return cell;
  }
  cell.empirical_mse = mse / s;
  cell.mean_estimated_mse = has_var ? emse / s : kNaN;
  if (has_var) {
    for (std::size_t j = 0; j < cover.size(); ++j) cell.coverage[j] = cover[j] / s;
  }
  return cell;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto cells = enumerate_cells(config);
  const auto reps = static_cast<std::size_t>(config.replicates);
  std::vector<std::vector<Outcome>> outcomes(cells.size(), std::vector<Outcome>(reps));

  const ReplicateRunner runner(config, cells);
  unsigned workers = config.threads == 0 ? std::thread::hardware_concurrency() : config.threads;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(reps)));
  if (workers == 1) {
    for (Index s = 0; s < config.replicates; ++s) runner.run(s, outcomes);
  } else {
    std::atomic<Index> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (Index s = next++; s < config.replicates; s = next++) runner.run(s, outcomes);
      });
    }
  }

  ExperimentResult result;
  result.config = config;
  result.version = std::string(kVersion);
  result.rng = std::string(kRngName);
  result.cells.reserve(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    result.cells.push_back(aggregate(cells[c], config, outcomes[c]));
  }
  return result;
}

ExperimentResult multi_tau_sweep(const ExperimentConfig& config) {
  auto has = [&](BenchMethod m) {
    return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end();
  };
  if (!has(BenchMethod::Lopt) || !has(BenchMethod::Universal)) {
    throw InvalidArgument("a multi-quantile sweep compares lopt against universal");
  }
  return run_experiment(config);
}

}  // namespace qrsub
