#pragma once

#include "qrsub/datagen.hpp"
#include "qrsub/dataset.hpp"
#include "qrsub/estimator.hpp"
#include "qrsub/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace qrsub {

enum class BenchMethod { Uniform, Lopt, Aopt, Universal, DivideConquer, FullData };

std::string_view to_string(BenchMethod m) noexcept;
BenchMethod parse_bench_method(std::string_view s);

// One simulation grid: every (tau, method, n, B) combination is a cell,
// each evaluated on `replicates` fresh synthetic datasets.
struct ExperimentConfig {
  Index n_rows = 100000;
  Index p = 7;
  CovariateLaw covariate_law = CovariateLaw::MvNormal;
  ErrorLaw error_law = ErrorLaw::Normal;
  std::vector<double> taus{0.5};
  Index n0 = 1000;
  std::vector<Index> ns{1000};
  std::vector<Index> bs{10};
  Index replicates = 100;
  std::vector<BenchMethod> methods{BenchMethod::Uniform, BenchMethod::Lopt};
  std::uint64_t base_seed = 1;
  double noise_scale = 1.0;
  double level = 0.95;
  bool add_intercept = false;
  Index full_data_cap = 200000;
  unsigned threads = 1;

  void validate() const;
};

struct CellResult {
  BenchMethod method = BenchMethod::Lopt;
  double tau = 0.5;
  Index n = 0;
  Index batches = 0;
  Index replicates = 0;
  double empirical_mse = 0.0;
  double mean_estimated_mse = 0.0;  // NaN when the method has no variance estimate
  std::vector<double> coverage;     // per coefficient; NaN entries likewise
  double mean_runtime_ms = 0.0;
  bool failed = false;
  std::string error;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<CellResult> cells;
  std::string version;
  std::string rng;
};

// Replicate s uses dataset seed base_seed + s. Replicates run on a worker
// pool; aggregation is in replicate order. A cell with any failed
// replicate is marked failed; other cells are unaffected.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Requires Lopt and Universal among the methods; the universal plan of a
// replicate is built once and shared by every tau.
ExperimentResult multi_tau_sweep(const ExperimentConfig& config);

// Unweighted fits on B contiguous blocks, averaged. The last block takes
// the remainder rows.
Vector divide_and_conquer(const Dataset& data, Index batches, double tau,
                          const SolveOptions& solve_options = {});

// Full-data fit with weights 1/N.
QuantileFit full_data_fit(const Dataset& data, double tau, const SolveOptions& solve_options = {});

enum class OutputFormat { Csv, Json };

// Columns: method,tau,n,B,S,mse,emse,coverage_1..coverage_p,runtime_ms.
std::string result_to_csv(const ExperimentResult& result);
std::string result_to_json(const ExperimentResult& result);
ExperimentResult result_from_json(std::string_view text);
void emit(const ExperimentResult& result, OutputFormat format, const std::filesystem::path& path);

}  // namespace qrsub
