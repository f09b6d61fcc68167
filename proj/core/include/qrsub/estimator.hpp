#pragma once

#include "qrsub/dataset.hpp"
#include "qrsub/qrsolve.hpp"
#include "qrsub/rng.hpp"
#include "qrsub/subsample.hpp"
#include "qrsub/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qrsub {

struct PilotResult {
  Vector beta0;
  std::vector<Index> indices;
  Vector pilot_pi;  // 1/N for every pilot row
  std::optional<DnEstimate> dn;
};

// Uniform with-replacement pilot of n0 rows, fitted with equal weights.
PilotResult pilot(const Dataset& data, Index n0, double tau, Engine& eng, bool estimate_density,
                  const SolveOptions& solve_options = {});

struct SubsampleFit {
  std::vector<Index> indices;
  QuantileFit fit;
};

// Draws n rows from the plan and minimizes the inverse-probability
// weighted check loss, weights 1 / (n N pi_i).
SubsampleFit fit_subsample(const Dataset& data, const SamplingPlan& plan, Index n, double tau,
                           Engine& eng, const SolveOptions& solve_options = {});

// Builds the plan for a method from the pilot (Lopt/Aopt need beta0; Aopt
// also needs pilot.dn).
SamplingPlan build_plan(const Dataset& data, Method method, double tau, const PilotResult* pilot);

struct TwoStepResult {
  PilotResult pilot;
  SamplingPlan plan;
  SubsampleFit second;
  // Aopt only: second-step Gram estimate and the pilot/second-step
  // aggregate (n0 D0 + n D1)^{-1} (n0 D0 beta0 + n D1 beta).
  std::optional<DnEstimate> dn_second;
  std::optional<Vector> aggregated;

  const QuantileFit& fit() const noexcept { return second.fit; }
};

// Pilot on stream kPilot, second step on stream 0. The pilot rows are not
// part of the second-step fit.
TwoStepResult two_step(const Dataset& data, Index n0, Index n, double tau, Method method,
                       RngKey key, const SolveOptions& solve_options = {});

Vector aggregate_aopt(const Vector& beta0, const DnEstimate& dn0, const Vector& beta_second,
                      const DnEstimate& dn1, Index n0, Index n);

struct IterativeEstimate {
  Vector beta_pooled;
  Matrix batch_betas;  // B x p
  std::optional<SquareMatrix> vcov;
  EffectiveRatio r_ef;
  Index n0 = 0;
  Index n = 0;
  Index batches = 0;
  double tau = 0.5;
  Method method = Method::Lopt;
  std::optional<Vector> pilot_beta;
  std::vector<std::string> warnings;
  double plan_ms = 0.0;
  double solve_ms_total = 0.0;
};

struct IterativeOptions {
  Index n0 = 1000;
  Index n = 1000;
  Index batches = 10;
  double tau = 0.5;
  Method method = Method::Lopt;
  unsigned threads = 1;
  SolveOptions solve;
};

// Pooled mean of the batch estimates and the spread-based covariance
// (r_ef B (B-1))^{-1} sum_b (beta_b - mean)(beta_b - mean)'. B = 1 leaves
// vcov empty.
IterativeEstimate pool_batches(const Matrix& batch_betas, const EffectiveRatio& r_ef);

// One pilot, then B batches drawn from the same plan. Batch b draws from
// stream b of key, so the thread count does not change the result.
IterativeEstimate iterative(const Dataset& data, const IterativeOptions& options, RngKey key);

// As iterative, with a prebuilt plan (no pilot is drawn).
IterativeEstimate iterative_with_plan(const Dataset& data, const SamplingPlan& plan,
                                      const IterativeOptions& options, RngKey key);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

// Normal-theory intervals beta_j +- z_{(1+level)/2} sqrt(vcov_jj).
std::vector<Interval> confidence_intervals(const IterativeEstimate& est, double level);

double normal_quantile(double p);

struct VarianceDiagnostics {
  SquareMatrix v_pi;
  SquareMatrix v_explicit;
  std::optional<SquareMatrix> sandwich;
};

// v_pi = sum_i psi_i^2 x_i x_i' / (N^2 pi_i). v_explicit is the closed
// form of the optimal plan's middle matrix: the L-optimal form without dn,
// the A-optimal (D-weighted norms) form with it. sandwich = D^{-1} v_pi
// D^{-1} when dn is given.
VarianceDiagnostics variance_diagnostics(const Dataset& data, const Vector& beta,
                                         const SamplingPlan& plan,
                                         const std::optional<DnEstimate>& dn = std::nullopt);

}  // namespace qrsub
