#pragma once

#include "qrsub/types.hpp"

#include <optional>

namespace qrsub {

// min_beta sum_i w_i * rho_tau(y_i - beta' x_i).
struct WeightedProblem {
  Matrix x;
  Vector y;
  Vector weights;
  double tau = 0.5;

  Index n() const noexcept { return x.rows(); }
  Index p() const noexcept { return x.cols(); }

  // Shapes agree, n >= 1, weights finite and > 0, tau in (0, 1).
  void validate() const;
};

struct SolveOptions {
  double tol = 1e-8;
  // Bound on majorize-minimize sweeps. The vertex polish that follows has
  // its own bound, proportional to n.
  int max_iter = 200;
  std::optional<Vector> init;
};

struct QuantileFit {
  Vector beta;
  double tau = 0.5;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double subgradient_norm = 0.0;
};

// rho_tau(u) = u * (tau - I(u < 0)).
inline double check_loss(double u, double tau) noexcept {
  return u * (tau - (u < 0.0 ? 1.0 : 0.0));
}

double objective(const WeightedProblem& problem, const Vector& beta);

// Smallest achievable ||sum_i w_i psi_i x_i||_inf at beta, where psi_i is
// tau - I(r_i < 0) off the zero residuals and is free in [tau - 1, tau]
// on them. Zero at an exact minimizer.
double subgradient_norm(const WeightedProblem& problem, const Vector& beta);

// Certification threshold used by solve: tol * max_i w_i ||x_i||_inf.
double certification_threshold(const WeightedProblem& problem, double tol);

// Throws RankDeficient when the weight-scaled design is numerically rank
// deficient (smallest singular value < 1e-10 * largest) or n < p.
void check_rank(const WeightedProblem& problem);

// Majorize-minimize warm start (reweighted least squares on the smoothed
// check loss) followed by a vertex polish: a basis of p observations is
// fitted exactly and exchanged along descent edges until none remains,
// then the subgradient condition is checked. Returns converged = false
// with the best iterate when certification fails.
QuantileFit solve(const WeightedProblem& problem, const SolveOptions& options = {});

}  // namespace qrsub
