#include "qrsub/qrsolve.hpp"

#include "qrsub/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace qrsub {

void WeightedProblem::validate() const {
  if (x.rows() < 1 || x.cols() < 1) throw ShapeError("problem has an empty design");
  if (y.size() != x.rows() || weights.size() != x.rows()) {
    throw ShapeError("design, response and weights disagree on n");
  }
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie strictly inside (0, 1)");
  if (!weights.allFinite() || (weights.array() <= 0.0).any()) {
    throw InvalidArgument("weights must be finite and positive");
  }
  if (!x.allFinite() || !y.allFinite()) throw InvalidArgument("problem has non-finite data");
}

double objective(const WeightedProblem& problem, const Vector& beta) {
  if (beta.size() != problem.p()) throw ShapeError("beta length does not match design");
  const Vector r = problem.y - problem.x * beta;
  double total = 0.0;
  for (Index i = 0; i < r.size(); ++i) total += problem.weights(i) * check_loss(r(i), problem.tau);
  return total;
}

double certification_threshold(const WeightedProblem& problem, double tol) {
  double scale = 0.0;
  for (Index i = 0; i < problem.n(); ++i) {
    scale = std::max(scale, problem.weights(i) * problem.x.row(i).cwiseAbs().maxCoeff());
  }
  return tol * scale;
}

void check_rank(const WeightedProblem& problem) {
  if (problem.n() < problem.p()) {
    throw RankDeficient("need n >= p, got n = " + std::to_string(problem.n()) +
                        ", p = " + std::to_string(problem.p()));
  }
  Eigen::MatrixXd scaled = problem.weights.cwiseSqrt().asDiagonal() * problem.x;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(scaled);
  const Index p = problem.p();
  Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(r);
  const auto& sv = svd.singularValues();
  if (!(sv(p - 1) >= 1e-10 * sv(0)) || sv(0) == 0.0) {
    throw RankDeficient("weighted design is rank deficient (singular value ratio " +
                        std::to_string(sv(0) > 0 ? sv(p - 1) / sv(0) : 0.0) + ")");
  }
}

namespace {

double response_scale(const Vector& y) {
  const double m = y.cwiseAbs().maxCoeff();
  return m > 0.0 ? m : 1.0;
}

// One-sided derivative of rho_tau at 0 in direction t.
double rho_slope_at_zero(double t, double tau) noexcept {
  return t >= 0.0 ? tau * t : (tau - 1.0) * t;
}

std::optional<Vector> weighted_least_squares(const WeightedProblem& pb) {
  const SquareMatrix gram = pb.x.transpose() * pb.weights.asDiagonal() * pb.x;
  const Vector rhs = pb.x.transpose() * pb.weights.cwiseProduct(pb.y);
  Eigen::LDLT<SquareMatrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  Vector beta = ldlt.solve(rhs);
  if (!beta.allFinite()) return std::nullopt;
  return beta;
}

struct WarmStart {
  Vector beta;
  double objective;
  int iterations;
};

// Majorize |r| by r^2 / (2 m) + m / 2 at the current residuals, m floored
// at delta; each sweep solves the resulting tilted weighted least squares.
WarmStart majorize_minimize(const WeightedProblem& pb, Vector beta, int max_iter) {
  const double delta = 1e-10 * response_scale(pb.y);
  const Vector tilt = (pb.tau - 0.5) * (pb.x.transpose() * pb.weights);

  WarmStart best{beta, objective(pb, beta), 0};
  double current = best.objective;
  Vector u(pb.n());
  int it = 0;
  for (; it < max_iter; ++it) {
    const Vector r = pb.y - pb.x * beta;
    for (Index i = 0; i < pb.n(); ++i) {
      u(i) = pb.weights(i) / (2.0 * std::max(std::abs(r(i)), delta));
    }
    const SquareMatrix gram = pb.x.transpose() * u.asDiagonal() * pb.x;
    const Vector rhs = pb.x.transpose() * u.cwiseProduct(pb.y) + tilt;
    Eigen::LDLT<SquareMatrix> ldlt(gram);
    if (ldlt.info() != Eigen::Success) break;
    Vector next = ldlt.solve(rhs);
    if (!next.allFinite()) break;
    const double value = objective(pb, next);
    beta = std::move(next);
    if (value < best.objective) {
      best.beta = beta;
      best.objective = value;
    }
    // The polish step finishes the job exactly; stop once progress stalls.
    if (current - value <= 1e-6 * (1.0 + std::abs(value))) {
      ++it;
      break;
    }
    current = value;
  }
  best.iterations = it;
  return best;
}

// Greedy pick of p linearly independent rows, smallest |residual| first.
std::vector<Index> initial_basis(const WeightedProblem& pb, const Vector& beta) {
  const Index n = pb.n();
  const Index p = pb.p();
  const Vector r = pb.y - pb.x * beta;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return std::abs(r(a)) < std::abs(r(b)); });

  std::vector<Index> basis;
  Eigen::MatrixXd ortho(p, p);
  for (Index i : order) {
    Eigen::VectorXd v = pb.x.row(i).transpose();
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    for (std::size_t k = 0; k < basis.size(); ++k) {
      v -= ortho.col(static_cast<Index>(k)).dot(v) * ortho.col(static_cast<Index>(k));
    }
    const double norm = v.norm();
    if (norm > 1e-9 * norm0) {
      ortho.col(static_cast<Index>(basis.size())) = v / norm;
      basis.push_back(i);
      if (static_cast<Index>(basis.size()) == p) break;
    }
  }
  if (static_cast<Index>(basis.size()) < p) {
    throw RankDeficient("could not find p independent observations");
  }
  return basis;
}

struct PolishResult {
  Vector beta;
  int pivots = 0;
  bool optimal = false;
};

// Exchange method on the vertices of the check-loss epigraph. At a basis h
// (p observations with zero residual) the edges are d = +-X_h^{-1} e_j; an
// edge that lowers the objective is followed to the breakpoint where the
// one-sided slope turns non-negative, and the observation that reaches
// zero there replaces h_j. Every exchange strictly lowers the objective.
PolishResult polish(const WeightedProblem& pb, std::vector<Index> basis, int max_pivots) {
  const Index n = pb.n();
  const Index p = pb.p();
  const double tau = pb.tau;
  const double ztol = 1e-12 * response_scale(pb.y);

  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  for (Index b : basis) in_basis[static_cast<std::size_t>(b)] = 1;

  PolishResult out;
  Eigen::MatrixXd xb(p, p);
  Eigen::VectorXd yb(p);
  Vector r(n);
  Matrix edges(n, p);
  std::vector<std::pair<double, Index>> breaks;
  breaks.reserve(static_cast<std::size_t>(n));

  for (;;) {
    for (Index k = 0; k < p; ++k) {
      xb.row(k) = pb.x.row(basis[static_cast<std::size_t>(k)]);
      yb(k) = pb.y(basis[static_cast<std::size_t>(k)]);
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(xb);
    if (!(lu.rcond() > 1e-14)) break;
    out.beta = lu.solve(yb);
    if (out.pivots >= max_pivots) break;

    const Eigen::MatrixXd binv = lu.inverse();
    r.noalias() = pb.y - pb.x * out.beta;
    edges.noalias() = pb.x * binv;  // row i: x_i' X_h^{-1}

    // Directional derivative along +e_j edge direction: sigma = +1 means
    // x_{h_j}' d = +1, so the residual of h_j moves by -t.
    Eigen::VectorXd lin = Eigen::VectorXd::Zero(p);     // from nonzero residuals
    Eigen::VectorXd zpos = Eigen::VectorXd::Zero(p);    // zero nonbasic, sigma=+1
    Eigen::VectorXd zneg = Eigen::VectorXd::Zero(p);    // zero nonbasic, sigma=-1
    Eigen::VectorXd scale = Eigen::VectorXd::Zero(p);
    for (Index i = 0; i < n; ++i) {
      const double w = pb.weights(i);
      scale += w * edges.row(i).transpose().cwiseAbs();
      if (in_basis[static_cast<std::size_t>(i)]) continue;
      if (std::abs(r(i)) > ztol) {
        const double psi = tau - (r(i) < 0.0 ? 1.0 : 0.0);
        lin -= w * psi * edges.row(i).transpose();
      } else {
        for (Index j = 0; j < p; ++j) {
          const double a = edges(i, j);
          zpos(j) += w * rho_slope_at_zero(-a, tau);
          zneg(j) += w * rho_slope_at_zero(a, tau);
        }
      }
    }

    double best = 0.0;
    Index best_j = -1;
    double best_sigma = 0.0;
    for (Index j = 0; j < p; ++j) {
      const double w = pb.weights(basis[static_cast<std::size_t>(j)]);
      const double dpos = lin(j) + zpos(j) + w * (1.0 - tau);
      const double dneg = -lin(j) + zneg(j) + w * tau;
      const double thresh = -1e-13 * scale(j);
      if (dpos < thresh && dpos < best) {
        best = dpos;
        best_j = j;
        best_sigma = 1.0;
      }
      if (dneg < thresh && dneg < best) {
        best = dneg;
        best_j = j;
        best_sigma = -1.0;
      }
    }
    if (best_j < 0) {
      out.optimal = true;
      break;
    }

    breaks.clear();
    for (Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)] || std::abs(r(i)) <= ztol) continue;
      const double a = best_sigma * edges(i, best_j);
      if (a == 0.0) continue;
      const double t = r(i) / a;
      if (t > 0.0) breaks.emplace_back(t, i);
    }
    std::sort(breaks.begin(), breaks.end());
    double slope = best;
    Index entering = -1;
    for (const auto& [t, i] : breaks) {
      slope += pb.weights(i) * std::abs(edges(i, best_j));
      if (slope >= 0.0) {
        entering = i;
        break;
      }
    }
    if (entering < 0) {
      throw NumericError("check-loss objective unbounded along an edge");
    }
    auto& leaving = basis[static_cast<std::size_t>(best_j)];
    in_basis[static_cast<std::size_t>(leaving)] = 0;
    in_basis[static_cast<std::size_t>(entering)] = 1;
    leaving = entering;
    ++out.pivots;
  }
  return out;
}

}  // namespace

double subgradient_norm(const WeightedProblem& pb, const Vector& beta) {
  const double ztol = 1e-12 * response_scale(pb.y);
  const Vector r = pb.y - pb.x * beta;
  const Index p = pb.p();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
  std::vector<Index> zero;
  for (Index i = 0; i < pb.n(); ++i) {
    if (std::abs(r(i)) > ztol) {
      g += pb.weights(i) * (pb.tau - (r(i) < 0.0 ? 1.0 : 0.0)) * pb.x.row(i).transpose();
    } else {
      zero.push_back(i);
    }
  }
  if (zero.empty()) return g.cwiseAbs().maxCoeff();

  // Box-constrained least squares min ||g + M v|| over v in [tau-1, tau],
  // M = [w_i x_i] on the zero set. Start from the unconstrained solution,
  // clamp, then coordinate descent.
  const Index m = static_cast<Index>(zero.size());
  Eigen::MatrixXd cols(p, m);
  for (Index k = 0; k < m; ++k) {
    cols.col(k) = pb.weights(zero[static_cast<std::size_t>(k)]) *
                  pb.x.row(zero[static_cast<std::size_t>(k)]).transpose();
  }
  const double lo = pb.tau - 1.0;
  const double hi = pb.tau;
  Eigen::VectorXd v = cols.completeOrthogonalDecomposition().solve(-g);
  v = v.cwiseMax(lo).cwiseMin(hi);
  Eigen::VectorXd res = g + cols * v;
  const Eigen::VectorXd sq = cols.colwise().squaredNorm().transpose();
  for (int sweep = 0; sweep < 500; ++sweep) {
    double moved = 0.0;
    for (Index k = 0; k < m; ++k) {
      if (sq(k) == 0.0) continue;
      const double target = std::clamp(v(k) - cols.col(k).dot(res) / sq(k), lo, hi);
      const double step = target - v(k);
      if (step != 0.0) {
        res += step * cols.col(k);
        v(k) = target;
        moved = std::max(moved, std::abs(step));
      }
    }
    if (moved < 1e-15) break;
  }
  return res.cwiseAbs().maxCoeff();
}

QuantileFit solve(const WeightedProblem& problem, const SolveOptions& options) {
  problem.validate();
  check_rank(problem);
  if (options.init && options.init->size() != problem.p()) {
    throw ShapeError("initial beta has the wrong length");
  }

  Vector start;
  if (options.init) {
    start = *options.init;
  } else if (auto wls = weighted_least_squares(problem)) {
    start = std::move(*wls);
  } else {
    start = Vector::Zero(problem.p());
  }

  WarmStart warm = majorize_minimize(problem, std::move(start), options.max_iter);

  const int max_pivots = static_cast<int>(std::min<Index>(10 * problem.n() + 100, 1'000'000));
  PolishResult polished = polish(problem, initial_basis(problem, warm.beta), max_pivots);

  QuantileFit fit;
  fit.tau = problem.tau;
  fit.iterations = warm.iterations + polished.pivots;
  const double polished_obj =
      polished.beta.size() == problem.p() ? objective(problem, polished.beta)
                                          : std::numeric_limits<double>::infinity();
  fit.beta = polished_obj <= warm.objective ? polished.beta : warm.beta;
  fit.objective = objective(problem, fit.beta);
  fit.subgradient_norm = subgradient_norm(problem, fit.beta);
  fit.converged = fit.subgradient_norm <= certification_threshold(problem, options.tol);
  return fit;
}

}  // namespace qrsub
