#include "qrsub/subsample.hpp"

#include "qrsub/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qrsub {

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::Uniform: return "uniform";
    case Method::Lopt: return "lopt";
    case Method::Aopt: return "aopt";
    case Method::Universal: return "universal";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  if (s == "uniform") return Method::Uniform;
  if (s == "lopt") return Method::Lopt;
  if (s == "aopt") return Method::Aopt;
  if (s == "universal") return Method::Universal;
  throw InvalidArgument("unknown sampling method '" + std::string(s) + "'");
}

void SamplingPlan::validate() const {
  if (pi.size() < 1) throw InvalidArgument("sampling plan is empty");
  if (!pi.allFinite() || (pi.array() < 0.0).any()) {
    throw InvalidArgument("sampling probabilities must be finite and non-negative");
  }
  const double total = pi.sum();
  if (std::abs(total - 1.0) > 1e-12 * static_cast<double>(pi.size())) {
    throw InvalidArgument("sampling probabilities sum to " + std::to_string(total));
  }
}

Vector residuals(const Dataset& data, const Vector& beta) {
  if (beta.size() != data.n_cols()) throw ShapeError("beta length does not match design");
  return data.y - data.x * beta;
}

SamplingPlan pi_uniform(Index n_rows) {
  if (n_rows < 1) throw InvalidArgument("need at least one row");
  SamplingPlan plan;
  plan.method = Method::Uniform;
  plan.pi = Vector::Constant(n_rows, 1.0 / static_cast<double>(n_rows));
  return plan;
}

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie strictly inside (0, 1)");
}

// I(0 < 0) = 0, so a zero residual gets |psi| = tau.
inline double abs_psi(double e, double tau) noexcept { return e < 0.0 ? 1.0 - tau : tau; }

Vector normalized(Vector scores, const char* what) {
  const double total = scores.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DegenerateWeights(std::string(what) + ": all sampling scores are zero");
  }
  scores /= total;
  return scores;
}

}  // namespace

SamplingPlan pi_lopt(const Dataset& data, const Vector& resid, double tau) {
  check_tau(tau);
  const Index n = data.n_rows();
  if (resid.size() != n) throw ShapeError("residual vector length does not match data");
  Vector score(n);
  for (Index i = 0; i < n; ++i) score(i) = abs_psi(resid(i), tau) * data.x.row(i).norm();
  SamplingPlan plan;
  plan.method = Method::Lopt;
  plan.pi = normalized(std::move(score), "L-optimal plan");
  plan.tau = tau;
  return plan;
}

SamplingPlan pi_aopt(const Dataset& data, const Vector& resid, double tau, const DnEstimate& dn) {
  check_tau(tau);
  const Index n = data.n_rows();
  const Index p = data.n_cols();
  if (resid.size() != n) throw ShapeError("residual vector length does not match data");
  if (dn.matrix.rows() != p || dn.matrix.cols() != p) throw ShapeError("D_N has the wrong size");
  Eigen::JacobiSVD<SquareMatrix> svd(dn.matrix);
  const auto& sv = svd.singularValues();
  if (!(sv(p - 1) > 0.0) || sv(0) / sv(p - 1) >= 1e12) {
    throw SingularMatrix("D_N estimate is singular or too ill-conditioned");
  }
  const SquareMatrix inv_t = dn.matrix.inverse().transpose();
  // Row i of x * D^{-T} is (D^{-1} x_i)'.
  const Matrix transformed = data.x * inv_t;
  Vector score(n);
  for (Index i = 0; i < n; ++i) score(i) = abs_psi(resid(i), tau) * transformed.row(i).norm();
  SamplingPlan plan;
  plan.method = Method::Aopt;
  plan.pi = normalized(std::move(score), "A-optimal plan");
  plan.tau = tau;
  return plan;
}

SamplingPlan pi_universal(const Dataset& data) {
  SamplingPlan plan;
  plan.method = Method::Universal;
  plan.pi = normalized(data.x.rowwise().norm(), "universal plan");
  return plan;
}

double silverman_bandwidth(const Vector& values) {
  const Index n = values.size();
  if (n < 2) throw DegeneratePilot("need at least two residuals for a bandwidth");
  const double mean = values.mean();
  const double sd = std::sqrt((values.array() - mean).square().sum() / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw DegeneratePilot("pilot residuals have zero variance");

  std::vector<double> sorted(values.data(), values.data() + n);
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

double kde_at_zero(const Vector& values, double bandwidth) {
  if (!(bandwidth > 0.0)) throw InvalidArgument("bandwidth must be positive");
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double total = 0.0;
  for (Index i = 0; i < values.size(); ++i) {
    const double z = values(i) / bandwidth;
    total += norm * std::exp(-0.5 * z * z);
  }
  return total / (static_cast<double>(values.size()) * bandwidth);
}

SquareMatrix density_weighted_gram(const Matrix& x, const Vector& pi, Index n_total, double density) {
  if (pi.size() != x.rows()) throw ShapeError("pi length does not match rows");
  if ((pi.array() <= 0.0).any()) throw InvalidArgument("sampled rows must have positive probability");
  const Vector w = (static_cast<double>(n_total) * pi).cwiseInverse();
  SquareMatrix gram = x.transpose() * w.asDiagonal() * x;
  gram *= density / static_cast<double>(x.rows());
  return 0.5 * (gram + gram.transpose());
}

DnEstimate estimate_dn(const Matrix& pilot_x, const Vector& pilot_residuals,
                       const Vector& pilot_pi, Index n_total) {
  const Index n0 = pilot_x.rows();
  if (n0 < pilot_x.cols() + 1) throw InvalidArgument("pilot size must be at least p + 1");
  if (pilot_residuals.size() != n0) throw ShapeError("pilot residuals do not match pilot rows");
  DnEstimate dn;
  dn.bandwidth = silverman_bandwidth(pilot_residuals);
  dn.density_at_zero = kde_at_zero(pilot_residuals, dn.bandwidth);
  if (!(dn.density_at_zero > 0.0)) throw DegeneratePilot("density estimate at zero underflowed");
  dn.matrix = density_weighted_gram(pilot_x, pilot_pi, n_total, dn.density_at_zero);
  return dn;
}

AliasTable::AliasTable(const Vector& pi) {
  const auto n = static_cast<std::size_t>(pi.size());
  if (n == 0) throw InvalidArgument("alias table needs at least one outcome");
  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  const double total = pi.sum();
  if (!(total > 0.0)) throw InvalidArgument("probabilities sum to zero");

  std::vector<double> scaled(n);
  std::vector<Index> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = pi(static_cast<Index>(i)) * static_cast<double>(n) / total;
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<Index>(i));
  }
  while (!small.empty() && !large.empty()) {
    const Index s = small.back();
    small.pop_back();
    const Index l = large.back();
    prob_[static_cast<std::size_t>(s)] = scaled[static_cast<std::size_t>(s)];
    alias_[static_cast<std::size_t>(s)] = l;
    scaled[static_cast<std::size_t>(l)] += scaled[static_cast<std::size_t>(s)] - 1.0;
    if (scaled[static_cast<std::size_t>(l)] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  // Leftovers are 1 up to rounding.
  for (Index l : large) {
    prob_[static_cast<std::size_t>(l)] = 1.0;
    alias_[static_cast<std::size_t>(l)] = l;
  }
  for (Index s : small) {
    prob_[static_cast<std::size_t>(s)] = 1.0;
    alias_[static_cast<std::size_t>(s)] = s;
  }
}

std::vector<Index> AliasTable::sample(Index n, Engine& eng) const {
  std::vector<Index> out(static_cast<std::size_t>(n));
  for (auto& idx : out) idx = (*this)(eng);
  return out;
}

std::vector<Index> draw(const SamplingPlan& plan, Index n, Engine& eng) {
  plan.validate();
  if (n < 1) throw InvalidArgument("subsample size must be at least 1");
  return AliasTable(plan.pi).sample(n, eng);
}

EffectiveRatio effective_ratio(const Vector& pi, Index n, Index batches) {
  const double nb = static_cast<double>(n) * static_cast<double>(batches);
  if (!(nb >= 1.0)) throw InvalidArgument("nB must be at least 1");
  // Neumaier-compensated sum of squares.
  double sum = 0.0;
  double comp = 0.0;
  for (Index i = 0; i < pi.size(); ++i) {
    const double term = pi(i) * pi(i);
    const double t = sum + term;
    comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  }
  sum += comp;
  EffectiveRatio out;
  out.raw = 1.0 - (nb - 1.0) / 2.0 * sum;
  out.value = out.raw;
  if (out.raw <= 0.0) {
    out.value = 1.0 / nb;
    out.clamped = true;
  }
  return out;
}

}  // namespace qrsub
