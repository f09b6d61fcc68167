#pragma once

#include "qrsub/dataset.hpp"
#include "qrsub/rng.hpp"
#include "qrsub/types.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace qrsub {

enum class Method { Uniform, Lopt, Aopt, Universal };

std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view s);

// Probability vector over the N full-data rows for with-replacement draws.
struct SamplingPlan {
  Method method = Method::Uniform;
  Vector pi;
  std::optional<Vector> pilot_beta;
  double tau = 0.5;

  // Non-negative, finite, sums to 1 within 1e-12 * N.
  void validate() const;
};

// Density-weighted Gram matrix estimate, f(0) * (1/n) sum x x' / (N pi).
struct DnEstimate {
  SquareMatrix matrix;
  double density_at_zero = 0.0;
  double bandwidth = 0.0;
};

Vector residuals(const Dataset& data, const Vector& beta);

SamplingPlan pi_uniform(Index n_rows);

// pi_i proportional to |tau - I(e_i < 0)| * ||x_i||.
SamplingPlan pi_lopt(const Dataset& data, const Vector& resid, double tau);

// pi_i proportional to |tau - I(e_i < 0)| * ||D^{-1} x_i||.
SamplingPlan pi_aopt(const Dataset& data, const Vector& resid, double tau, const DnEstimate& dn);

// pi_i proportional to ||x_i||; the same for every quantile level.
SamplingPlan pi_universal(const Dataset& data);

// Silverman's rule: 0.9 * min(sd, IQR / 1.34) * n^(-1/5). Falls back to sd
// when the IQR is zero. Throws DegeneratePilot for zero spread.
double silverman_bandwidth(const Vector& values);

// Gaussian kernel density estimate at 0.
double kde_at_zero(const Vector& values, double bandwidth);

// (density / n) * sum_i x_i x_i' / (n_total * pi_i).
SquareMatrix density_weighted_gram(const Matrix& x, const Vector& pi, Index n_total, double density);

// Global (x-free) density of the pilot residuals at 0, combined with the
// inverse-probability weighted Gram matrix of the pilot rows.
DnEstimate estimate_dn(const Matrix& pilot_x, const Vector& pilot_residuals,
                       const Vector& pilot_pi, Index n_total);

// Walker/Vose alias table: O(N) build, O(1) per draw.
class AliasTable {
 public:
  explicit AliasTable(const Vector& pi);

  Index size() const noexcept { return static_cast<Index>(prob_.size()); }
  Index operator()(Engine& eng) const noexcept {
    const auto col = static_cast<Index>(uniform_below(eng, prob_.size()));
    return uniform01(eng) < prob_[static_cast<std::size_t>(col)]
               ? col
               : alias_[static_cast<std::size_t>(col)];
  }
  std::vector<Index> sample(Index n, Engine& eng) const;

 private:
  std::vector<double> prob_;
  std::vector<Index> alias_;
};

std::vector<Index> draw(const SamplingPlan& plan, Index n, Engine& eng);

// r_ef = 1 - (nB - 1)/2 * sum pi_i^2. A raw value <= 0 is clamped to
// 1/(nB) and flagged.
struct EffectiveRatio {
  double value = 1.0;
  double raw = 1.0;
  bool clamped = false;
};

EffectiveRatio effective_ratio(const Vector& pi, Index n, Index batches);

}  // namespace qrsub
