#pragma once

#include "qrsub/dataset.hpp"
#include "qrsub/rng.hpp"
#include "qrsub/types.hpp"

#include <cstdint>
#include <limits>
#include <string_view>

namespace qrsub {

enum class CovariateLaw { MvNormal, MvT3, MvT2 };
enum class ErrorLaw { Normal, Exponential1, T1 };

std::string_view to_string(CovariateLaw law) noexcept;
std::string_view to_string(ErrorLaw law) noexcept;
CovariateLaw parse_covariate_law(std::string_view s);
ErrorLaw parse_error_law(std::string_view s);

// Degrees of freedom of the multivariate law; infinity for the normal.
double degrees_of_freedom(CovariateLaw law) noexcept;

// Synthetic heteroscedastic design:
//   y_i = beta' x_i + noise_scale * sigma(x_i) * (e_i - q_tau(e)),
// sigma(x) = mean_j |x_j| over the random covariates, Sigma_ij = 0.5^|i-j|.
struct SyntheticSpec {
  Index n_rows = 100000;
  CovariateLaw covariate_law = CovariateLaw::MvNormal;
  ErrorLaw error_law = ErrorLaw::Normal;
  double tau = 0.5;
  // Length p; includes the intercept coefficient when add_intercept is set.
  Vector beta_true = Vector::Ones(7);
  std::uint64_t seed = 0;
  bool add_intercept = false;
  // 0 gives noise-free data, y = beta' x exactly.
  double noise_scale = 1.0;

  void validate() const;
};

struct SyntheticData {
  Dataset data;
  Vector beta_true;
};

// Analytic tau-quantile of the error law.
double error_quantile(ErrorLaw law, double tau);

// Sigma_ij = rho^|i-j|.
SquareMatrix ar1_covariance(Index dim, double rho = 0.5);

// Draws N(0, Sigma) or multivariate t_df(0, Sigma) vectors; the Cholesky
// factor is computed once at construction.
class MultivariateSampler {
 public:
  MultivariateSampler(const SquareMatrix& sigma,
                      double df = std::numeric_limits<double>::infinity());

  Index dim() const noexcept { return lower_.rows(); }
  double df() const noexcept { return df_; }

  Vector draw(Engine& eng) const;
  // Writes one draw into out (length dim()).
  void draw_into(Engine& eng, Eigen::Ref<Eigen::RowVectorXd> out) const;

 private:
  SquareMatrix lower_;
  double df_;
};

// Covariates and raw errors of one synthetic replicate, before the
// tau-dependent centering. Lets several quantile levels share a draw.
struct LatentSample {
  Matrix x;
  Vector signal;  // x * beta_true
  Vector scale;   // sigma(x_i)
  Vector error;   // e_i, uncentred
  ErrorLaw error_law = ErrorLaw::Normal;
  double noise_scale = 1.0;
  bool has_intercept = false;
  Vector beta_true;
};

LatentSample draw_latent(const SyntheticSpec& spec);
Dataset realize(const LatentSample& latent, double tau);

SyntheticData generate(const SyntheticSpec& spec);

}  // namespace qrsub
