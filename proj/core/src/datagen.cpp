#include "qrsub/datagen.hpp"

#include "qrsub/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <numbers>
#include <random>

namespace qrsub {

std::string_view to_string(CovariateLaw law) noexcept {
  switch (law) {
    case CovariateLaw::MvNormal: return "normal";
    case CovariateLaw::MvT3: return "t3";
    case CovariateLaw::MvT2: return "t2";
  }
  return "?";
}

std::string_view to_string(ErrorLaw law) noexcept {
  switch (law) {
    case ErrorLaw::Normal: return "normal";
    case ErrorLaw::Exponential1: return "exponential";
    case ErrorLaw::T1: return "t1";
  }
  return "?";
}

CovariateLaw parse_covariate_law(std::string_view s) {
  if (s == "normal" || s == "mvnormal") return CovariateLaw::MvNormal;
  if (s == "t3" || s == "mvt3") return CovariateLaw::MvT3;
  if (s == "t2" || s == "mvt2") return CovariateLaw::MvT2;
  throw InvalidArgument("unknown covariate law '" + std::string(s) + "'");
}

ErrorLaw parse_error_law(std::string_view s) {
  if (s == "normal") return ErrorLaw::Normal;
  if (s == "exponential" || s == "exp" || s == "exponential1") return ErrorLaw::Exponential1;
  if (s == "t1" || s == "cauchy") return ErrorLaw::T1;
  throw InvalidArgument("unknown error law '" + std::string(s) + "'");
}

double degrees_of_freedom(CovariateLaw law) noexcept {
  switch (law) {
    case CovariateLaw::MvT3: return 3.0;
    case CovariateLaw::MvT2: return 2.0;
    case CovariateLaw::MvNormal: break;
  }
  return std::numeric_limits<double>::infinity();
}

void SyntheticSpec::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie strictly inside (0, 1)");
  if (n_rows < 1) throw InvalidArgument("n_rows must be at least 1");
  const Index random_cols = beta_true.size() - (add_intercept ? 1 : 0);
  if (random_cols < 1) throw InvalidArgument("need at least one random covariate");
  if (!beta_true.allFinite()) throw InvalidArgument("beta_true must be finite");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw InvalidArgument("noise_scale must be finite and non-negative");
  }
}

double error_quantile(ErrorLaw law, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie strictly inside (0, 1)");
  switch (law) {
    case ErrorLaw::Normal:
      return boost::math::quantile(boost::math::normal_distribution<double>(), tau);
    case ErrorLaw::Exponential1:
      return -std::log1p(-tau);
    case ErrorLaw::T1:
      return std::tan(std::numbers::pi * (tau - 0.5));
  }
  return 0.0;
}

SquareMatrix ar1_covariance(Index dim, double rho) {
  SquareMatrix sigma(dim, dim);
  for (Index i = 0; i < dim; ++i) {
    for (Index j = 0; j < dim; ++j) {
      sigma(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
    }
  }
  return sigma;
}

MultivariateSampler::MultivariateSampler(const SquareMatrix& sigma, double df) : df_(df) {
  if (sigma.rows() != sigma.cols() || sigma.rows() < 1) {
    throw ShapeError("covariance must be a non-empty square matrix");
  }
  if (!(df > 0.0)) throw InvalidArgument("degrees of freedom must be positive");
  Eigen::LLT<SquareMatrix> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("covariance matrix is not positive definite");
  }
  lower_ = llt.matrixL();
}

void MultivariateSampler::draw_into(Engine& eng, Eigen::Ref<Eigen::RowVectorXd> out) const {
  std::normal_distribution<double> normal;
  const Index d = dim();
  Eigen::VectorXd z(d);
  for (Index j = 0; j < d; ++j) z(j) = normal(eng);
  out = (lower_ * z).transpose();
  if (std::isfinite(df_)) {
    std::chi_squared_distribution<double> chisq(df_);
    out /= std::sqrt(chisq(eng) / df_);
  }
}

Vector MultivariateSampler::draw(Engine& eng) const {
  Eigen::RowVectorXd row(dim());
  draw_into(eng, row);
  return row.transpose();
}

namespace {

double draw_error(ErrorLaw law, Engine& eng) {
  switch (law) {
    case ErrorLaw::Normal: return std::normal_distribution<double>()(eng);
    case ErrorLaw::Exponential1: return std::exponential_distribution<double>(1.0)(eng);
    case ErrorLaw::T1: return std::cauchy_distribution<double>()(eng);
  }
  return 0.0;
}

}  // namespace

LatentSample draw_latent(const SyntheticSpec& spec) {
  spec.validate();
  const Index p = spec.beta_true.size();
  const Index offset = spec.add_intercept ? 1 : 0;
  const Index k = p - offset;
  const Index n = spec.n_rows;

  MultivariateSampler sampler(ar1_covariance(k), degrees_of_freedom(spec.covariate_law));
  Engine eng = make_engine({spec.seed, 0}, streams::kData);

  LatentSample out;
  out.x.resize(n, p);
  out.scale.resize(n);
  out.error.resize(n);
  out.error_law = spec.error_law;
  out.noise_scale = spec.noise_scale;
  out.has_intercept = spec.add_intercept;
  out.beta_true = spec.beta_true;

  for (Index i = 0; i < n; ++i) {
    if (offset) out.x(i, 0) = 1.0;
    sampler.draw_into(eng, out.x.row(i).tail(k));
    out.scale(i) = out.x.row(i).tail(k).cwiseAbs().sum() / static_cast<double>(k);
    out.error(i) = draw_error(spec.error_law, eng);
  }
  out.signal = out.x * spec.beta_true;
  return out;
}

Dataset realize(const LatentSample& latent, double tau) {
  const double shift = error_quantile(latent.error_law, tau);
  Dataset data;
  data.x = latent.x;
  data.has_intercept = latent.has_intercept;
  if (latent.noise_scale == 0.0) {
    data.y = latent.signal;
  } else {
    data.y = latent.signal.array() +
             latent.noise_scale * latent.scale.array() * (latent.error.array() - shift);
  }
  return data;
}

SyntheticData generate(const SyntheticSpec& spec) {
  auto latent = draw_latent(spec);
  return {realize(latent, spec.tau), spec.beta_true};
}

}  // namespace qrsub
