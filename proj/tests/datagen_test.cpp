#include "qrsub/datagen.hpp"
#include "qrsub/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace qrsub {
namespace {

double empirical_quantile(std::vector<double> v, double q) {
  const auto k = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

std::vector<double> standardized_residuals(const SyntheticData& s, bool intercept = false) {
  const auto& x = s.data.x;
  const Index offset = intercept ? 1 : 0;
  const Index k = x.cols() - offset;
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    const double sigma = x.row(i).tail(k).cwiseAbs().sum() / static_cast<double>(k);
    out[static_cast<std::size_t>(i)] = (s.data.y(i) - x.row(i).dot(s.beta_true)) / sigma;
  }
  return out;
}

TEST(ErrorQuantile, AnalyticValues) {
  EXPECT_DOUBLE_EQ(error_quantile(ErrorLaw::Normal, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(error_quantile(ErrorLaw::T1, 0.5), 0.0);
  EXPECT_NEAR(error_quantile(ErrorLaw::Exponential1, 0.75), std::log(4.0), 1e-15);
  EXPECT_NEAR(error_quantile(ErrorLaw::Normal, 0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(error_quantile(ErrorLaw::T1, 0.75), 1.0, 1e-15);
  EXPECT_THROW(error_quantile(ErrorLaw::Normal, 0.0), InvalidArgument);
}

TEST(Generate, NormalMedianNeedsNoShift) {
  SyntheticSpec spec;
  spec.n_rows = 500;
  spec.seed = 3;
  const auto latent = draw_latent(spec);
  const auto data = realize(latent, 0.5);
  const Vector expected = latent.signal.array() + latent.scale.array() * latent.error.array();
  EXPECT_EQ(data.y, expected);
}

TEST(Generate, ExponentialUpperQuartileIsCentred) {
  SyntheticSpec spec;
  spec.n_rows = 1'000'000;
  spec.covariate_law = CovariateLaw::MvT3;
  spec.error_law = ErrorLaw::Exponential1;
  spec.tau = 0.75;
  spec.seed = 19;
  const auto s = generate(spec);
  const double q = empirical_quantile(standardized_residuals(s), 0.75);
  // SE of the sample quantile: sqrt(tau(1-tau)/n) / f(q_tau), f = 1/4 there.
  const double se = std::sqrt(0.75 * 0.25 / 1e6) / 0.25;
  EXPECT_LT(std::abs(q), 3.0 * se);
}

TEST(Generate, QuantileModelHoldsForEveryErrorLaw) {
  for (auto law : {ErrorLaw::Normal, ErrorLaw::Exponential1, ErrorLaw::T1}) {
    for (double tau : {0.25, 0.5, 0.9}) {
      SyntheticSpec spec;
      spec.n_rows = 200'000;
      spec.error_law = law;
      spec.tau = tau;
      spec.seed = 5;
      const auto res = standardized_residuals(generate(spec));
      const double below = static_cast<double>(std::count_if(res.begin(), res.end(),
                                                             [](double r) { return r < 0.0; })) /
                           static_cast<double>(res.size());
      EXPECT_NEAR(below, tau, 4.0 * std::sqrt(tau * (1 - tau) / 2e5))
          << to_string(law) << " tau " << tau;
    }
  }
}

TEST(Generate, SameSeedSameBytesDifferentSeedDiffers) {
  SyntheticSpec spec;
  spec.n_rows = 1000;
  spec.covariate_law = CovariateLaw::MvT2;
  spec.error_law = ErrorLaw::T1;
  spec.seed = 42;
  const auto a = generate(spec);
  const auto b = generate(spec);
  EXPECT_EQ(a.data.x, b.data.x);
  EXPECT_EQ(a.data.y, b.data.y);
  spec.seed = 43;
  const auto c = generate(spec);
  EXPECT_NE(a.data.y, c.data.y);
}

TEST(Generate, InterceptColumnAndSigmaExcludeIt) {
  SyntheticSpec spec;
  spec.n_rows = 50'000;
  spec.add_intercept = true;
  spec.beta_true = Vector::Ones(8);
  spec.error_law = ErrorLaw::Exponential1;
  spec.tau = 0.3;
  spec.seed = 8;
  const auto s = generate(spec);
  EXPECT_TRUE((s.data.x.col(0).array() == 1.0).all());
  EXPECT_EQ(s.data.n_cols(), 8);
  s.data.validate();
  const auto res = standardized_residuals(s, true);
  const double below = static_cast<double>(std::count_if(res.begin(), res.end(),
                                                         [](double r) { return r < 0.0; })) / 5e4;
  EXPECT_NEAR(below, 0.3, 4.0 * std::sqrt(0.21 / 5e4));
}

TEST(Generate, ZeroNoiseIsExactlyLinear) {
  SyntheticSpec spec;
  spec.n_rows = 100;
  spec.noise_scale = 0.0;
  spec.error_law = ErrorLaw::T1;
  const auto s = generate(spec);
  EXPECT_EQ(s.data.y, s.data.x * s.beta_true);
}

TEST(Generate, InvalidSpecThrows) {
  SyntheticSpec spec;
  spec.tau = 1.0;
  EXPECT_THROW(generate(spec), InvalidArgument);
  spec.tau = 0.5;
  spec.n_rows = 0;
  EXPECT_THROW(generate(spec), InvalidArgument);
}

TEST(MultivariateSampler, StandardNormalVariance) {
  MultivariateSampler sampler(SquareMatrix::Identity(1, 1));
  Engine eng(1);
  double sum = 0.0, sq = 0.0;
  const int draws = 100'000;
  for (int k = 0; k < draws; ++k) {
    const double v = sampler.draw(eng)(0);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / draws;
  const double var = sq / draws - mean * mean;
  EXPECT_GE(var, 0.97);
  EXPECT_LE(var, 1.03);
}

TEST(MultivariateSampler, Ar1Correlation) {
  MultivariateSampler sampler(ar1_covariance(2));
  Engine eng(2);
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const int draws = 100'000;
  for (int k = 0; k < draws; ++k) {
    const Vector v = sampler.draw(eng);
    sx += v(0);
    sy += v(1);
    sxx += v(0) * v(0);
    syy += v(1) * v(1);
    sxy += v(0) * v(1);
  }
  const double n = draws;
  const double cov = sxy / n - sx * sy / (n * n);
  const double corr = cov / std::sqrt((sxx / n - sx * sx / (n * n)) * (syy / n - sy * sy / (n * n)));
  EXPECT_NEAR(corr, 0.5, 0.02);
}

TEST(MultivariateSampler, T2IsHeavyTailed) {
  MultivariateSampler sampler(SquareMatrix::Identity(1, 1), 2.0);
  Engine eng(3);
  std::vector<double> v(100'000);
  for (auto& d : v) d = sampler.draw(eng)(0);
  double m2 = 0, m4 = 0;
  for (double d : v) {
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= static_cast<double>(v.size());
  m4 /= static_cast<double>(v.size());
  EXPECT_GT(m4 / (m2 * m2), 3.0 * 3.0);
}

TEST(MultivariateSampler, RejectsIndefiniteCovariance) {
  SquareMatrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(MultivariateSampler{bad}, NotPositiveDefinite);
}

TEST(Ar1Covariance, Entries) {
  const auto s = ar1_covariance(4);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s(0, 3), 0.125);
  EXPECT_DOUBLE_EQ(s(2, 1), 0.5);
}

}  // namespace
}  // namespace qrsub
