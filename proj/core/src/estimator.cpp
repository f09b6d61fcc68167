#include "qrsub/estimator.hpp"

#include "qrsub/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

namespace qrsub {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie strictly inside (0, 1)");
}

}  // namespace

PilotResult pilot(const Dataset& data, Index n0, double tau, Engine& eng, bool estimate_density,
                  const SolveOptions& solve_options) {
  check_tau(tau);
  const Index p = data.n_cols();
  const Index big_n = data.n_rows();
  if (n0 < p + 1) throw InvalidArgument("pilot size n0 must be at least p + 1");

  PilotResult out;
  out.indices.resize(static_cast<std::size_t>(n0));
  for (auto& idx : out.indices) idx = static_cast<Index>(uniform_below(eng, static_cast<std::uint64_t>(big_n)));
  out.pilot_pi = Vector::Constant(n0, 1.0 / static_cast<double>(big_n));

  WeightedProblem problem;
  problem.x = gather_rows(data.x, out.indices);
  problem.y = gather(data.y, out.indices);
  problem.weights = Vector::Constant(n0, 1.0 / static_cast<double>(n0));
  problem.tau = tau;
  out.beta0 = solve(problem, solve_options).beta;

  if (estimate_density) {
    const Vector resid = problem.y - problem.x * out.beta0;
    out.dn = estimate_dn(problem.x, resid, out.pilot_pi, big_n);
  }
  return out;
}

SubsampleFit fit_subsample(const Dataset& data, const SamplingPlan& plan, Index n, double tau,
                           Engine& eng, const SolveOptions& solve_options) {
  if (plan.pi.size() != data.n_rows()) throw ShapeError("plan does not cover the data rows");
  SubsampleFit out;
  out.indices = draw(plan, n, eng);
  const double scale = static_cast<double>(n) * static_cast<double>(data.n_rows());
  WeightedProblem problem;
  problem.x = gather_rows(data.x, out.indices);
  problem.y = gather(data.y, out.indices);
  problem.weights.resize(n);
  for (Index k = 0; k < n; ++k) {
    problem.weights(k) = 1.0 / (scale * plan.pi(out.indices[static_cast<std::size_t>(k)]));
  }
  problem.tau = tau;
  out.fit = solve(problem, solve_options);
  return out;
}

SamplingPlan build_plan(const Dataset& data, Method method, double tau, const PilotResult* pilot_result) {
  switch (method) {
    case Method::Uniform: {
      auto plan = pi_uniform(data.n_rows());
      plan.tau = tau;
      return plan;
    }
    case Method::Universal: {
      auto plan = pi_universal(data);
      plan.tau = tau;
      return plan;
    }
    case Method::Lopt: {
      if (!pilot_result) throw InvalidArgument("L-optimal plan needs a pilot estimate");
      auto plan = pi_lopt(data, residuals(data, pilot_result->beta0), tau);
      plan.pilot_beta = pilot_result->beta0;
      return plan;
    }
    case Method::Aopt: {
      if (!pilot_result || !pilot_result->dn) {
        throw InvalidArgument("A-optimal plan needs a pilot with a density estimate");
      }
      auto plan = pi_aopt(data, residuals(data, pilot_result->beta0), tau, *pilot_result->dn);
      plan.pilot_beta = pilot_result->beta0;
      return plan;
    }
  }
  throw InvalidArgument("unknown method");
}

TwoStepResult two_step(const Dataset& data, Index n0, Index n, double tau, Method method,
                       RngKey key, const SolveOptions& solve_options) {
  if (method != Method::Lopt && method != Method::Aopt) {
    throw InvalidArgument("two-step estimation uses the L- or A-optimal plan");
  }
  if (n < data.n_cols() + 1) throw InvalidArgument("subsample size n must be at least p + 1");

  TwoStepResult out;
  Engine pilot_eng = make_engine(key, streams::kPilot);
  out.pilot = pilot(data, n0, tau, pilot_eng, method == Method::Aopt, solve_options);
  out.plan = build_plan(data, method, tau, &out.pilot);

  Engine eng = make_engine(key, 0);
  out.second = fit_subsample(data, out.plan, n, tau, eng, solve_options);

  if (method == Method::Aopt) {
    const Matrix xs = gather_rows(data.x, out.second.indices);
    const Vector ps = gather(out.plan.pi, out.second.indices);
    DnEstimate dn1 = *out.pilot.dn;
    dn1.matrix = density_weighted_gram(xs, ps, data.n_rows(), dn1.density_at_zero);
    out.aggregated = aggregate_aopt(out.pilot.beta0, *out.pilot.dn, out.second.fit.beta, dn1, n0, n);
    out.dn_second = std::move(dn1);
  }
  return out;
}

Vector aggregate_aopt(const Vector& beta0, const DnEstimate& dn0, const Vector& beta_second,
                      const DnEstimate& dn1, Index n0, Index n) {
  const Index p = beta0.size();
  if (beta_second.size() != p || dn0.matrix.rows() != p || dn1.matrix.rows() != p) {
    throw ShapeError("aggregation inputs disagree on p");
  }
  const SquareMatrix a0 = static_cast<double>(n0) * dn0.matrix;
  const SquareMatrix a1 = static_cast<double>(n) * dn1.matrix;
  Eigen::FullPivLU<SquareMatrix> lu(a0 + a1);
  if (!lu.isInvertible()) throw SingularMatrix("n0 D0 + n D1 is singular");
  return lu.solve(a0 * beta0 + a1 * beta_second);
}

IterativeEstimate pool_batches(const Matrix& batch_betas, const EffectiveRatio& r_ef) {
  const Index b = batch_betas.rows();
  if (b < 1) throw InvalidArgument("need at least one batch");
  IterativeEstimate out;
  out.batch_betas = batch_betas;
  out.batches = b;
  out.r_ef = r_ef;
  // Summed in batch order for reproducibility.
  Vector total = Vector::Zero(batch_betas.cols());
  for (Index k = 0; k < b; ++k) total += batch_betas.row(k).transpose();
  out.beta_pooled = total / static_cast<double>(b);
  if (b >= 2) {
    SquareMatrix acc = SquareMatrix::Zero(batch_betas.cols(), batch_betas.cols());
    for (Index k = 0; k < b; ++k) {
      const Vector dev = batch_betas.row(k).transpose() - out.beta_pooled;
      acc.noalias() += dev * dev.transpose();
    }
    acc /= r_ef.value * static_cast<double>(b) * static_cast<double>(b - 1);
    out.vcov = 0.5 * (acc + acc.transpose());
  }
  return out;
}

IterativeEstimate iterative_with_plan(const Dataset& data, const SamplingPlan& plan,
                                      const IterativeOptions& options, RngKey key) {
  check_tau(options.tau);
  const Index p = data.n_cols();
  const Index b = options.batches;
  if (b < 1) throw InvalidArgument("number of batches B must be at least 1");
  if (options.n < p + 1) throw InvalidArgument("subsample size n must be at least p + 1");
  plan.validate();
  if (plan.pi.size() != data.n_rows()) throw ShapeError("plan does not cover the data rows");

  Matrix betas(b, p);
  std::vector<double> solve_ms(static_cast<std::size_t>(b), 0.0);
  std::vector<std::string> errors(static_cast<std::size_t>(b));
  std::vector<char> failed(static_cast<std::size_t>(b), 0);

  const AliasTable table(plan.pi);
  const double scale = static_cast<double>(options.n) * static_cast<double>(data.n_rows());
  auto run_batch = [&](Index k) {
    const auto t0 = Clock::now();
    try {
      Engine eng = make_engine(key, static_cast<std::uint64_t>(k));
      const auto rows = table.sample(options.n, eng);
      WeightedProblem problem;
      problem.x = gather_rows(data.x, rows);
      problem.y = gather(data.y, rows);
      problem.weights.resize(options.n);
      for (Index j = 0; j < options.n; ++j) {
        problem.weights(j) = 1.0 / (scale * plan.pi(rows[static_cast<std::size_t>(j)]));
      }
      problem.tau = options.tau;
      betas.row(k) = solve(problem, options.solve).beta.transpose();
    } catch (const std::exception& e) {
      failed[static_cast<std::size_t>(k)] = 1;
      errors[static_cast<std::size_t>(k)] = e.what();
    }
    solve_ms[static_cast<std::size_t>(k)] = elapsed_ms(t0);
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(b)));
  if (workers == 1) {
    for (Index k = 0; k < b; ++k) run_batch(k);
  } else {
    std::atomic<Index> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (Index k = next++; k < b; k = next++) run_batch(k);
      });
    }
  }

  std::vector<std::size_t> failed_ids;
  for (Index k = 0; k < b; ++k) {
    if (failed[static_cast<std::size_t>(k)]) failed_ids.push_back(static_cast<std::size_t>(k));
  }
  if (!failed_ids.empty()) throw BatchFailure(failed_ids, errors[failed_ids.front()]);

  IterativeEstimate out = pool_batches(betas, effective_ratio(plan.pi, options.n, b));
  out.n = options.n;
  out.tau = options.tau;
  out.method = plan.method;
  out.pilot_beta = plan.pilot_beta;
  for (double ms : solve_ms) out.solve_ms_total += ms;
  if (out.r_ef.clamped) {
    out.warnings.push_back("effective ratio r_ef = " + std::to_string(out.r_ef.raw) +
                           " <= 0; clamped to 1/(nB)");
  }
  if (static_cast<double>(b) > static_cast<double>(options.n) / 10.0) {
    out.warnings.push_back("B = " + std::to_string(b) + " exceeds n/10 = " +
                           std::to_string(options.n / 10) + "; intervals may undercover");
  }
  return out;
}

IterativeEstimate iterative(const Dataset& data, const IterativeOptions& options, RngKey key) {
  check_tau(options.tau);
  const auto t0 = Clock::now();
  std::optional<PilotResult> pilot_result;
  if (options.method == Method::Lopt || options.method == Method::Aopt) {
    Engine eng = make_engine(key, streams::kPilot);
    pilot_result = pilot(data, options.n0, options.tau, eng, options.method == Method::Aopt, options.solve);
  }
  const SamplingPlan plan =
      build_plan(data, options.method, options.tau, pilot_result ? &*pilot_result : nullptr);
  const double plan_ms = elapsed_ms(t0);

  IterativeEstimate out = iterative_with_plan(data, plan, options, key);
  out.plan_ms = plan_ms;
  out.n0 = pilot_result ? options.n0 : 0;
  return out;
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

std::vector<Interval> confidence_intervals(const IterativeEstimate& est, double level) {
  if (!est.vcov) throw MissingVariance("no variance estimate (B = 1)");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must lie in (0, 1)");
  const double z = normal_quantile(0.5 * (1.0 + level));
  std::vector<Interval> out;
  out.reserve(static_cast<std::size_t>(est.beta_pooled.size()));
  for (Index j = 0; j < est.beta_pooled.size(); ++j) {
    const double half = z * std::sqrt(std::max(0.0, (*est.vcov)(j, j)));
    out.push_back({est.beta_pooled(j) - half, est.beta_pooled(j) + half});
  }
  return out;
}

VarianceDiagnostics variance_diagnostics(const Dataset& data, const Vector& beta,
                                         const SamplingPlan& plan,
                                         const std::optional<DnEstimate>& dn) {
  const Index n = data.n_rows();
  const Index p = data.n_cols();
  if (plan.pi.size() != n) throw ShapeError("plan does not cover the data rows");
  check_tau(plan.tau);
  const double tau = plan.tau;
  const double nd = static_cast<double>(n);
  const Vector resid = residuals(data, beta);

  std::optional<SquareMatrix> dinv;
  if (dn) {
    if (dn->matrix.rows() != p || dn->matrix.cols() != p) throw ShapeError("D_N has the wrong size");
    Eigen::FullPivLU<SquareMatrix> lu(dn->matrix);
    if (!lu.isInvertible()) throw SingularMatrix("D_N estimate is singular");
    dinv = lu.inverse();
  }

  VarianceDiagnostics out;
  out.v_pi = SquareMatrix::Zero(p, p);
  SquareMatrix outer_sum = SquareMatrix::Zero(p, p);
  double norm_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Vector xi = data.x.row(i).transpose();
    const double psi = tau - (resid(i) < 0.0 ? 1.0 : 0.0);
    const double xnorm = dinv ? (*dinv * xi).norm() : xi.norm();
    if (xnorm == 0.0) continue;
    if (!(plan.pi(i) > 0.0)) {
      throw InvalidArgument("row " + std::to_string(i) + " has zero probability but carries design information");
    }
    out.v_pi.noalias() += (psi * psi / (nd * nd * plan.pi(i))) * (xi * xi.transpose());
    outer_sum.noalias() += (std::abs(psi) / xnorm) * (xi * xi.transpose());
    norm_sum += std::abs(psi) * xnorm;
  }
  out.v_explicit = (outer_sum / nd) * (norm_sum / nd);
  out.v_pi = 0.5 * (out.v_pi + out.v_pi.transpose());
  out.v_explicit = 0.5 * (out.v_explicit + out.v_explicit.transpose());
  if (dinv) {
    SquareMatrix s = *dinv * out.v_pi * dinv->transpose();
    out.sandwich = 0.5 * (s + s.transpose());
  }
  return out;
}

}  // namespace qrsub
