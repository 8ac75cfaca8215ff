#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "forcetune/errors.hpp"
#include "forcetune/math.hpp"

namespace forcetune {

struct KernelHyperparams {
  double signal_variance = 1.0;
  Eigen::VectorXd lengthscales;  // one per input dimension, in normalized space
  double noise_variance = 1e-4;

  static KernelHyperparams default_for(int dim) {
    KernelHyperparams hp;
    hp.signal_variance = 1.0;
    hp.lengthscales = Eigen::VectorXd::Constant(dim, 0.3);
    hp.noise_variance = 1e-2;
    return hp;
  }
};

namespace detail {

inline constexpr double kSqrt5 = 2.23606797749978969641;

inline double matern52_from_r2(double r2, double signal_variance) {
  double r = std::sqrt(r2);
  double s = kSqrt5 * r;
  return signal_variance * (1.0 + s + (5.0 / 3.0) * r2) * std::exp(-s);
}

}  // namespace detail

// Matern nu = 5/2 with per-dimension lengthscales.
inline double matern52_kernel(const Eigen::Ref<const Eigen::VectorXd>& x1,
                              const Eigen::Ref<const Eigen::VectorXd>& x2,
                              const KernelHyperparams& hp) {
  if (x1.size() != x2.size() || x1.size() != hp.lengthscales.size()) {
    throw std::invalid_argument("matern52_kernel: dimension mismatch");
  }
  double r2 = 0.0;
  for (Eigen::Index i = 0; i < x1.size(); ++i) {
    double z = (x1[i] - x2[i]) / hp.lengthscales[i];
    r2 += z * z;
  }
  return detail::matern52_from_r2(r2, hp.signal_variance);
}

struct HyperparamBounds {
  double lengthscale_min = 1e-2;
  double lengthscale_max = 1e2;
  double signal_variance_min = 1e-4;
  double signal_variance_max = 1e2;
  double noise_variance_min = 1e-6;
  double noise_variance_max = 1.0;
};

struct GpFitSettings {
  int restarts = 8;
  int max_iterations = 200;
  HyperparamBounds bounds;
  std::uint64_t seed = 0;
  std::optional<KernelHyperparams> warm_start;  // used by the first restart
};

// Exact GP regression with target standardization (zero prior mean on the
// standardized scale, undone on prediction) and a cached Cholesky factor of
// K + noise*I. A constructed model is immutable; posterior queries are
// const and safe to run concurrently.
class GpModel {
 public:
  explicit GpModel(int dim)
      : GpModel(Eigen::MatrixXd(0, dim), Eigen::VectorXd(0), KernelHyperparams::default_for(dim)) {}

  GpModel(int dim, KernelHyperparams hp)
      : GpModel(Eigen::MatrixXd(0, dim), Eigen::VectorXd(0), std::move(hp)) {}

  GpModel(Eigen::MatrixXd inputs, Eigen::VectorXd targets, KernelHyperparams hp)
      : dim_(static_cast<int>(inputs.cols())),
        hp_(std::move(hp)),
        inputs_(std::move(inputs)),
        targets_raw_(std::move(targets)) {
    if (inputs_.rows() != targets_raw_.size()) {
      throw std::invalid_argument("GpModel: inputs/targets size mismatch");
    }
    if (hp_.lengthscales.size() != dim_) {
      throw std::invalid_argument("GpModel: lengthscale dimension mismatch");
    }
    if (!(hp_.signal_variance > 0.0) || !(hp_.noise_variance > 0.0) ||
        !(hp_.lengthscales.array() > 0.0).all()) {
      throw std::invalid_argument("GpModel: hyperparameters must be strictly positive");
    }
    build();
  }

  static GpModel fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                     const GpFitSettings& settings);

  // Posterior mean and variance at a query point, in raw target units.
  std::pair<double, double> posterior(const Eigen::Ref<const Eigen::VectorXd>& query) const {
    if (query.size() != dim_) throw std::invalid_argument("posterior: query dimension mismatch");
    const double kss = hp_.signal_variance;
    const Eigen::Index n = inputs_.rows();
    if (n == 0) return {0.0, kss};

    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k[i] = kernel_row(i, query);
    double mean_std = k.dot(alpha_);
    Eigen::VectorXd v = chol_lower_.triangularView<Eigen::Lower>().solve(k);
    double var_std = kss - v.squaredNorm();
    if (var_std < -1e-10) {
      throw NumericalFault("posterior: variance below negativity tolerance");
    }
    var_std = std::max(var_std, 0.0);
    return {target_mean_ + target_scale_ * mean_std, var_std * target_scale_ * target_scale_};
  }

  // Log marginal likelihood of the standardized targets.
  double log_marginal_likelihood() const { return lml_; }

  // Gradient of the LML w.r.t. [log l_1..log l_d, log sf2, log noise].
  Eigen::VectorXd lml_gradient() const {
    const Eigen::Index n = inputs_.rows();
    if (n == 0) throw std::invalid_argument("lml_gradient: model has no data");
    Eigen::MatrixXd k_inv =
        llt_.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd a = alpha_ * alpha_.transpose() - k_inv;

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim_ + 2);
    const double sf2 = hp_.signal_variance;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i; j < n; ++j) {
        double w = (i == j) ? 1.0 : 2.0;  // symmetric accumulation
        double s = detail::kSqrt5 * std::sqrt(r2_(i, j));
        // d k / d log l_m = (5/3) sf2 (1+s) e^{-s} * dx_m^2 / l_m^2
        double common = w * a(i, j) * (5.0 / 3.0) * sf2 * (1.0 + s) * std::exp(-s);
        if (i != j) {
          for (int m = 0; m < dim_; ++m) {
            double dx = (inputs_(i, m) - inputs_(j, m)) / hp_.lengthscales[m];
            grad[m] += 0.5 * common * dx * dx;
          }
        }
        grad[dim_] += 0.5 * w * a(i, j) * gram_(i, j);  // d k / d log sf2 = k
      }
    }
    grad[dim_ + 1] = 0.5 * hp_.noise_variance * a.trace();
    return grad;
  }

  const KernelHyperparams& hyperparams() const { return hp_; }
  int dimension() const { return dim_; }
  Eigen::Index sample_count() const { return inputs_.rows(); }
  const Eigen::MatrixXd& train_inputs() const { return inputs_; }
  const Eigen::VectorXd& train_targets() const { return targets_raw_; }
  double applied_jitter() const { return jitter_; }
  double target_mean() const { return target_mean_; }
  double target_scale() const { return target_scale_; }
  Eigen::MatrixXd cholesky_lower() const { return chol_lower_; }

 private:
  double kernel_row(Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& q) const {
    double r2 = 0.0;
    for (int m = 0; m < dim_; ++m) {
      double z = (inputs_(i, m) - q[m]) / hp_.lengthscales[m];
      r2 += z * z;
    }
    return detail::matern52_from_r2(r2, hp_.signal_variance);
  }

  void build() {
    const Eigen::Index n = inputs_.rows();
    if (n == 0) return;

    target_mean_ = targets_raw_.mean();
    double var = (targets_raw_.array() - target_mean_).square().sum() / static_cast<double>(n);
    target_scale_ = std::sqrt(var);
    if (!(target_scale_ > 1e-12)) target_scale_ = 1.0;
    Eigen::VectorXd y = (targets_raw_.array() - target_mean_) / target_scale_;

    r2_.resize(n, n);
    gram_.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      r2_(i, i) = 0.0;
      gram_(i, i) = hp_.signal_variance;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        double r2 = 0.0;
        for (int m = 0; m < dim_; ++m) {
          double z = (inputs_(i, m) - inputs_(j, m)) / hp_.lengthscales[m];
          r2 += z * z;
        }
        r2_(i, j) = r2_(j, i) = r2;
        double k = detail::matern52_from_r2(r2, hp_.signal_variance);
        gram_(i, j) = gram_(j, i) = k;
      }
    }

    // Jitter escalation: 1e-10*sf2, x10 per retry, up to 1e-4*sf2.
    jitter_ = 0.0;
    for (;;) {
      Eigen::MatrixXd m = gram_;
      m.diagonal().array() += hp_.noise_variance + jitter_;
      llt_.compute(m);
      if (llt_.info() == Eigen::Success) break;
      double next = (jitter_ == 0.0) ? 1e-10 * hp_.signal_variance : jitter_ * 10.0;
      if (next > 1e-4 * hp_.signal_variance) {
        throw FittingFault("GpModel: Gram matrix not positive-definite after jitter escalation");
      }
      jitter_ = next;
    }
    chol_lower_ = llt_.matrixL();
    alpha_ = llt_.solve(y);
    targets_std_ = std::move(y);

    lml_ = -0.5 * targets_std_.dot(alpha_) -
           chol_lower_.diagonal().array().log().sum() -
           0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
  }

  int dim_;
  KernelHyperparams hp_;
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd targets_raw_;
  Eigen::VectorXd targets_std_;
  double target_mean_ = 0.0;
  double target_scale_ = 1.0;
  Eigen::MatrixXd r2_;    // pairwise scaled squared distances
  Eigen::MatrixXd gram_;  // noiseless K
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd chol_lower_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
  double lml_ = 0.0;
};

namespace detail {

struct LogParamSpace {
  Eigen::VectorXd lower, upper;  // log-space box

  explicit LogParamSpace(int dim, const HyperparamBounds& b) : lower(dim + 2), upper(dim + 2) {
    for (int i = 0; i < dim; ++i) {
      lower[i] = std::log(b.lengthscale_min);
      upper[i] = std::log(b.lengthscale_max);
    }
    lower[dim] = std::log(b.signal_variance_min);
    upper[dim] = std::log(b.signal_variance_max);
    lower[dim + 1] = std::log(b.noise_variance_min);
    upper[dim + 1] = std::log(b.noise_variance_max);
  }

  Eigen::VectorXd clamp(Eigen::VectorXd theta) const {
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      theta[i] = std::clamp(theta[i], lower[i], upper[i]);
    }
    return theta;
  }

  KernelHyperparams to_hyperparams(const Eigen::VectorXd& theta) const {
    int dim = static_cast<int>(theta.size()) - 2;
    KernelHyperparams hp;
    hp.lengthscales = theta.head(dim).array().exp();
    hp.signal_variance = std::exp(theta[dim]);
    hp.noise_variance = std::exp(theta[dim + 1]);
    return hp;
  }

  Eigen::VectorXd from_hyperparams(const KernelHyperparams& hp) const {
    int dim = static_cast<int>(hp.lengthscales.size());
    Eigen::VectorXd theta(dim + 2);
    theta.head(dim) = hp.lengthscales.array().log();
    theta[dim] = std::log(hp.signal_variance);
    theta[dim + 1] = std::log(hp.noise_variance);
    return clamp(theta);
  }
};

}  // namespace detail

// Multi-start projected gradient ascent on the LML in log-parameter space.
// Restarts are reduced by best LML; ties keep the lowest restart index.
inline GpModel GpModel::fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                            const GpFitSettings& settings) {
  const int dim = static_cast<int>(inputs.cols());
  if (inputs.rows() < 1) throw std::invalid_argument("GpModel::fit: need at least one sample");
  if (settings.restarts < 1) throw std::invalid_argument("GpModel::fit: restarts must be >= 1");
  detail::LogParamSpace space(dim, settings.bounds);

  auto evaluate = [&](const Eigen::VectorXd& theta) -> std::optional<GpModel> {
    try {
      return GpModel(inputs, targets, space.to_hyperparams(theta));
    } catch (const FittingFault&) {
      return std::nullopt;
    }
  };

  std::mt19937_64 rng(settings.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_start = [&] {
    Eigen::VectorXd theta(dim + 2);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      theta[i] = space.lower[i] + unit(rng) * (space.upper[i] - space.lower[i]);
    }
    return theta;
  };

  std::optional<GpModel> best;
  double best_lml = -std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < settings.restarts; ++restart) {
    Eigen::VectorXd theta;
    if (restart == 0) {
      theta = settings.warm_start ? space.from_hyperparams(*settings.warm_start)
                                  : space.from_hyperparams(KernelHyperparams::default_for(dim));
    } else {
      theta = random_start();
    }

    auto current = evaluate(theta);
    if (!current) continue;
    double f = current->log_marginal_likelihood();

    for (int iter = 0; iter < settings.max_iterations; ++iter) {
      Eigen::VectorXd grad = current->lml_gradient();
      // Project out components pushing against an active bound.
      for (Eigen::Index i = 0; i < grad.size(); ++i) {
        if ((theta[i] <= space.lower[i] && grad[i] < 0.0) ||
            (theta[i] >= space.upper[i] && grad[i] > 0.0)) {
          grad[i] = 0.0;
        }
      }
      double gnorm = grad.lpNorm<Eigen::Infinity>();
      if (gnorm < 1e-4) break;

      double t = std::min(1.0, 1.0 / gnorm);
      bool accepted = false;
      double f_before = f;
      while (t >= 1e-10) {
        Eigen::VectorXd trial = space.clamp(theta + t * grad);
        auto candidate = evaluate(trial);
        if (candidate) {
          double ft = candidate->log_marginal_likelihood();
          if (ft > f + 1e-4 * grad.dot(trial - theta)) {
            theta = std::move(trial);
            current = std::move(candidate);
            f = ft;
            accepted = true;
            break;
          }
        }
        t *= 0.5;
      }
      if (!accepted) break;
      if (f - f_before <= 1e-6 * std::max(1.0, std::abs(f))) break;  // plateau
    }

    if (f > best_lml) {
      best_lml = f;
      best = std::move(current);
    }
  }

  if (!best) throw FittingFault("GpModel::fit: every restart failed to factorize");
  return std::move(*best);
}

}  // namespace forcetune
