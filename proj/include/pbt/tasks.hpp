#pragma once

// Trainable tasks. A task pairs a `step` (one update of the parameters under
// hyperparameters h, driven by a surrogate objective) with an `eval` that
// measures the metric actually being maximised. The two need not agree.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pbt/core.hpp"
#include "pbt/json.hpp"
#include "pbt/rng.hpp"

namespace pbt {

/// Raised by a task when training diverges; the engine marks the member failed.
class TaskFailure : public Error {
 public:
  using Error::Error;
};

class Task {
 public:
  virtual ~Task() = default;

  virtual std::string name() const = 0;
  virtual Eigen::Index dim() const = 0;
  virtual std::vector<HyperparamSpec> hyperparam_specs() const = 0;
  virtual ParamVector init(std::uint64_t seed) const = 0;
  virtual ParamVector step(const ParamVector& theta, const HyperparamVector& h, Rng& noise) const = 0;
  virtual double eval(const ParamVector& theta, Rng& noise) const = 0;
  /// Every task constant, defaults filled in; `make_task` accepts it back.
  virtual Json constants() const = 0;
};

/// Builds a task from its config object ({"name": ..., constants...}).
/// Unknown names or keys are rejected.
std::unique_ptr<Task> make_task(const Json& config);

// ---------------------------------------------------------------------------
// Toy quadratic: true metric Q(theta) = 1.2 - |theta|^2, surrogate
// Qhat(theta | h) = 1.2 - (h0 theta0^2 + h1 theta1^2).

template <typename Derived>
double quadratic_eval(const Eigen::MatrixBase<Derived>& theta) {
  return 1.2 - theta.squaredNorm();
}

template <typename DerivedT, typename DerivedH>
double quadratic_surrogate(const Eigen::MatrixBase<DerivedT>& theta,
                           const Eigen::MatrixBase<DerivedH>& h) {
  return 1.2 - (h.array() * theta.array().square()).sum();
}

/// d Qhat / d theta.
template <typename DerivedT, typename DerivedH>
Eigen::Matrix<typename DerivedT::Scalar, Eigen::Dynamic, 1> quadratic_surrogate_gradient(
    const Eigen::MatrixBase<DerivedT>& theta, const Eigen::MatrixBase<DerivedH>& h) {
  return -2.0 * (h.array() * theta.array()).matrix();
}

/// h as the (h0, h1) coefficient vector.
Eigen::Vector2d quadratic_coefficients(const HyperparamVector& h);

/// One gradient-ascent step on Qhat: theta_i <- theta_i (1 - 2 lr h_i).
ParamVector quadratic_step(const ParamVector& theta, const HyperparamVector& h, double lr);

/// Additive N(0, sigma^2) noise on h0 and h1, clamped to [0, 1].
HyperparamVector quadratic_explore_direction(const HyperparamVector& h, Rng& rng, double sigma);

std::vector<HyperparamSpec> quadratic_hyperparam_specs();

class QuadraticTask final : public Task {
 public:
  explicit QuadraticTask(double lr = 0.01, ParamVector theta0 = Eigen::Vector2d(0.9, 0.9));

  std::string name() const override { return "quadratic"; }
  Eigen::Index dim() const override { return 2; }
  std::vector<HyperparamSpec> hyperparam_specs() const override;
  ParamVector init(std::uint64_t seed) const override;
  ParamVector step(const ParamVector& theta, const HyperparamVector& h, Rng& noise) const override;
  double eval(const ParamVector& theta, Rng& noise) const override;
  Json constants() const override;

  double lr() const { return lr_; }

 private:
  double lr_;
  ParamVector theta0_;
};

// ---------------------------------------------------------------------------
// Noisy quadratic: gradient descent on f(theta) = theta' A theta / 2 with a
// fixed positive-definite A; eval reports -f plus Gaussian noise.

struct NoisyQuadraticOptions {
  int dim = 8;
  double noise = 0.1;
  double min_curvature = 0.1;
  double max_curvature = 10.0;
  std::uint64_t problem_seed = 1;
  double init_scale = 1.0;
};

class NoisyQuadraticTask final : public Task {
 public:
  explicit NoisyQuadraticTask(NoisyQuadraticOptions options = {});

  std::string name() const override { return "noisy_quadratic"; }
  Eigen::Index dim() const override { return options_.dim; }
  std::vector<HyperparamSpec> hyperparam_specs() const override;
  ParamVector init(std::uint64_t seed) const override;
  ParamVector step(const ParamVector& theta, const HyperparamVector& h, Rng& noise) const override;
  double eval(const ParamVector& theta, Rng& noise) const override;
  Json constants() const override;

  /// f(theta), without noise.
  double objective(const ParamVector& theta) const { return 0.5 * theta.dot(curvature_ * theta); }
  const Eigen::MatrixXd& curvature() const { return curvature_; }
  double max_stable_lr() const { return 2.0 / options_.max_curvature; }

 private:
  NoisyQuadraticOptions options_;
  Eigen::MatrixXd curvature_;
};

// ---------------------------------------------------------------------------
// L2-regularised logistic regression on seeded Gaussian class blobs. step is
// one minibatch SGD step on the log-loss; eval is validation accuracy.
// Parameters are [weights..., bias]; the bias is not regularised.

/// Mean log-loss of labels y in {0,1} under logits X w, plus l2/2 |w_{0..d-1}|^2.
/// X carries a trailing column of ones for the bias.
template <typename DW, typename DX, typename DY>
double logistic_loss(const Eigen::MatrixBase<DW>& w, const Eigen::MatrixBase<DX>& X,
                     const Eigen::MatrixBase<DY>& y, double l2) {
  const Eigen::ArrayXd z = (X * w).array();
  const Eigen::ArrayXd softplus = z.max(0.0) + (-z.abs()).exp().log1p();
  const auto d = w.size() - 1;
  return (softplus - y.array() * z).mean() + 0.5 * l2 * w.head(d).squaredNorm();
}

template <typename DW, typename DX, typename DY>
Eigen::VectorXd logistic_gradient(const Eigen::MatrixBase<DW>& w, const Eigen::MatrixBase<DX>& X,
                                  const Eigen::MatrixBase<DY>& y, double l2) {
  const Eigen::ArrayXd z = (X * w).array();
  const Eigen::VectorXd residual = ((1.0 + (-z).exp()).inverse() - y.array()).matrix();
  Eigen::VectorXd grad = X.transpose() * residual / static_cast<double>(X.rows());
  const auto d = w.size() - 1;
  grad.head(d) += l2 * w.head(d);
  return grad;
}

struct LogisticOptions {
  int features = 10;
  int train_size = 256;
  int validation_size = 512;
  double separation = 2.0;
  int batch_size = 16;
  std::uint64_t data_seed = 7;
  double init_scale = 0.1;
};

class LogisticRegressionTask final : public Task {
 public:
  explicit LogisticRegressionTask(LogisticOptions options = {});

  std::string name() const override { return "logistic_regression"; }
  Eigen::Index dim() const override { return options_.features + 1; }
  std::vector<HyperparamSpec> hyperparam_specs() const override;
  ParamVector init(std::uint64_t seed) const override;
  ParamVector step(const ParamVector& theta, const HyperparamVector& h, Rng& noise) const override;
  double eval(const ParamVector& theta, Rng& noise) const override;
  Json constants() const override;

  double accuracy(const ParamVector& theta) const;
  double train_loss(const ParamVector& theta, double l2) const {
    return logistic_loss(theta, train_x_, train_y_, l2);
  }
  const Eigen::MatrixXd& train_x() const { return train_x_; }
  const Eigen::VectorXd& train_y() const { return train_y_; }

 private:
  LogisticOptions options_;
  Eigen::MatrixXd train_x_;
  Eigen::VectorXd train_y_;
  Eigen::MatrixXd val_x_;
  Eigen::VectorXd val_y_;
};

}  // namespace pbt
