#include "pbt/tasks.hpp"

#include <cmath>
#include <random>

#include <Eigen/QR>

#include "pbt/strategies.hpp"

namespace pbt {

namespace {

Eigen::VectorXd gaussian_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

ParamVector checked(ParamVector theta, std::string_view task) {
  if (!all_finite(theta)) throw TaskFailure(std::string(task) + ": parameters diverged");
  return theta;
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

// ---------------------------------------------------------------------------

Eigen::Vector2d quadratic_coefficients(const HyperparamVector& h) {
  return {numeric(h, "h0"), numeric(h, "h1")};
}

ParamVector quadratic_step(const ParamVector& theta, const HyperparamVector& h, double lr) {
  if (!(lr > 0.0)) throw Error("quadratic_step needs lr > 0");
  const Eigen::Vector2d coef = quadratic_coefficients(h);
  return theta + lr * quadratic_surrogate_gradient(theta, coef);
}

std::vector<HyperparamSpec> quadratic_hyperparam_specs() {
  HyperparamSpec h0{.name = "h0", .prior = Prior::uniform(0.0, 1.0)};
  HyperparamSpec h1{.name = "h1", .prior = Prior::uniform(0.0, 1.0)};
  return {h0, h1};
}

HyperparamVector quadratic_explore_direction(const HyperparamVector& h, Rng& rng, double sigma) {
  if (sigma < 0.0) throw Error("quadratic_explore_direction needs sigma >= 0");
  return gaussian_perturb(h, quadratic_hyperparam_specs(), sigma, rng);
}

QuadraticTask::QuadraticTask(double lr, ParamVector theta0) : lr_(lr), theta0_(std::move(theta0)) {
  if (!(lr_ > 0.0)) throw Error("quadratic: lr must be > 0");
  if (theta0_.size() != 2 || !all_finite(theta0_)) throw Error("quadratic: theta0 must be 2 finite values");
}

std::vector<HyperparamSpec> QuadraticTask::hyperparam_specs() const {
  return quadratic_hyperparam_specs();
}

ParamVector QuadraticTask::init(std::uint64_t) const { return theta0_; }

ParamVector QuadraticTask::step(const ParamVector& theta, const HyperparamVector& h, Rng&) const {
  return checked(quadratic_step(theta, h, lr_), "quadratic");
}

double QuadraticTask::eval(const ParamVector& theta, Rng&) const { return quadratic_eval(theta); }

Json QuadraticTask::constants() const {
  return Json{{"name", name()}, {"lr", lr_}, {"theta0", {theta0_[0], theta0_[1]}}};
}

// ---------------------------------------------------------------------------

NoisyQuadraticTask::NoisyQuadraticTask(NoisyQuadraticOptions options) : options_(options) {
  if (options_.dim < 1) throw Error("noisy_quadratic: dim must be >= 1");
  if (!(options_.noise >= 0.0)) throw Error("noisy_quadratic: noise must be >= 0");
  if (!(options_.min_curvature > 0.0 && options_.min_curvature <= options_.max_curvature)) {
    throw Error("noisy_quadratic: need 0 < min_curvature <= max_curvature");
  }
  const Eigen::Index d = options_.dim;
  Eigen::VectorXd eigenvalues(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double frac = d == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(d - 1);
    eigenvalues[i] = options_.min_curvature *
                     std::pow(options_.max_curvature / options_.min_curvature, frac);
  }
  Rng rng(splitmix64(options_.problem_seed));
  Eigen::MatrixXd gauss(d, d);
  for (Eigen::Index j = 0; j < d; ++j) gauss.col(j) = gaussian_vector(d, rng);
  const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
  curvature_ = rotation * eigenvalues.asDiagonal() * rotation.transpose();
  curvature_ = 0.5 * (curvature_ + curvature_.transpose()).eval();
}

std::vector<HyperparamSpec> NoisyQuadraticTask::hyperparam_specs() const {
  return {HyperparamSpec{.name = "lr", .prior = Prior::log_uniform(1e-4, 0.3)}};
}

ParamVector NoisyQuadraticTask::init(std::uint64_t seed) const {
  Rng rng(seed);
  return gaussian_vector(options_.dim, rng, options_.init_scale);
}

ParamVector NoisyQuadraticTask::step(const ParamVector& theta, const HyperparamVector& h,
                                     Rng&) const {
  const double lr = numeric(h, "lr");
  return checked(theta - lr * (curvature_ * theta), "noisy_quadratic");
}

double NoisyQuadraticTask::eval(const ParamVector& theta, Rng& noise) const {
  double score = -objective(theta);
  if (options_.noise > 0.0) score += std::normal_distribution<double>(0.0, options_.noise)(noise);
  return score;
}

Json NoisyQuadraticTask::constants() const {
  return Json{{"name", name()},
              {"dim", options_.dim},
              {"noise", options_.noise},
              {"min_curvature", options_.min_curvature},
              {"max_curvature", options_.max_curvature},
              {"problem_seed", options_.problem_seed},
              {"init_scale", options_.init_scale}};
}

// ---------------------------------------------------------------------------

LogisticRegressionTask::LogisticRegressionTask(LogisticOptions options) : options_(options) {
  if (options_.features < 1 || options_.train_size < 2 || options_.validation_size < 2 ||
      options_.batch_size < 1) {
    throw Error("logistic_regression: sizes must be positive (train/validation >= 2)");
  }
  const Eigen::Index d = options_.features;
  Rng rng(splitmix64(options_.data_seed));
  const Eigen::VectorXd direction = gaussian_vector(d, rng).normalized();

  auto blobs = [&](int n, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
    x.resize(n, d + 1);
    y.resize(n);
    for (int i = 0; i < n; ++i) {
      const double label = i % 2;
      y[i] = label;
      const Eigen::VectorXd centre = (label - 0.5) * options_.separation * direction;
      x.row(i).head(d) = (centre + gaussian_vector(d, rng)).transpose();
      x(i, d) = 1.0;
    }
  };
  blobs(options_.train_size, train_x_, train_y_);
  blobs(options_.validation_size, val_x_, val_y_);
}

std::vector<HyperparamSpec> LogisticRegressionTask::hyperparam_specs() const {
  return {HyperparamSpec{.name = "l2", .prior = Prior::log_uniform(1e-5, 1.0)},
          HyperparamSpec{.name = "lr", .prior = Prior::log_uniform(1e-4, 1.0)}};
}

ParamVector LogisticRegressionTask::init(std::uint64_t seed) const {
  Rng rng(seed);
  return gaussian_vector(dim(), rng, options_.init_scale);
}

ParamVector LogisticRegressionTask::step(const ParamVector& theta, const HyperparamVector& h,
                                         Rng& noise) const {
  const double lr = numeric(h, "lr");
  const double l2 = numeric(h, "l2");
  std::uniform_int_distribution<Eigen::Index> pick(0, train_x_.rows() - 1);
  std::vector<Eigen::Index> batch(static_cast<std::size_t>(options_.batch_size));
  for (auto& i : batch) i = pick(noise);
  const Eigen::MatrixXd x = train_x_(batch, Eigen::placeholders::all);
  const Eigen::VectorXd y = train_y_(batch);

  const double loss = logistic_loss(theta, x, y, l2);
  if (!std::isfinite(loss)) throw TaskFailure("logistic_regression: non-finite loss");
  return checked(theta - lr * logistic_gradient(theta, x, y, l2), "logistic_regression");
}

double LogisticRegressionTask::accuracy(const ParamVector& theta) const {
  const Eigen::ArrayXd z = (val_x_ * theta).array();
  const Eigen::ArrayXd predicted = (z > 0.0).cast<double>();
  return (predicted == val_y_.array()).cast<double>().mean();
}

double LogisticRegressionTask::eval(const ParamVector& theta, Rng&) const {
  return accuracy(theta);
}

Json LogisticRegressionTask::constants() const {
  return Json{{"name", name()},
              {"features", options_.features},
              {"train_size", options_.train_size},
              {"validation_size", options_.validation_size},
              {"separation", options_.separation},
              {"batch_size", options_.batch_size},
              {"data_seed", options_.data_seed},
              {"init_scale", options_.init_scale}};
}

// ---------------------------------------------------------------------------

std::unique_ptr<Task> make_task(const Json& config) {
  if (!config.is_object() || !config.contains("name")) throw Error("task: missing 'name'");
  const auto name = config.at("name").get<std::string>();
  try {
    if (name == "quadratic") {
      reject_unknown_keys(config, {"name", "lr", "theta0"}, "task");
      ParamVector theta0 = Eigen::Vector2d(0.9, 0.9);
      if (config.contains("theta0")) {
        const auto v = config.at("theta0").get<std::vector<double>>();
        theta0 = Eigen::Map<const ParamVector>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
      return std::make_unique<QuadraticTask>(get_or(config, "lr", 0.01), theta0);
    }
    if (name == "noisy_quadratic") {
      reject_unknown_keys(config, {"name", "dim", "noise", "min_curvature", "max_curvature",
                                   "problem_seed", "init_scale"},
                          "task");
      NoisyQuadraticOptions o;
      o.dim = get_or(config, "dim", o.dim);
      o.noise = get_or(config, "noise", o.noise);
      o.min_curvature = get_or(config, "min_curvature", o.min_curvature);
      o.max_curvature = get_or(config, "max_curvature", o.max_curvature);
      o.problem_seed = get_or(config, "problem_seed", o.problem_seed);
      o.init_scale = get_or(config, "init_scale", o.init_scale);
      return std::make_unique<NoisyQuadraticTask>(o);
    }
    if (name == "logistic_regression") {
      reject_unknown_keys(config, {"name", "features", "train_size", "validation_size",
                                   "separation", "batch_size", "data_seed", "init_scale"},
                          "task");
      LogisticOptions o;
      o.features = get_or(config, "features", o.features);
      o.train_size = get_or(config, "train_size", o.train_size);
      o.validation_size = get_or(config, "validation_size", o.validation_size);
      o.separation = get_or(config, "separation", o.separation);
      o.batch_size = get_or(config, "batch_size", o.batch_size);
      o.data_seed = get_or(config, "data_seed", o.data_seed);
      o.init_scale = get_or(config, "init_scale", o.init_scale);
      return std::make_unique<LogisticRegressionTask>(o);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error("task '" + name + "': " + ex.what());
  }
  throw Error("unknown task '" + name + "'");
}

}  // namespace pbt
