#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "framing/error.hpp"
#include "framing/features.hpp"
#include "framing/logprob.hpp"

namespace framing {

struct TrainingMeta {
  int iterations = 0;
  double final_loss = 0.0;
  double final_gradient_norm = 0.0;
  bool converged = false;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;  // loss after each accepted step, starting at w = 0
};

struct LogisticModel {
  DenseVector weights;
  double bias = 0.0;
  double l2_lambda = 1e-2;
  TrainingMeta meta;
  bool trained = false;

  template <typename Row>
  double logit(const Row& x) const {
    return dot(weights, x) + bias;
  }

  // Class 1 is side A; a logit of exactly 0 goes to B.
  template <typename Row>
  FramingLabel predict(const Row& x) const {
    return logit(x) > 0.0 ? FramingLabel::A : FramingLabel::B;
  }
};

struct LogisticOptions {
  double l2_lambda = 1e-2;
  int max_iterations = 5000;
  double gradient_tolerance = 1e-6;
  std::uint64_t seed = 0;
};

namespace detail {

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// Mean log-loss plus (lambda / 2) * ||w||^2; the bias is not regularized.
template <typename Row>
double logistic_loss(std::span<const Row> X, std::span<const int> y, const DenseVector& w, double b, double lambda) {
  double s = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double z = dot(w, X[i]) + b;
    s += detail::softplus(z) - static_cast<double>(y[i]) * z;
  }
  return s / static_cast<double>(X.size()) + 0.5 * lambda * squared_norm(w);
}

// Gradient with respect to (w, b): (X^T (sigma(Xw + b) - y)) / n + lambda w.
template <typename Row>
std::pair<DenseVector, double> logistic_gradient(std::span<const Row> X, std::span<const int> y, const DenseVector& w,
                                                 double b, double lambda) {
  DenseVector g(w.size(), 0.0);
  double gb = 0;
  const double inv_n = 1.0 / static_cast<double>(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double r = (detail::sigmoid(dot(w, X[i]) + b) - static_cast<double>(y[i])) * inv_n;
    add_scaled(g, X[i], r);
    gb += r;
  }
  for (std::size_t j = 0; j < w.size(); ++j) g[j] += lambda * w[j];
  return {std::move(g), gb};
}

// Full-batch gradient descent from zero weights. The weight block and the
// bias get their own fixed steps from curvature bounds (so one step never
// overshoots); a step that would increase the loss is halved and retried.
template <typename Row>
LogisticModel logistic_train(std::span<const Row> X, std::span<const int> y, const LogisticOptions& opt = {}) {
  if (X.size() != y.size()) throw InvalidArgument("logistic_train: |X| != |y|");
  if (X.size() < 2) throw InvalidArgument("logistic_train: need at least 2 examples");
  if (!(opt.l2_lambda >= 0)) throw InvalidArgument("logistic_train: l2_lambda must be >= 0");
  std::size_t positives = 0;
  for (int v : y) {
    if (v != 0 && v != 1) throw InvalidArgument("logistic_train: labels must be 0 or 1");
    positives += static_cast<std::size_t>(v);
  }
  if (positives == 0 || positives == y.size()) {
    throw InvalidArgument("logistic_train: training set has a single class (" + std::to_string(positives) + " of " +
                          std::to_string(y.size()) + " positive)");
  }
  const std::size_t dim = dimension(X[0]);
  double max_norm2 = 0;
  for (const auto& x : X) {
    if (dimension(x) != dim) throw InvalidArgument("logistic_train: rows differ in dimension");
    max_norm2 = std::max(max_norm2, squared_norm(x));
  }

  LogisticModel m;
  m.weights.assign(dim, 0.0);
  m.l2_lambda = opt.l2_lambda;
  m.meta.seed = opt.seed;

  // Hessian <= 2 * blockdiag(0.25 * max||x||^2 + lambda, 0.25).
  double step_w = 1.0 / (2.0 * (0.25 * max_norm2 + opt.l2_lambda));
  double step_b = 1.0 / (2.0 * 0.25);
  double loss = logistic_loss(X, y, m.weights, m.bias, opt.l2_lambda);
  m.meta.loss_history.push_back(loss);

  auto [g, gb] = logistic_gradient(X, y, m.weights, m.bias, opt.l2_lambda);
  for (int it = 0; it < opt.max_iterations; ++it) {
    const double gnorm = std::sqrt(squared_norm(g) + gb * gb);
    m.meta.final_gradient_norm = gnorm;
    if (gnorm < opt.gradient_tolerance) {
      m.meta.converged = true;
      break;
    }
    DenseVector w_next(dim);
    double b_next = 0, loss_next = 0;
    while (true) {
      for (std::size_t j = 0; j < dim; ++j) w_next[j] = m.weights[j] - step_w * g[j];
      b_next = m.bias - step_b * gb;
      loss_next = logistic_loss(X, y, w_next, b_next, opt.l2_lambda);
      if (loss_next <= loss) break;
      step_w /= 2;
      step_b /= 2;
      if (step_w < 1e-30) break;
    }
    if (loss_next > loss) break;  // no descent possible at machine precision
    m.weights = std::move(w_next);
    m.bias = b_next;
    loss = loss_next;
    m.meta.loss_history.push_back(loss);
    m.meta.iterations = it + 1;
    std::tie(g, gb) = logistic_gradient(X, y, m.weights, m.bias, opt.l2_lambda);
    m.meta.final_gradient_norm = std::sqrt(squared_norm(g) + gb * gb);
  }
  if (m.meta.final_gradient_norm < opt.gradient_tolerance) m.meta.converged = true;
  m.meta.final_loss = loss;
  for (double w : m.weights) {
    if (!std::isfinite(w)) throw Error("logistic_train: weights diverged");
  }
  m.trained = true;
  return m;
}

template <typename Row>
LogisticModel logistic_train(const std::vector<Row>& X, const std::vector<int>& y, const LogisticOptions& opt = {}) {
  return logistic_train(std::span<const Row>(X), std::span<const int>(y), opt);
}

inline nlohmann::json to_json(const TrainingMeta& m) {
  return {{"iterations", m.iterations},
          {"final_loss", m.final_loss},
          {"final_gradient_norm", m.final_gradient_norm},
          {"converged", m.converged},
          {"seed", m.seed}};
}

}  // namespace framing
