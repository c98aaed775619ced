#include "saeaudit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "saeaudit/errors.hpp"

namespace saeaudit {

SoftmaxCrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits rows " + std::to_string(logits.rows()) +
                     " != labels length " + std::to_string(labels.size()));
  }
  if (logits.rows() == 0) throw InputError("softmax_cross_entropy: empty batch");
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InputError("softmax_cross_entropy: label " + std::to_string(y) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
  }

  SoftmaxCrossEntropy out;
  out.grad = Matrix(batch, classes);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double* row = logits.row_ptr(i);
    double* grow = out.grad.row_ptr(i);
    double mx = row[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      grow[c] = std::exp(row[c] - mx);
      sum += grow[c];
    }
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    loss += std::log(sum) - (row[y] - mx);
    const double inv_sum = 1.0 / sum;
    for (std::size_t c = 0; c < classes; ++c) grow[c] = grow[c] * inv_sum * inv_batch;
    grow[y] -= inv_batch;
  }
  out.loss = loss * inv_batch;
  return out;
}

OptimizerState OptimizerState::sgd(double lr) {
  OptimizerState s;
  s.kind = OptimizerKind::Sgd;
  s.learning_rate = lr;
  s.momentum = 0.0;
  return s;
}

OptimizerState OptimizerState::sgd_momentum(double lr, double mu) {
  if (mu < 0.0 || mu >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  OptimizerState s;
  s.kind = OptimizerKind::SgdMomentum;
  s.learning_rate = lr;
  s.momentum = mu;
  return s;
}

void sgd_step(std::span<Matrix* const> params, std::span<const Matrix> grads,
              OptimizerState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  }
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const Matrix* p : params) state.velocity.emplace_back(p->rows(), p->cols());
  }
  if (state.velocity.size() != params.size()) {
    throw ShapeError("sgd_step: optimizer state sized for a different parameter list");
  }
  const double mu = state.kind == OptimizerKind::SgdMomentum ? state.momentum : 0.0;
  const double lr = state.learning_rate;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& param = *params[p];
    const Matrix& grad = grads[p];
    Matrix& vel = state.velocity[p];
    if (!param.same_shape(grad) || !param.same_shape(vel)) {
      throw ShapeError("sgd_step: shape mismatch at parameter " + std::to_string(p));
    }
    double* pv = vel.data().data();
    double* pp = param.data().data();
    const double* pg = grad.data().data();
    for (std::size_t i = 0; i < param.size(); ++i) {
      pv[i] = mu * pv[i] + pg[i];
      pp[i] -= lr * pv[i];
    }
  }
}

std::vector<double> topk_mask(std::span<const double> v, std::size_t k) {
  std::vector<double> out(v.begin(), v.end());
  std::vector<std::size_t> scratch;
  topk_mask_row(out, k, scratch);
  return out;
}

void topk_mask_row(std::span<double> v, std::size_t k, std::vector<std::size_t>& scratch) {
  if (k > v.size()) {
    throw InputError("topk_mask: k = " + std::to_string(k) + " exceeds length " +
                     std::to_string(v.size()));
  }
  if (k == v.size()) return;
  scratch.resize(v.size());
  std::iota(scratch.begin(), scratch.end(), std::size_t{0});
  const auto by_value_then_index = [&v](std::size_t a, std::size_t b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;
  };
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k),
                   scratch.end(), by_value_then_index);
  for (std::size_t i = k; i < scratch.size(); ++i) v[scratch[i]] = 0.0;
}

}  // namespace saeaudit
