#pragma once

#include <span>
#include <vector>

#include "saeaudit/matrix.hpp"

namespace saeaudit {

struct SoftmaxCrossEntropy {
  double loss = 0.0;  // mean over the batch
  Matrix grad;        // d(loss)/d(logits), already divided by batch size
};

// Numerically stabilized (max-subtraction) softmax cross entropy.
// labels[i] must lie in [0, logits.cols()).
SoftmaxCrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

enum class OptimizerKind { Sgd, SgdMomentum };

// Plain SGD is the momentum = 0 special case of v <- mu*v + g; p <- p - lr*v.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Sgd;
  double learning_rate = 0.01;
  double momentum = 0.0;  // in [0, 1)
  std::vector<Matrix> velocity;  // sized to the parameters on first step

  static OptimizerState sgd(double lr);
  static OptimizerState sgd_momentum(double lr, double mu);
};

void sgd_step(std::span<Matrix* const> params, std::span<const Matrix> grads,
              OptimizerState& state);

// Keeps the k largest entries by value, zeroes the rest. Ties are broken
// toward the lower index. k must not exceed v.size().
std::vector<double> topk_mask(std::span<const double> v, std::size_t k);

// In-place row-wise variant used on hot paths; scratch holds indices and
// is reused between calls.
void topk_mask_row(std::span<double> v, std::size_t k, std::vector<std::size_t>& scratch);

}  // namespace saeaudit
