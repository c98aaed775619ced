#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "saeaudit/dataset.hpp"
#include "saeaudit/matrix.hpp"
#include "saeaudit/numerics.hpp"
#include "saeaudit/rng.hpp"

namespace saeaudit {

// Post-nonlinearity activation captured at hidden layer `layer_index`
// (1-based, in [1, num_hidden]).
struct CapturedActivation {
  int layer_index = 0;
  Matrix values;  // batch x hidden_dim
};

// Feedforward classifier with num_hidden relu layers of shared width
// hidden_dim and a linear head. Shared width means one SAE configuration
// serves any hidden layer.
class LayeredClassifier {
 public:
  LayeredClassifier() = default;

  // He-initialized (scaled by fan-in) weights, zero biases.
  LayeredClassifier(int input_dim, int hidden_dim, int num_hidden, int num_classes, Rng& rng);

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int num_hidden() const { return num_hidden_; }
  int num_classes() const { return num_classes_; }

  Matrix forward(const Matrix& x) const;

  // Captured values are the post-relu activations of the requested layer;
  // the returned logits are bitwise those of forward().
  std::pair<CapturedActivation, Matrix> forward_capture(const Matrix& x, int layer) const;

  // Resumes the forward pass after the captured layer: applies hidden
  // layers layer_index+1 ... num_hidden and the head.
  Matrix forward_from(const CapturedActivation& h) const;

  // Parameters in a fixed order: W1, b1, ..., WL, bL, W_head, b_head.
  // Biases are stored as 1 x n matrices.
  std::vector<Matrix*> params();
  std::vector<const Matrix*> params() const;
  static std::vector<std::string> param_names(int num_hidden);

  Matrix& hidden_weight(int layer) { return hidden_w_[static_cast<std::size_t>(layer - 1)]; }
  Matrix& hidden_bias(int layer) { return hidden_b_[static_cast<std::size_t>(layer - 1)]; }
  const Matrix& hidden_weight(int layer) const { return hidden_w_[static_cast<std::size_t>(layer - 1)]; }
  const Matrix& hidden_bias(int layer) const { return hidden_b_[static_cast<std::size_t>(layer - 1)]; }
  Matrix& head_weight() { return head_w_; }
  Matrix& head_bias() { return head_b_; }
  const Matrix& head_weight() const { return head_w_; }
  const Matrix& head_bias() const { return head_b_; }

  // Re-initializes the head (or one hidden layer) from the rng.
  void reinit_head(Rng& rng);
  void reinit_hidden(int layer, Rng& rng);

  friend bool operator==(const LayeredClassifier& a, const LayeredClassifier& b);

 private:
  void check_layer(int layer) const;

  int input_dim_ = 0;
  int hidden_dim_ = 0;
  int num_hidden_ = 0;
  int num_classes_ = 0;
  std::vector<Matrix> hidden_w_;
  std::vector<Matrix> hidden_b_;
  Matrix head_w_;
  Matrix head_b_;
};

struct TrainConfig {
  int epochs = 25;
  double lr = 0.05;
  double momentum = 0.9;
  int batch_size = 64;
  double l2 = 1e-4;
};

// Model plus the training metadata audits need to reference it.
struct Checkpoint {
  LayeredClassifier model;
  std::uint64_t seed = 0;
  int epochs = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// Mean softmax cross entropy plus 0.5*l2*|W|^2 on weights (not biases);
// grads come back in params() order. Returns the regularized loss.
double classifier_loss_and_grads(const LayeredClassifier& model, const Matrix& x,
                                 std::span<const int> labels, double l2,
                                 std::vector<Matrix>& grads);

// Options for the shared minibatch SGD loop. `trainable`, when non-empty,
// masks parameters in params() order; frozen parameters receive no update.
struct FitOptions {
  int epochs = 10;
  double lr = 0.01;
  double momentum = 0.9;
  int batch_size = 64;
  double l2 = 0.0;
  double l1 = 0.0;
  std::vector<bool> trainable;
};

// Shuffles each epoch with the rng; throws TrainingError on non-finite
// loss, reporting the epoch and batch.
void fit(LayeredClassifier& model, const Dataset& train, const FitOptions& opts, Rng& rng);

// Trains a fresh classifier and records final train/test accuracy.
// epochs = 0 returns the initialized model (chance-level accuracy).
Checkpoint train_classifier(const TrainTest& data, int hidden_dim, int num_hidden,
                            const TrainConfig& config, Rng& rng);

std::vector<int> predict(const LayeredClassifier& model, const Matrix& x);
double accuracy(const LayeredClassifier& model, const Dataset& ds);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace saeaudit
