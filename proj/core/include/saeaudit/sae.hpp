#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "saeaudit/matrix.hpp"

namespace saeaudit {

// Activations with provenance: which model and which hidden layer they
// were captured from. An empty model_id / zero layer means "unknown".
struct ActivationBatch {
  Matrix values;  // batch x d
  std::string model_id;
  int layer = 0;
};

struct SaeConfig {
  int d = 64;    // activation dim
  int m = 256;   // latent count, must exceed d
  int k = 8;     // TopK sparsity, 1 <= k <= m
  int epochs = 40;
  double lr = 0.02;
  double momentum = 0.9;
  int batch_size = 256;
  std::uint64_t seed = 0;
};

struct SaeProvenance {
  std::string model_id;
  int layer = 0;
};

// Rows have at most K nonzeros, all strictly positive (relu before TopK).
struct SparseCode {
  Matrix values;  // batch x m
  int k = 0;
};

// TopK sparse autoencoder. Decoder rows are unit-normalized after every
// training step; dec_bias starts at the activation mean.
class SaeModel {
 public:
  SaeModel() = default;
  SaeModel(Matrix encoder, Matrix enc_bias, Matrix decoder, Matrix dec_bias,
           SaeConfig config, SaeProvenance trained_on);

  const Matrix& encoder() const { return encoder_; }      // d x m
  const Matrix& enc_bias() const { return enc_bias_; }    // 1 x m
  const Matrix& decoder() const { return decoder_; }      // m x d
  const Matrix& dec_bias() const { return dec_bias_; }    // 1 x d
  const SaeConfig& config() const { return config_; }
  const SaeProvenance& trained_on() const { return trained_on_; }

  int d() const { return config_.d; }
  int m() const { return config_.m; }
  int k() const { return config_.k; }

  friend bool operator==(const SaeModel& a, const SaeModel& b);

 private:
  Matrix encoder_;
  Matrix enc_bias_;
  Matrix decoder_;
  Matrix dec_bias_;
  SaeConfig config_;
  SaeProvenance trained_on_;
};

struct SaeTrainStats {
  double initial_loss = 0.0;  // mean squared error before any update
  double final_loss = 0.0;
  std::vector<double> epoch_losses;  // mean training loss per epoch
  int dead_features_resampled = 0;
  bool small_batch_warning = false;  // fewer than 10*m training samples
};

// Minimizes mean squared reconstruction error of decode(encode(x)) with
// TopK applied in the forward pass and the mask treated as constant in
// the backward pass. Features silent for a whole epoch are re-initialized
// toward the worst-reconstructed input.
SaeModel train_sae(const ActivationBatch& acts, const SaeConfig& config,
                   SaeTrainStats* stats = nullptr);

// code = topk(relu(x * encoder + enc_bias)) per row.
SparseCode encode(const SaeModel& sae, const ActivationBatch& acts);
SparseCode encode(const SaeModel& sae, const Matrix& acts);

// xhat = code * decoder + dec_bias.
Matrix decode(const SaeModel& sae, const SparseCode& code);

// Zeroes the listed feature indices in every row; all others untouched.
SparseCode ablate(const SparseCode& code, std::span<const int> features);

// Mean over batch and dims of (decode(encode(x)) - x)^2.
double reconstruction_mse(const SaeModel& sae, const Matrix& acts);

void save_sae(const SaeModel& sae, const std::filesystem::path& path);
SaeModel load_sae(const std::filesystem::path& path);

}  // namespace saeaudit
