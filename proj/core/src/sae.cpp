#include "saeaudit/sae.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "saeaudit/container.hpp"
#include "saeaudit/errors.hpp"
#include "saeaudit/numerics.hpp"
#include "saeaudit/rng.hpp"

namespace saeaudit {

namespace {

void validate_config(const SaeConfig& c) {
  if (c.d < 1) throw ConfigError("sae: d must be positive");
  if (c.m <= c.d) throw ConfigError("sae: m must exceed d (overcomplete)");
  if (c.k < 1 || c.k > c.m) throw ConfigError("sae: k must lie in [1, m]");
  if (c.epochs < 0) throw ConfigError("sae: epochs must be >= 0");
  if (c.lr <= 0.0) throw ConfigError("sae: lr must be positive");
  if (c.batch_size < 1) throw ConfigError("sae: batch_size must be >= 1");
  if (c.momentum < 0.0 || c.momentum >= 1.0) throw ConfigError("sae: momentum in [0,1)");
}

void normalize_decoder_rows(Matrix& decoder) {
  for (std::size_t i = 0; i < decoder.rows(); ++i) {
    double* row = decoder.row_ptr(i);
    double norm = 0.0;
    for (std::size_t j = 0; j < decoder.cols(); ++j) norm += row[j] * row[j];
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      const double inv = 1.0 / norm;
      for (std::size_t j = 0; j < decoder.cols(); ++j) row[j] *= inv;
    }
  }
}

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* s = src.row_ptr(rows[i]);
    std::copy(s, s + src.cols(), out.row_ptr(i));
  }
  return out;
}

// relu then TopK per row; counts activation events per feature if asked.
Matrix encode_batch(const Matrix& x, const Matrix& enc, const Matrix& enc_bias, int k,
                    std::vector<std::size_t>& scratch, std::vector<int>* activation_counts) {
  Matrix z = matmul(x, enc);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double* row = z.row_ptr(i);
    const double* bias = enc_bias.row_ptr(0);
    for (std::size_t j = 0; j < z.cols(); ++j) {
      const double v = row[j] + bias[j];
      row[j] = v > 0.0 ? v : 0.0;
    }
    topk_mask_row({row, z.cols()}, static_cast<std::size_t>(k), scratch);
    if (activation_counts) {
      for (std::size_t j = 0; j < z.cols(); ++j) {
        if (row[j] > 0.0) ++(*activation_counts)[j];
      }
    }
  }
  return z;
}

Matrix decode_batch(const Matrix& code, const Matrix& dec, const Matrix& dec_bias) {
  Matrix xhat = matmul(code, dec);
  for (std::size_t i = 0; i < xhat.rows(); ++i) {
    double* row = xhat.row_ptr(i);
    const double* bias = dec_bias.row_ptr(0);
    for (std::size_t j = 0; j < xhat.cols(); ++j) row[j] += bias[j];
  }
  return xhat;
}

double full_mse(const Matrix& x, const Matrix& enc, const Matrix& enc_bias, const Matrix& dec,
                const Matrix& dec_bias, int k) {
  std::vector<std::size_t> scratch;
  const Matrix code = encode_batch(x, enc, enc_bias, k, scratch, nullptr);
  const Matrix xhat = decode_batch(code, dec, dec_bias);
  double s = 0.0;
  const double* pa = xhat.data().data();
  const double* pb = x.data().data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = pa[i] - pb[i];
    s += r * r;
  }
  return s / static_cast<double>(x.size());
}

}  // namespace

SaeModel::SaeModel(Matrix encoder, Matrix enc_bias, Matrix decoder, Matrix dec_bias,
                   SaeConfig config, SaeProvenance trained_on)
    : encoder_(std::move(encoder)),
      enc_bias_(std::move(enc_bias)),
      decoder_(std::move(decoder)),
      dec_bias_(std::move(dec_bias)),
      config_(config),
      trained_on_(std::move(trained_on)) {
  validate_config(config_);
  if (encoder_.rows() != static_cast<std::size_t>(config_.d) ||
      encoder_.cols() != static_cast<std::size_t>(config_.m) ||
      decoder_.rows() != static_cast<std::size_t>(config_.m) ||
      decoder_.cols() != static_cast<std::size_t>(config_.d) ||
      enc_bias_.cols() != static_cast<std::size_t>(config_.m) ||
      dec_bias_.cols() != static_cast<std::size_t>(config_.d)) {
    throw ShapeError("sae: parameter shapes do not match config");
  }
}

bool operator==(const SaeModel& a, const SaeModel& b) {
  return a.encoder_ == b.encoder_ && a.enc_bias_ == b.enc_bias_ && a.decoder_ == b.decoder_ &&
         a.dec_bias_ == b.dec_bias_ && a.config_.d == b.config_.d && a.config_.m == b.config_.m &&
         a.config_.k == b.config_.k && a.trained_on_.model_id == b.trained_on_.model_id &&
         a.trained_on_.layer == b.trained_on_.layer;
}

SaeModel train_sae(const ActivationBatch& acts, const SaeConfig& config, SaeTrainStats* stats) {
  validate_config(config);
  const Matrix& x = acts.values;
  if (static_cast<int>(x.cols()) != config.d) {
    throw ShapeError("train_sae: activations have " + std::to_string(x.cols()) +
                     " columns, config.d = " + std::to_string(config.d));
  }
  if (x.rows() == 0) throw InputError("train_sae: empty activation batch");

  SaeTrainStats local;
  SaeTrainStats& st = stats ? *stats : local;
  if (x.rows() < 10 * static_cast<std::size_t>(config.m)) {
    st.small_batch_warning = true;
    std::cerr << "train_sae: only " << x.rows() << " samples for m = " << config.m
              << " latents (10x m recommended)\n";
  }

  Rng rng = Rng::derive(config.seed, "sae-train");

  // Decoder rows start as random unit directions, encoder as their
  // transpose; dec_bias at the activation mean.
  Matrix decoder(static_cast<std::size_t>(config.m), static_cast<std::size_t>(config.d));
  for (double& v : decoder.data()) v = rng.normal();
  normalize_decoder_rows(decoder);
  Matrix encoder = transpose(decoder);
  Matrix enc_bias(1, static_cast<std::size_t>(config.m));
  Matrix dec_bias = column_sums(x);
  scale_inplace(dec_bias, 1.0 / static_cast<double>(x.rows()));

  st.initial_loss = full_mse(x, encoder, enc_bias, decoder, dec_bias, config.k);

  OptimizerState opt = config.momentum > 0.0
                           ? OptimizerState::sgd_momentum(config.lr, config.momentum)
                           : OptimizerState::sgd(config.lr);
  std::vector<Matrix*> params = {&encoder, &enc_bias, &decoder, &dec_bias};
  std::vector<Matrix> grads(4);

  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> scratch;
  std::vector<int> activation_counts(static_cast<std::size_t>(config.m));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // gentle linear decay to a quarter of the base rate
    opt.learning_rate =
        config.lr * (1.0 - 0.75 * static_cast<double>(epoch) /
                               std::max(1.0, static_cast<double>(config.epochs - 1)));
    rng.shuffle(order);
    std::fill(activation_counts.begin(), activation_counts.end(), 0);
    double epoch_loss = 0.0;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const Matrix xb = gather_rows(x, std::span(order).subspan(start, end - start));
      const std::size_t b = xb.rows();

      Matrix code = encode_batch(xb, encoder, enc_bias, config.k, scratch, &activation_counts);
      Matrix xhat = decode_batch(code, decoder, dec_bias);

      // residual and loss
      double loss = 0.0;
      {
        double* ph = xhat.data().data();
        const double* px = xb.data().data();
        for (std::size_t i = 0; i < xhat.size(); ++i) {
          ph[i] -= px[i];
          loss += ph[i] * ph[i];
        }
        loss /= static_cast<double>(xhat.size());
      }
      if (!std::isfinite(loss)) {
        throw TrainingError("train_sae: non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss * static_cast<double>(b);
      seen += b;

      // backward; TopK mask straight-through, relu gate via code > 0
      scale_inplace(xhat, 2.0 / static_cast<double>(xhat.size()));  // d(loss)/d(xhat)
      grads[2] = matmul_tn(code, xhat);
      grads[3] = column_sums(xhat);
      Matrix dcode = matmul_nt(xhat, decoder);
      {
        double* pd = dcode.data().data();
        const double* pc = code.data().data();
        for (std::size_t i = 0; i < dcode.size(); ++i) {
          if (pc[i] <= 0.0) pd[i] = 0.0;
        }
      }
      grads[0] = matmul_tn(xb, dcode);
      grads[1] = column_sums(dcode);

      sgd_step(params, grads, opt);
      normalize_decoder_rows(decoder);
    }
    st.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));

    // Re-seed features that stayed silent all epoch toward the input the
    // model currently reconstructs worst; dead features would otherwise
    // pollute the never-activate filter downstream.
    std::vector<int> dead;
    for (int j = 0; j < config.m; ++j) {
      if (activation_counts[static_cast<std::size_t>(j)] == 0) dead.push_back(j);
    }
    if (!dead.empty() && epoch + 1 < config.epochs) {
      const Matrix code = encode_batch(x, encoder, enc_bias, config.k, scratch, nullptr);
      const Matrix xhat = decode_batch(code, decoder, dec_bias);
      std::size_t worst = 0;
      double worst_err = -1.0;
      for (std::size_t i = 0; i < x.rows(); ++i) {
        double err = 0.0;
        const double* pa = xhat.row_ptr(i);
        const double* pb = x.row_ptr(i);
        for (std::size_t j = 0; j < x.cols(); ++j) {
          const double r = pa[j] - pb[j];
          err += r * r;
        }
        if (err > worst_err) {
          worst_err = err;
          worst = i;
        }
      }
      std::vector<double> dir(x.cols());
      double norm = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) {
        dir[j] = x(worst, j) - dec_bias(0, j);
        norm += dir[j] * dir[j];
      }
      norm = std::sqrt(norm);
      if (norm > 1e-12) {
        for (double& v : dir) v /= norm;
        for (int j : dead) {
          const std::size_t ju = static_cast<std::size_t>(j);
          for (std::size_t i = 0; i < x.cols(); ++i) {
            decoder(ju, i) = dir[i];
            encoder(i, ju) = dir[i];
            opt.velocity[2](ju, i) = 0.0;
            opt.velocity[0](i, ju) = 0.0;
          }
          enc_bias(0, ju) = 0.0;
          opt.velocity[1](0, ju) = 0.0;
          ++st.dead_features_resampled;
        }
      }
    }
  }

  st.final_loss = full_mse(x, encoder, enc_bias, decoder, dec_bias, config.k);

  SaeProvenance prov{acts.model_id, acts.layer};
  return SaeModel(std::move(encoder), std::move(enc_bias), std::move(decoder),
                  std::move(dec_bias), config, std::move(prov));
}

SparseCode encode(const SaeModel& sae, const ActivationBatch& acts) {
  if (acts.layer != 0 && sae.trained_on().layer != 0 && acts.layer != sae.trained_on().layer) {
    throw InputError("encode: activations from layer " + std::to_string(acts.layer) +
                     " but SAE was trained on layer " + std::to_string(sae.trained_on().layer));
  }
  return encode(sae, acts.values);
}

SparseCode encode(const SaeModel& sae, const Matrix& acts) {
  if (static_cast<int>(acts.cols()) != sae.d()) {
    throw ShapeError("encode: activations have " + std::to_string(acts.cols()) +
                     " columns, SAE expects " + std::to_string(sae.d()));
  }
  std::vector<std::size_t> scratch;
  SparseCode code;
  code.k = sae.k();
  code.values = encode_batch(acts, sae.encoder(), sae.enc_bias(), sae.k(), scratch, nullptr);
  return code;
}

Matrix decode(const SaeModel& sae, const SparseCode& code) {
  if (static_cast<int>(code.values.cols()) != sae.m()) {
    throw ShapeError("decode: code has " + std::to_string(code.values.cols()) +
                     " columns, SAE expects " + std::to_string(sae.m()));
  }
  return decode_batch(code.values, sae.decoder(), sae.dec_bias());
}

SparseCode ablate(const SparseCode& code, std::span<const int> features) {
  for (int f : features) {
    if (f < 0 || static_cast<std::size_t>(f) >= code.values.cols()) {
      throw InputError("ablate: feature index " + std::to_string(f) + " outside [0, " +
                       std::to_string(code.values.cols()) + ")");
    }
  }
  SparseCode out = code;
  for (std::size_t i = 0; i < out.values.rows(); ++i) {
    double* row = out.values.row_ptr(i);
    for (int f : features) row[f] = 0.0;
  }
  return out;
}

double reconstruction_mse(const SaeModel& sae, const Matrix& acts) {
  return full_mse(acts, sae.encoder(), sae.enc_bias(), sae.decoder(), sae.dec_bias(), sae.k());
}

void save_sae(const SaeModel& sae, const std::filesystem::path& path) {
  ContainerWriter w(path, ContainerKind::Sae);
  const SaeConfig& c = sae.config();
  w.u32(static_cast<std::uint32_t>(c.d));
  w.u32(static_cast<std::uint32_t>(c.m));
  w.u32(static_cast<std::uint32_t>(c.k));
  w.u32(static_cast<std::uint32_t>(c.epochs));
  w.f64(c.lr);
  w.f64(c.momentum);
  w.u32(static_cast<std::uint32_t>(c.batch_size));
  w.u64(c.seed);
  w.matrix(sae.encoder());
  w.matrix(sae.enc_bias());
  w.matrix(sae.decoder());
  w.matrix(sae.dec_bias());
  w.str(sae.trained_on().model_id);
  w.u32(static_cast<std::uint32_t>(sae.trained_on().layer));
  w.close();
}

SaeModel load_sae(const std::filesystem::path& path) {
  ContainerReader r(path, ContainerKind::Sae);
  SaeConfig c;
  c.d = static_cast<int>(r.u32());
  c.m = static_cast<int>(r.u32());
  c.k = static_cast<int>(r.u32());
  c.epochs = static_cast<int>(r.u32());
  c.lr = r.f64();
  c.momentum = r.f64();
  c.batch_size = static_cast<int>(r.u32());
  c.seed = r.u64();
  Matrix encoder = r.matrix();
  Matrix enc_bias = r.matrix();
  Matrix decoder = r.matrix();
  Matrix dec_bias = r.matrix();
  SaeProvenance prov;
  prov.model_id = r.str();
  prov.layer = static_cast<int>(r.u32());
  return SaeModel(std::move(encoder), std::move(enc_bias), std::move(decoder),
                  std::move(dec_bias), c, std::move(prov));
}

}  // namespace saeaudit
