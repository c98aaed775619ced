#include "saeaudit/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "saeaudit/container.hpp"
#include "saeaudit/errors.hpp"

namespace saeaudit {

namespace {

// relu(x*W + b) with the bias row broadcast over the batch.
Matrix dense_relu(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix z = matmul(x, w);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double* row = z.row_ptr(i);
    const double* bias = b.row_ptr(0);
    for (std::size_t j = 0; j < z.cols(); ++j) {
      const double v = row[j] + bias[j];
      row[j] = v > 0.0 ? v : 0.0;
    }
  }
  return z;
}

Matrix dense_linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix z = matmul(x, w);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double* row = z.row_ptr(i);
    const double* bias = b.row_ptr(0);
    for (std::size_t j = 0; j < z.cols(); ++j) row[j] += bias[j];
  }
  return z;
}

void he_init(Matrix& w, Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(w.rows()));
  for (double& v : w.data()) v = scale * rng.normal();
}

double squared_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

Dataset gather_batch(const Dataset& ds, std::span<const std::size_t> rows) {
  Dataset b;
  b.num_classes = ds.num_classes;
  b.inputs = Matrix(rows.size(), ds.inputs.cols());
  b.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* src = ds.inputs.row_ptr(rows[i]);
    std::copy(src, src + ds.inputs.cols(), b.inputs.row_ptr(i));
    b.labels.push_back(ds.labels[rows[i]]);
  }
  return b;
}

}  // namespace

LayeredClassifier::LayeredClassifier(int input_dim, int hidden_dim, int num_hidden,
                                     int num_classes, Rng& rng)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      num_hidden_(num_hidden),
      num_classes_(num_classes) {
  if (input_dim < 1 || hidden_dim < 1 || num_hidden < 1 || num_classes < 2) {
    throw ConfigError("classifier: dims must be positive and num_classes >= 2");
  }
  hidden_w_.reserve(static_cast<std::size_t>(num_hidden));
  hidden_b_.reserve(static_cast<std::size_t>(num_hidden));
  for (int l = 0; l < num_hidden; ++l) {
    const int fan_in = l == 0 ? input_dim : hidden_dim;
    Matrix w(static_cast<std::size_t>(fan_in), static_cast<std::size_t>(hidden_dim));
    he_init(w, rng);
    hidden_w_.push_back(std::move(w));
    hidden_b_.emplace_back(1, static_cast<std::size_t>(hidden_dim));
  }
  head_w_ = Matrix(static_cast<std::size_t>(hidden_dim), static_cast<std::size_t>(num_classes));
  he_init(head_w_, rng);
  head_b_ = Matrix(1, static_cast<std::size_t>(num_classes));
}

void LayeredClassifier::check_layer(int layer) const {
  if (layer < 1 || layer > num_hidden_) {
    throw InputError("layer " + std::to_string(layer) + " outside [1, " +
                     std::to_string(num_hidden_) + "]");
  }
}

Matrix LayeredClassifier::forward(const Matrix& x) const {
  if (static_cast<int>(x.cols()) != input_dim_) {
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(input_dim_));
  }
  Matrix h = x;
  for (int l = 0; l < num_hidden_; ++l) {
    h = dense_relu(h, hidden_w_[static_cast<std::size_t>(l)], hidden_b_[static_cast<std::size_t>(l)]);
  }
  return dense_linear(h, head_w_, head_b_);
}

std::pair<CapturedActivation, Matrix> LayeredClassifier::forward_capture(const Matrix& x,
                                                                         int layer) const {
  check_layer(layer);
  if (static_cast<int>(x.cols()) != input_dim_) {
    throw ShapeError("forward_capture: input has " + std::to_string(x.cols()) +
                     " columns, expected " + std::to_string(input_dim_));
  }
  CapturedActivation cap;
  cap.layer_index = layer;
  Matrix h = x;
  for (int l = 0; l < num_hidden_; ++l) {
    h = dense_relu(h, hidden_w_[static_cast<std::size_t>(l)], hidden_b_[static_cast<std::size_t>(l)]);
    if (l + 1 == layer) cap.values = h;
  }
  return {std::move(cap), dense_linear(h, head_w_, head_b_)};
}

Matrix LayeredClassifier::forward_from(const CapturedActivation& h) const {
  check_layer(h.layer_index);
  if (static_cast<int>(h.values.cols()) != hidden_dim_) {
    throw ShapeError("forward_from: activation width " + std::to_string(h.values.cols()) +
                     " != hidden_dim " + std::to_string(hidden_dim_));
  }
  Matrix v = h.values;
  for (int l = h.layer_index; l < num_hidden_; ++l) {
    v = dense_relu(v, hidden_w_[static_cast<std::size_t>(l)], hidden_b_[static_cast<std::size_t>(l)]);
  }
  return dense_linear(v, head_w_, head_b_);
}

std::vector<Matrix*> LayeredClassifier::params() {
  std::vector<Matrix*> out;
  out.reserve(2 * static_cast<std::size_t>(num_hidden_) + 2);
  for (int l = 0; l < num_hidden_; ++l) {
    out.push_back(&hidden_w_[static_cast<std::size_t>(l)]);
    out.push_back(&hidden_b_[static_cast<std::size_t>(l)]);
  }
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

std::vector<const Matrix*> LayeredClassifier::params() const {
  std::vector<const Matrix*> out;
  out.reserve(2 * static_cast<std::size_t>(num_hidden_) + 2);
  for (int l = 0; l < num_hidden_; ++l) {
    out.push_back(&hidden_w_[static_cast<std::size_t>(l)]);
    out.push_back(&hidden_b_[static_cast<std::size_t>(l)]);
  }
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

std::vector<std::string> LayeredClassifier::param_names(int num_hidden) {
  std::vector<std::string> names;
  for (int l = 1; l <= num_hidden; ++l) {
    names.push_back("hidden" + std::to_string(l) + ".weight");
    names.push_back("hidden" + std::to_string(l) + ".bias");
  }
  names.push_back("head.weight");
  names.push_back("head.bias");
  return names;
}

void LayeredClassifier::reinit_head(Rng& rng) {
  he_init(head_w_, rng);
  head_b_.fill(0.0);
}

void LayeredClassifier::reinit_hidden(int layer, Rng& rng) {
  check_layer(layer);
  he_init(hidden_w_[static_cast<std::size_t>(layer - 1)], rng);
  hidden_b_[static_cast<std::size_t>(layer - 1)].fill(0.0);
}

bool operator==(const LayeredClassifier& a, const LayeredClassifier& b) {
  if (a.input_dim_ != b.input_dim_ || a.hidden_dim_ != b.hidden_dim_ ||
      a.num_hidden_ != b.num_hidden_ || a.num_classes_ != b.num_classes_) {
    return false;
  }
  for (int l = 0; l < a.num_hidden_; ++l) {
    if (!(a.hidden_w_[static_cast<std::size_t>(l)] == b.hidden_w_[static_cast<std::size_t>(l)]) ||
        !(a.hidden_b_[static_cast<std::size_t>(l)] == b.hidden_b_[static_cast<std::size_t>(l)])) {
      return false;
    }
  }
  return a.head_w_ == b.head_w_ && a.head_b_ == b.head_b_;
}

double classifier_loss_and_grads(const LayeredClassifier& model, const Matrix& x,
                                 std::span<const int> labels, double l2,
                                 std::vector<Matrix>& grads) {
  const int L = model.num_hidden();
  // a[0] = x, a[l] = post-relu activation of hidden layer l
  std::vector<Matrix> acts;
  acts.reserve(static_cast<std::size_t>(L) + 1);
  acts.push_back(x);
  for (int l = 1; l <= L; ++l) {
    acts.push_back(dense_relu(acts.back(), model.hidden_weight(l), model.hidden_bias(l)));
  }
  const Matrix logits = dense_linear(acts.back(), model.head_weight(), model.head_bias());
  SoftmaxCrossEntropy sce = softmax_cross_entropy(logits, labels);

  double loss = sce.loss;
  if (l2 > 0.0) {
    double reg = squared_norm(model.head_weight());
    for (int l = 1; l <= L; ++l) reg += squared_norm(model.hidden_weight(l));
    loss += 0.5 * l2 * reg;
  }

  grads.assign(2 * static_cast<std::size_t>(L) + 2, Matrix());
  Matrix d = sce.grad;  // d(loss)/d(logits)

  Matrix dwh = matmul_tn(acts.back(), d);
  if (l2 > 0.0) {
    const double* w = model.head_weight().data().data();
    double* g = dwh.data().data();
    for (std::size_t i = 0; i < dwh.size(); ++i) g[i] += l2 * w[i];
  }
  grads[2 * static_cast<std::size_t>(L)] = std::move(dwh);
  grads[2 * static_cast<std::size_t>(L) + 1] = column_sums(d);
  d = matmul_nt(d, model.head_weight());

  for (int l = L; l >= 1; --l) {
    // relu gate: post-activation is positive iff the pre-activation was
    const Matrix& a = acts[static_cast<std::size_t>(l)];
    double* pd = d.data().data();
    const double* pa = a.data().data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (pa[i] <= 0.0) pd[i] = 0.0;
    }
    Matrix dw = matmul_tn(acts[static_cast<std::size_t>(l - 1)], d);
    if (l2 > 0.0) {
      const double* w = model.hidden_weight(l).data().data();
      double* g = dw.data().data();
      for (std::size_t i = 0; i < dw.size(); ++i) g[i] += l2 * w[i];
    }
    grads[2 * static_cast<std::size_t>(l - 1)] = std::move(dw);
    grads[2 * static_cast<std::size_t>(l - 1) + 1] = column_sums(d);
    if (l > 1) d = matmul_nt(d, model.hidden_weight(l));
  }
  return loss;
}

void fit(LayeredClassifier& model, const Dataset& train, const FitOptions& opts, Rng& rng) {
  if (opts.epochs < 0) throw ConfigError("fit: epochs must be >= 0");
  if (opts.lr <= 0.0) throw ConfigError("fit: lr must be positive");
  if (opts.batch_size < 1) throw ConfigError("fit: batch_size must be >= 1");
  if (opts.momentum < 0.0 || opts.momentum >= 1.0) throw ConfigError("fit: momentum in [0,1)");
  validate_dataset(train);
  if (train.num_classes > model.num_classes()) {
    throw ConfigError("fit: dataset has more classes than the model head");
  }

  std::vector<Matrix*> params = model.params();
  if (!opts.trainable.empty() && opts.trainable.size() != params.size()) {
    throw ConfigError("fit: trainable mask length " + std::to_string(opts.trainable.size()) +
                      " != parameter count " + std::to_string(params.size()));
  }

  OptimizerState opt = opts.momentum > 0.0 ? OptimizerState::sgd_momentum(opts.lr, opts.momentum)
                                           : OptimizerState::sgd(opts.lr);
  std::vector<Matrix> grads;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
      const Dataset batch = gather_batch(train, std::span(order).subspan(start, end - start));
      const double loss = classifier_loss_and_grads(model, batch.inputs, batch.labels, opts.l2, grads);
      if (!std::isfinite(loss)) {
        throw TrainingError("fit: non-finite loss " + std::to_string(loss) + " at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(start / opts.batch_size));
      }
      if (opts.l1 > 0.0) {
        // L1 subgradient on weight matrices (even indices), not biases
        for (std::size_t p = 0; p < grads.size(); p += 2) {
          const double* w = params[p]->data().data();
          double* g = grads[p].data().data();
          for (std::size_t i = 0; i < grads[p].size(); ++i) {
            g[i] += opts.l1 * (w[i] > 0.0 ? 1.0 : (w[i] < 0.0 ? -1.0 : 0.0));
          }
        }
      }
      if (!opts.trainable.empty()) {
        for (std::size_t p = 0; p < grads.size(); ++p) {
          if (!opts.trainable[p]) grads[p].fill(0.0);
        }
      }
      sgd_step(params, grads, opt);
    }
  }
}

Checkpoint train_classifier(const TrainTest& data, int hidden_dim, int num_hidden,
                            const TrainConfig& config, Rng& rng) {
  validate_dataset(data.train);
  validate_dataset(data.test);
  if (config.epochs < 0) throw ConfigError("train_classifier: epochs must be >= 0");

  Checkpoint ckpt;
  ckpt.model = LayeredClassifier(data.train.input_dim(), hidden_dim, num_hidden,
                                 data.train.num_classes, rng);
  if (config.epochs > 0) {
    FitOptions opts;
    opts.epochs = config.epochs;
    opts.lr = config.lr;
    opts.momentum = config.momentum;
    opts.batch_size = config.batch_size;
    opts.l2 = config.l2;
    fit(ckpt.model, data.train, opts, rng);
  }
  ckpt.epochs = config.epochs;
  ckpt.train_accuracy = accuracy(ckpt.model, data.train);
  ckpt.test_accuracy = accuracy(ckpt.model, data.test);
  return ckpt;
}

std::vector<int> predict(const LayeredClassifier& model, const Matrix& x) {
  const Matrix logits = model.forward(x);
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double* row = logits.row_ptr(i);
    int best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (row[c] > row[best]) best = static_cast<int>(c);
    }
    out[i] = best;
  }
  return out;
}

double accuracy(const LayeredClassifier& model, const Dataset& ds) {
  if (ds.size() == 0) throw InputError("accuracy: empty dataset");
  const std::vector<int> pred = predict(model, ds.inputs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == ds.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const LayeredClassifier& m = ckpt.model;
  ContainerWriter w(path, ContainerKind::Classifier);
  w.u32(static_cast<std::uint32_t>(m.input_dim()));
  w.u32(static_cast<std::uint32_t>(m.hidden_dim()));
  w.u32(static_cast<std::uint32_t>(m.num_hidden()));
  w.u32(static_cast<std::uint32_t>(m.num_classes()));
  for (const Matrix* p : m.params()) w.matrix(*p);
  w.u64(ckpt.seed);
  w.u32(static_cast<std::uint32_t>(ckpt.epochs));
  w.f64(ckpt.train_accuracy);
  w.f64(ckpt.test_accuracy);
  w.close();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  ContainerReader r(path, ContainerKind::Classifier);
  const int input_dim = static_cast<int>(r.u32());
  const int hidden_dim = static_cast<int>(r.u32());
  const int num_hidden = static_cast<int>(r.u32());
  const int num_classes = static_cast<int>(r.u32());

  Checkpoint ckpt;
  Rng scratch(0);  // immediately overwritten below
  ckpt.model = LayeredClassifier(input_dim, hidden_dim, num_hidden, num_classes, scratch);
  for (Matrix* p : ckpt.model.params()) {
    Matrix stored = r.matrix();
    if (!stored.same_shape(*p)) throw IoError("checkpoint: parameter shape mismatch: " + path.string());
    *p = std::move(stored);
  }
  ckpt.seed = r.u64();
  ckpt.epochs = static_cast<int>(r.u32());
  ckpt.train_accuracy = r.f64();
  ckpt.test_accuracy = r.f64();
  return ckpt;
}

}  // namespace saeaudit
