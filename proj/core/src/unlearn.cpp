#include "saeaudit/unlearn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "saeaudit/errors.hpp"

namespace saeaudit {

namespace {

constexpr double kL1HardThreshold = 1e-4;
constexpr double kFisherEps = 1e-12;

struct MethodInfo {
  MethodCategory category;
  HyperParams defaults;
};

const std::vector<std::pair<std::string, MethodInfo>>& registry() {
  static const std::vector<std::pair<std::string, MethodInfo>> table = {
      {"retrain",
       {MethodCategory::OutputLevel,
        {{"epochs", 20}, {"lr", 0.02}, {"momentum", 0.9}, {"batch_size", 64}}}},
      {"finetune",
       {MethodCategory::OutputLevel,
        {{"epochs", 10}, {"lr", 0.02}, {"momentum", 0.9}, {"batch_size", 64}}}},
      {"random_label",
       {MethodCategory::OutputLevel,
        {{"epochs", 5}, {"lr", 0.01}, {"momentum", 0.9}, {"batch_size", 64}}}},
      {"adv_neg_grad",
       {MethodCategory::OutputLevel,
        {{"epochs", 3}, {"ascent_lr", 0.003}, {"descent_lr", 0.01}, {"batch_size", 64}}}},
      {"cf_k",
       {MethodCategory::Structural,
        {{"k_layers", 2}, {"epochs", 10}, {"lr", 0.02}, {"momentum", 0.9}, {"batch_size", 64}}}},
      {"eu_k",
       {MethodCategory::Structural,
        {{"k_layers", 4}, {"epochs", 25}, {"lr", 0.05}, {"momentum", 0.9}, {"batch_size", 64}}}},
      {"l1_sparse",
       {MethodCategory::OutputLevel,
        {{"epochs", 10},
         {"lr", 0.02},
         {"momentum", 0.9},
         {"batch_size", 64},
         {"l1_weight", 3e-4}}}},
      {"fisher_dampen",
       {MethodCategory::Structural, {{"dampening_constant", 0.1}, {"selection_ratio", 2.5}}}},
  };
  return table;
}

const MethodInfo& lookup(const std::string& name) {
  for (const auto& [n, info] : registry()) {
    if (n == name) return info;
  }
  throw ConfigError("unknown unlearning method '" + name + "'");
}

HyperParams resolve(const std::string& name, const HyperParams& overrides) {
  HyperParams hp = lookup(name).defaults;
  for (const auto& [key, value] : overrides) {
    auto it = hp.find(key);
    if (it == hp.end()) {
      throw ConfigError("unlearn " + name + ": unknown hyperparameter '" + key + "'");
    }
    it->second = value;
  }
  return hp;
}

double need(const HyperParams& hp, const std::string& key) {
  auto it = hp.find(key);
  if (it == hp.end()) throw ConfigError("missing hyperparameter '" + key + "'");
  return it->second;
}

int need_int(const HyperParams& hp, const std::string& key) {
  const double v = need(hp, key);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError("hyperparameter '" + key + "' must be an integer, got " + std::to_string(v));
  }
  return i;
}

void require_positive_epochs(int epochs, const std::string& method) {
  if (epochs < 1) {
    throw ConfigError("unlearn " + method + ": epochs must be >= 1, got " +
                      std::to_string(epochs));
  }
}

FitOptions fit_options_from(const HyperParams& hp, const std::string& method) {
  FitOptions opts;
  opts.epochs = need_int(hp, "epochs");
  require_positive_epochs(opts.epochs, method);
  opts.lr = need(hp, "lr");
  opts.momentum = need(hp, "momentum");
  opts.batch_size = need_int(hp, "batch_size");
  if (opts.lr <= 0.0) throw ConfigError("unlearn " + method + ": lr must be positive");
  if (opts.batch_size < 1) throw ConfigError("unlearn " + method + ": batch_size must be >= 1");
  if (opts.momentum < 0.0 || opts.momentum >= 1.0) {
    throw ConfigError("unlearn " + method + ": momentum must lie in [0, 1)");
  }
  return opts;
}

// Parameters live in params() order W1,b1,...,WL,bL,Wh,bh. The trainable
// set for CF-K / EU-K is the head plus the top k hidden layers.
std::vector<bool> top_k_mask(int num_hidden, int k_layers) {
  std::vector<bool> mask(2 * static_cast<std::size_t>(num_hidden) + 2, false);
  for (int l = num_hidden - k_layers + 1; l <= num_hidden; ++l) {
    mask[2 * static_cast<std::size_t>(l - 1)] = true;
    mask[2 * static_cast<std::size_t>(l - 1) + 1] = true;
  }
  mask[2 * static_cast<std::size_t>(num_hidden)] = true;
  mask[2 * static_cast<std::size_t>(num_hidden) + 1] = true;
  return mask;
}

int checked_k_layers(const HyperParams& hp, const Checkpoint& original, const std::string& method) {
  const int k = need_int(hp, "k_layers");
  if (k < 0 || k > original.model.num_hidden()) {
    throw ConfigError("unlearn " + method + ": k_layers must lie in [0, " +
                      std::to_string(original.model.num_hidden()) + "], got " + std::to_string(k));
  }
  return k;
}

Dataset concat_datasets(const Dataset& a, const Dataset& b) {
  Dataset out;
  out.num_classes = a.num_classes;
  out.split_tag = a.split_tag;
  out.inputs = Matrix(a.size() + b.size(), a.inputs.cols());
  out.labels.reserve(a.size() + b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::copy(a.inputs.row_ptr(i), a.inputs.row_ptr(i) + a.inputs.cols(), out.inputs.row_ptr(i));
    out.labels.push_back(a.labels[i]);
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::copy(b.inputs.row_ptr(i), b.inputs.row_ptr(i) + b.inputs.cols(),
              out.inputs.row_ptr(a.size() + i));
    out.labels.push_back(b.labels[i]);
  }
  return out;
}

Dataset gather_batch(const Dataset& ds, std::span<const std::size_t> rows) {
  Dataset b;
  b.num_classes = ds.num_classes;
  b.inputs = Matrix(rows.size(), ds.inputs.cols());
  b.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(ds.inputs.row_ptr(rows[i]), ds.inputs.row_ptr(rows[i]) + ds.inputs.cols(),
              b.inputs.row_ptr(i));
    b.labels.push_back(ds.labels[rows[i]]);
  }
  return b;
}

double subset_accuracy(const LayeredClassifier& model, const Dataset& test, int forget_class,
                       bool forget_side) {
  const std::vector<int> pred = predict(model, test.inputs);
  std::size_t total = 0, hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool is_forget = test.labels[i] == forget_class;
    if (is_forget != forget_side) continue;
    ++total;
    if (pred[i] == test.labels[i]) ++hits;
  }
  if (total == 0) {
    throw InputError("test split has no " + std::string(forget_side ? "forget" : "retain") +
                     " samples");
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

const char* category_name(MethodCategory c) {
  return c == MethodCategory::OutputLevel ? "output-level" : "structural";
}

std::vector<std::string> unlearn_method_names() {
  std::vector<std::string> names;
  names.reserve(registry().size());
  for (const auto& [n, info] : registry()) names.push_back(n);
  return names;
}

bool is_unlearn_method(const std::string& name) {
  for (const auto& [n, info] : registry()) {
    if (n == name) return true;
  }
  return false;
}

MethodCategory unlearn_method_category(const std::string& name) { return lookup(name).category; }

HyperParams unlearn_method_defaults(const std::string& name) { return lookup(name).defaults; }

Checkpoint unlearn_retrain(const Checkpoint& original, const ForgetRetainSplit& split,
                           const HyperParams& hp, Rng& rng) {
  // Starts from the original (pretrained-analog) weights with only the
  // head re-initialized, then trains everything on the retain set.
  Checkpoint ckpt = original;
  ckpt.model.reinit_head(rng);
  fit(ckpt.model, split.retain, fit_options_from(hp, "retrain"), rng);
  return ckpt;
}

Checkpoint unlearn_finetune(const Checkpoint& original, const ForgetRetainSplit& split,
                            const HyperParams& hp, Rng& rng) {
  Checkpoint ckpt = original;
  fit(ckpt.model, split.retain, fit_options_from(hp, "finetune"), rng);
  return ckpt;
}

Checkpoint unlearn_random_label(const Checkpoint& original, const ForgetRetainSplit& split,
                                const HyperParams& hp, Rng& rng) {
  const FitOptions opts = fit_options_from(hp, "random_label");
  const int num_classes = original.model.num_classes();
  if (num_classes < 2) throw ConfigError("random_label needs at least 2 classes");

  // Forget samples keep their inputs but get labels resampled uniformly
  // from the non-forget classes; shuffling inside fit interleaves them
  // with retain batches.
  Dataset relabeled = split.forget;
  for (int& y : relabeled.labels) {
    int pick = static_cast<int>(rng.index(static_cast<std::uint64_t>(num_classes - 1)));
    if (pick >= split.forget_class) ++pick;
    y = pick;
  }
  const Dataset mixed = concat_datasets(split.retain, relabeled);

  Checkpoint ckpt = original;
  fit(ckpt.model, mixed, opts, rng);
  return ckpt;
}

Checkpoint unlearn_adv_neg_grad(const Checkpoint& original, const ForgetRetainSplit& split,
                                const HyperParams& hp, Rng& rng) {
  const int epochs = need_int(hp, "epochs");
  require_positive_epochs(epochs, "adv_neg_grad");
  const double ascent_lr = need(hp, "ascent_lr");
  const double descent_lr = need(hp, "descent_lr");
  const int batch_size = need_int(hp, "batch_size");
  if (ascent_lr <= 0.0 || descent_lr <= 0.0) {
    throw ConfigError("unlearn adv_neg_grad: learning rates must be positive");
  }
  if (batch_size < 1) throw ConfigError("unlearn adv_neg_grad: batch_size must be >= 1");

  Checkpoint ckpt = original;
  std::vector<Matrix*> params = ckpt.model.params();
  std::vector<Matrix> grads_retain, grads_forget;

  std::vector<std::size_t> retain_order(split.retain.size());
  std::iota(retain_order.begin(), retain_order.end(), std::size_t{0});
  std::vector<std::size_t> forget_order(split.forget.size());
  std::iota(forget_order.begin(), forget_order.end(), std::size_t{0});
  std::size_t forget_pos = 0;
  rng.shuffle(forget_order);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(retain_order);
    for (std::size_t start = 0; start < retain_order.size();
         start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end =
          std::min(retain_order.size(), start + static_cast<std::size_t>(batch_size));
      const Dataset rb = gather_batch(split.retain, std::span(retain_order).subspan(start, end - start));

      // cycle through the forget set batch by batch
      std::vector<std::size_t> fidx;
      for (std::size_t i = 0; i < static_cast<std::size_t>(batch_size); ++i) {
        if (forget_pos == forget_order.size()) {
          rng.shuffle(forget_order);
          forget_pos = 0;
        }
        fidx.push_back(forget_order[forget_pos++]);
      }
      const Dataset fb = gather_batch(split.forget, fidx);

      const double loss_r =
          classifier_loss_and_grads(ckpt.model, rb.inputs, rb.labels, 0.0, grads_retain);
      const double loss_f =
          classifier_loss_and_grads(ckpt.model, fb.inputs, fb.labels, 0.0, grads_forget);
      if (!std::isfinite(loss_r) || !std::isfinite(loss_f)) {
        throw TrainingError("adv_neg_grad: non-finite loss at epoch " + std::to_string(epoch));
      }
      // one joint step: descend the retain loss, ascend the forget loss
      for (std::size_t p = 0; p < params.size(); ++p) {
        double* w = params[p]->data().data();
        const double* gr = grads_retain[p].data().data();
        const double* gf = grads_forget[p].data().data();
        for (std::size_t i = 0; i < params[p]->size(); ++i) {
          w[i] -= descent_lr * gr[i] - ascent_lr * gf[i];
        }
      }
    }
  }
  return ckpt;
}

Checkpoint unlearn_cf_k(const Checkpoint& original, const ForgetRetainSplit& split,
                        const HyperParams& hp, Rng& rng) {
  const int k = checked_k_layers(hp, original, "cf_k");
  Checkpoint ckpt = original;
  FitOptions opts = fit_options_from(hp, "cf_k");
  opts.trainable = top_k_mask(ckpt.model.num_hidden(), k);
  fit(ckpt.model, split.retain, opts, rng);
  return ckpt;
}

Checkpoint unlearn_eu_k(const Checkpoint& original, const ForgetRetainSplit& split,
                        const HyperParams& hp, Rng& rng) {
  const int k = checked_k_layers(hp, original, "eu_k");
  Checkpoint ckpt = original;
  const int L = ckpt.model.num_hidden();
  for (int l = L - k + 1; l <= L; ++l) ckpt.model.reinit_hidden(l, rng);
  ckpt.model.reinit_head(rng);
  FitOptions opts = fit_options_from(hp, "eu_k");
  opts.trainable = top_k_mask(L, k);
  fit(ckpt.model, split.retain, opts, rng);
  return ckpt;
}

Checkpoint unlearn_l1_sparse(const Checkpoint& original, const ForgetRetainSplit& split,
                             const HyperParams& hp, Rng& rng) {
  FitOptions opts = fit_options_from(hp, "l1_sparse");
  opts.l1 = need(hp, "l1_weight");
  if (opts.l1 <= 0.0) throw ConfigError("unlearn l1_sparse: l1_weight must be positive");

  Checkpoint ckpt = original;
  fit(ckpt.model, split.retain, opts, rng);

  // Hard-threshold weights (not biases) so "sparse" is verifiable.
  std::vector<Matrix*> params = ckpt.model.params();
  for (std::size_t p = 0; p < params.size(); p += 2) {
    for (double& w : params[p]->data()) {
      if (std::abs(w) < kL1HardThreshold) w = 0.0;
    }
  }
  return ckpt;
}

std::vector<Matrix> diagonal_fisher(const LayeredClassifier& model, const Dataset& ds) {
  validate_dataset(ds);
  if (ds.size() == 0) throw InputError("diagonal_fisher: empty dataset");
  std::vector<const Matrix*> params = model.params();
  std::vector<Matrix> fisher;
  fisher.reserve(params.size());
  for (const Matrix* p : params) fisher.emplace_back(p->rows(), p->cols());

  std::vector<Matrix> grads;
  Matrix one_input(1, ds.inputs.cols());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::copy(ds.inputs.row_ptr(i), ds.inputs.row_ptr(i) + ds.inputs.cols(),
              one_input.row_ptr(0));
    const int label[1] = {ds.labels[i]};
    classifier_loss_and_grads(model, one_input, label, 0.0, grads);
    for (std::size_t p = 0; p < grads.size(); ++p) {
      double* f = fisher[p].data().data();
      const double* g = grads[p].data().data();
      for (std::size_t t = 0; t < grads[p].size(); ++t) f[t] += g[t] * g[t];
    }
  }
  const double inv = 1.0 / static_cast<double>(ds.size());
  for (Matrix& f : fisher) scale_inplace(f, inv);
  return fisher;
}

Checkpoint unlearn_fisher_dampen(const Checkpoint& original, const ForgetRetainSplit& split,
                                 const HyperParams& hp, Rng& rng) {
  (void)rng;  // no stochastic steps; kept for the uniform method signature
  const double dampening = need(hp, "dampening_constant");
  const double selection_ratio = need(hp, "selection_ratio");
  if (dampening < 0.0 || dampening > 1.0) {
    throw ConfigError("unlearn fisher_dampen: dampening_constant must lie in [0, 1]");
  }
  if (selection_ratio <= 0.0) {
    throw ConfigError("unlearn fisher_dampen: selection_ratio must be positive");
  }

  Checkpoint ckpt = original;
  const std::vector<Matrix> fisher_forget = diagonal_fisher(ckpt.model, split.forget);
  const std::vector<Matrix> fisher_retain = diagonal_fisher(ckpt.model, split.retain);

  std::vector<Matrix*> params = ckpt.model.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    double* w = params[p]->data().data();
    const double* ff = fisher_forget[p].data().data();
    const double* fr = fisher_retain[p].data().data();
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      const double ratio = (ff[i] + kFisherEps) / (fr[i] + kFisherEps);
      if (ratio > selection_ratio) w[i] *= dampening;
    }
  }
  return ckpt;
}

UnlearnResult run_unlearn(const std::string& name, const UnlearnContext& ctx,
                          const HyperParams& overrides, Rng& rng) {
  const MethodInfo& info = lookup(name);
  const HyperParams hp = resolve(name, overrides);

  const auto t0 = std::chrono::steady_clock::now();
  Checkpoint unlearned;
  if (name == "retrain") {
    unlearned = unlearn_retrain(ctx.original, ctx.train_split, hp, rng);
  } else if (name == "finetune") {
    unlearned = unlearn_finetune(ctx.original, ctx.train_split, hp, rng);
  } else if (name == "random_label") {
    unlearned = unlearn_random_label(ctx.original, ctx.train_split, hp, rng);
  } else if (name == "adv_neg_grad") {
    unlearned = unlearn_adv_neg_grad(ctx.original, ctx.train_split, hp, rng);
  } else if (name == "cf_k") {
    unlearned = unlearn_cf_k(ctx.original, ctx.train_split, hp, rng);
  } else if (name == "eu_k") {
    unlearned = unlearn_eu_k(ctx.original, ctx.train_split, hp, rng);
  } else if (name == "l1_sparse") {
    unlearned = unlearn_l1_sparse(ctx.original, ctx.train_split, hp, rng);
  } else if (name == "fisher_dampen") {
    unlearned = unlearn_fisher_dampen(ctx.original, ctx.train_split, hp, rng);
  } else {
    throw ConfigError("unknown unlearning method '" + name + "'");
  }
  const auto t1 = std::chrono::steady_clock::now();

  UnlearnResult result;
  result.spec.name = name;
  result.spec.category = info.category;
  result.spec.hyperparams = hp;
  result.wall_time_seconds = std::chrono::duration<double>(t1 - t0).count();
  result.forget_accuracy =
      subset_accuracy(unlearned.model, ctx.test_set, ctx.train_split.forget_class, true);
  result.retain_accuracy =
      subset_accuracy(unlearned.model, ctx.test_set, ctx.train_split.forget_class, false);
  result.original_retain_accuracy =
      subset_accuracy(ctx.original.model, ctx.test_set, ctx.train_split.forget_class, false);
  result.failed_unlearning = result.forget_accuracy > 0.10 ||
                             result.retain_accuracy < result.original_retain_accuracy - 0.10;

  unlearned.train_accuracy = 0.0;  // recomputed below on the combined train split
  {
    const Dataset train_all = concat_datasets(ctx.train_split.retain, ctx.train_split.forget);
    unlearned.train_accuracy = accuracy(unlearned.model, train_all);
  }
  unlearned.test_accuracy = accuracy(unlearned.model, ctx.test_set);
  result.model = std::move(unlearned);
  return result;
}

}  // namespace saeaudit
