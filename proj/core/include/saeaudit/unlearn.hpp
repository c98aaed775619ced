#pragma once

#include <map>
#include <string>
#include <vector>

#include "saeaudit/classifier.hpp"
#include "saeaudit/dataset.hpp"

namespace saeaudit {

using HyperParams = std::map<std::string, double>;

enum class MethodCategory { OutputLevel, Structural };

const char* category_name(MethodCategory c);

struct UnlearnMethodSpec {
  std::string name;
  HyperParams hyperparams;  // resolved: defaults overlaid with overrides
  MethodCategory category = MethodCategory::OutputLevel;
};

struct UnlearnResult {
  Checkpoint model;
  double forget_accuracy = 0.0;  // on the held-out test split
  double retain_accuracy = 0.0;
  double original_retain_accuracy = 0.0;
  double wall_time_seconds = 0.0;
  // Output contract: forget <= 0.10 and retain >= original - 0.10.
  bool failed_unlearning = false;
  UnlearnMethodSpec spec;
};

struct UnlearnContext {
  const Checkpoint& original;
  const ForgetRetainSplit& train_split;  // built from the training split
  const Dataset& test_set;               // held-out, used only for the result record
};

// Registered method names in a fixed order:
// retrain, finetune, random_label, adv_neg_grad, cf_k, eu_k, l1_sparse,
// fisher_dampen.
std::vector<std::string> unlearn_method_names();
bool is_unlearn_method(const std::string& name);
MethodCategory unlearn_method_category(const std::string& name);
HyperParams unlearn_method_defaults(const std::string& name);

// Runs one method. Unknown hyperparameter keys and invalid values throw
// ConfigError; divergence throws TrainingError. Deterministic per rng.
UnlearnResult run_unlearn(const std::string& name, const UnlearnContext& ctx,
                          const HyperParams& overrides, Rng& rng);

// The individual methods (run_unlearn dispatches to these).
Checkpoint unlearn_retrain(const Checkpoint& original, const ForgetRetainSplit& split,
                           const HyperParams& hp, Rng& rng);
Checkpoint unlearn_finetune(const Checkpoint& original, const ForgetRetainSplit& split,
                            const HyperParams& hp, Rng& rng);
Checkpoint unlearn_random_label(const Checkpoint& original, const ForgetRetainSplit& split,
                                const HyperParams& hp, Rng& rng);
Checkpoint unlearn_adv_neg_grad(const Checkpoint& original, const ForgetRetainSplit& split,
                                const HyperParams& hp, Rng& rng);
Checkpoint unlearn_cf_k(const Checkpoint& original, const ForgetRetainSplit& split,
                        const HyperParams& hp, Rng& rng);
Checkpoint unlearn_eu_k(const Checkpoint& original, const ForgetRetainSplit& split,
                        const HyperParams& hp, Rng& rng);
Checkpoint unlearn_l1_sparse(const Checkpoint& original, const ForgetRetainSplit& split,
                             const HyperParams& hp, Rng& rng);
Checkpoint unlearn_fisher_dampen(const Checkpoint& original, const ForgetRetainSplit& split,
                                 const HyperParams& hp, Rng& rng);

// Diagonal Fisher importance (mean squared per-sample gradient) for every
// parameter, in params() order. Exposed for tests.
std::vector<Matrix> diagonal_fisher(const LayeredClassifier& model, const Dataset& ds);

}  // namespace saeaudit
