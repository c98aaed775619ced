#pragma once

#include <span>
#include <string>
#include <vector>

#include "saeaudit/classifier.hpp"
#include "saeaudit/dataset.hpp"
#include "saeaudit/sae.hpp"

namespace saeaudit {

// Per-feature activation statistics against class labels. An activation
// event is a strictly positive code entry.
struct FeatureStats {
  int num_features = 0;
  int num_classes = 0;
  int total_samples = 0;
  std::vector<int> activation_count;       // per feature
  std::vector<int> class_count;            // per class
  std::vector<std::vector<int>> co_count;  // [feature][class]
  Matrix precision;                        // feature x class, 0 where undefined
  Matrix recall;                           // feature x class
  Matrix f1;                               // feature x class
  std::vector<bool> never_active;          // precision undefined for these
  std::vector<bool> always_active;
};

FeatureStats compute_feature_stats(const SparseCode& code, std::span<const int> labels,
                                   int num_classes);

// Drops features that (almost) never or (almost) always activate. The
// strict reading is lo_frac = 0, hi_frac = 1: drop only exact never /
// always. A feature survives iff lo_frac*N < count < hi_frac*N.
std::vector<int> filter_uninformative(const FeatureStats& stats, int total_samples,
                                      double lo_frac = 0.0, double hi_frac = 1.0);

// floor(5K/4): the per-class expert count for TopK sparsity K.
int expert_count_for(int k);

struct ExpertFeatureSet {
  int class_label = 0;
  std::vector<int> indices;       // strictly F1-descending, ties to lower index
  std::vector<double> f1_scores;  // parallel to indices
  SaeProvenance source;
};

// Top floor(5K/4) surviving features by F1 for the class. Throws
// SelectionError (naming the class) when fewer than that score above 0.
ExpertFeatureSet select_experts(const FeatureStats& stats, std::span<const int> survivors,
                                int class_label, int k, const SaeProvenance& source = {});

struct FeatureMatching {
  std::vector<int> perm;  // perm[original feature] = unlearned feature, a bijection
  std::string cost_digest;
  double total_cost = 0.0;
};

enum class MatchingCost {
  DecoderCosine,          // 1 - cos(decoder_row_orig_i, decoder_row_unl_j)
  ActivationCorrelation,  // 1 - Pearson of activation patterns on a probe
};

// Aligns the two SAEs' feature indices by exact minimum-cost assignment.
// The probe pair (same inputs through each model) is required only for
// the activation-correlation cost.
FeatureMatching match_features(const SaeModel& sae_orig, const SaeModel& sae_unl,
                               MatchingCost cost = MatchingCost::DecoderCosine,
                               const ActivationBatch* probe_orig = nullptr,
                               const ActivationBatch* probe_unl = nullptr);

FeatureMatching identity_matching(int m);

enum class ErrorTerm { Drop, Preserve };

struct SteeringConfig {
  double alpha = 10.0;
  int layer = 0;
  ExpertFeatureSet expert_set;
  FeatureMatching matching;
  ErrorTerm error_term = ErrorTerm::Drop;
};

// chat[perm[j]] = c_unl[perm[j]] + alpha * (c_orig[j] - c_unl[perm[j]])
// for every expert j; all other indices copy c_unl bitwise.
SparseCode steer_codes(const SparseCode& c_unl, const SparseCode& c_orig,
                       const ExpertFeatureSet& experts, const FeatureMatching& matching,
                       double alpha);

struct AblationOutcome {
  double passthrough_forget_acc = 0.0;  // un-ablated SAE passthrough baseline
  double ablated_forget_acc = 0.0;
  double forget_drop_points = 0.0;    // (passthrough - ablated) * 100
  double retain_drift_points = 0.0;   // max |per-class passthrough - ablated| * 100
};

// Runs capture -> encode -> ablate(experts) -> decode -> forward_from on
// one model and reports the forget-class drop against the un-ablated
// passthrough, plus the worst retain-class drift.
AblationOutcome validate_experts(const LayeredClassifier& model, const SaeModel& sae,
                                 const ExpertFeatureSet& experts, const Dataset& eval, int layer);

// One (method, layer, split) cell of the audit.
struct RestoreRow {
  int layer = 0;
  std::string split;  // "test" or "train"
  double unlearned_forget_acc = 0.0;    // raw forward through the unlearned model
  double passthrough_forget_acc = 0.0;  // alpha = 0 path
  double restored_forget_acc = 0.0;
  double delta_vs_unlearned = 0.0;
  double delta_vs_passthrough = 0.0;
  double unlearned_retain_acc = 0.0;
  double passthrough_retain_acc = 0.0;
  double restored_retain_acc = 0.0;
  double retain_delta = 0.0;  // restored - unlearned, retain side
};

// The selective-restoration experiment at one layer. Both SAEs must be
// trained at steering.layer; the matching must be a bijection on [0, m).
RestoreRow restore(const Checkpoint& orig, const Checkpoint& unl, const SaeModel& sae_orig,
                   const SaeModel& sae_unl, const SteeringConfig& steering, const Dataset& eval,
                   int forget_class);

enum class Verdict { Suppression, Deletion, Inconclusive };

struct VerdictThresholds {
  double high = 0.5;
  double low = 0.1;
};

const char* verdict_name(Verdict v);

// Suppression: restoration works somewhere while the unlearned accuracy
// is low. Deletion: restoration fails everywhere.
Verdict classify_verdict(std::span<const RestoreRow> rows, const VerdictThresholds& thresholds);

}  // namespace saeaudit
