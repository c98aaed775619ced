#include "saeaudit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "saeaudit/digest.hpp"
#include "saeaudit/errors.hpp"
#include "saeaudit/hungarian.hpp"

namespace saeaudit {

namespace {

std::vector<int> argmax_rows(const Matrix& logits) {
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

double class_accuracy(std::span<const int> pred, std::span<const int> labels, int cls) {
  std::size_t total = 0, hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != cls) continue;
    ++total;
    if (pred[i] == cls) ++hits;
  }
  if (total == 0) throw InputError("no samples of class " + std::to_string(cls) + " to evaluate");
  return static_cast<double>(hits) / static_cast<double>(total);
}

double retain_accuracy(std::span<const int> pred, std::span<const int> labels, int forget_class) {
  std::size_t total = 0, hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == forget_class) continue;
    ++total;
    if (pred[i] == labels[i]) ++hits;
  }
  if (total == 0) throw InputError("no retain samples to evaluate");
  return static_cast<double>(hits) / static_cast<double>(total);
}

void require_bijection(const FeatureMatching& matching, int m) {
  if (matching.perm.size() != static_cast<std::size_t>(m)) {
    throw InputError("matching: permutation length " + std::to_string(matching.perm.size()) +
                     " != m = " + std::to_string(m));
  }
  std::vector<char> seen(static_cast<std::size_t>(m), 0);
  for (int p : matching.perm) {
    if (p < 0 || p >= m || seen[static_cast<std::size_t>(p)]) {
      throw InputError("matching: permutation is not a bijection on [0, m)");
    }
    seen[static_cast<std::size_t>(p)] = 1;
  }
}

std::string digest_matrix(const Matrix& m) {
  const auto bytes = std::as_bytes(m.data());
  return digest_string(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Matrix cost_decoder_cosine(const SaeModel& a, const SaeModel& b) {
  const int m = a.m();
  Matrix cost(static_cast<std::size_t>(m), static_cast<std::size_t>(m));
  std::vector<double> na(static_cast<std::size_t>(m)), nb(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double sa = 0.0, sb = 0.0;
    for (int j = 0; j < a.d(); ++j) {
      sa += a.decoder()(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
            a.decoder()(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      sb += b.decoder()(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
            b.decoder()(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
    na[static_cast<std::size_t>(i)] = std::sqrt(sa);
    nb[static_cast<std::size_t>(i)] = std::sqrt(sb);
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      double dot = 0.0;
      for (int t = 0; t < a.d(); ++t) {
        dot += a.decoder()(static_cast<std::size_t>(i), static_cast<std::size_t>(t)) *
               b.decoder()(static_cast<std::size_t>(j), static_cast<std::size_t>(t));
      }
      const double denom = na[static_cast<std::size_t>(i)] * nb[static_cast<std::size_t>(j)];
      const double cosine = denom > 0.0 ? dot / denom : 0.0;
      cost(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = 1.0 - cosine;
    }
  }
  return cost;
}

Matrix cost_activation_correlation(const SaeModel& sae_orig, const SaeModel& sae_unl,
                                   const ActivationBatch& probe_orig,
                                   const ActivationBatch& probe_unl) {
  if (probe_orig.values.rows() != probe_unl.values.rows()) {
    throw InputError("match_features: probe batches must pair the same inputs");
  }
  if (probe_orig.values.rows() < 2) {
    throw InputError("match_features: correlation cost needs at least 2 probe samples");
  }
  Matrix co = encode(sae_orig, probe_orig).values;
  Matrix cu = encode(sae_unl, probe_unl).values;
  const std::size_t n = co.rows();
  const int m = sae_orig.m();

  auto center_columns = [n](Matrix& c, std::vector<double>& norms) {
    norms.assign(c.cols(), 0.0);
    std::vector<double> mean(c.cols(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = c.row_ptr(i);
      for (std::size_t j = 0; j < c.cols(); ++j) mean[j] += row[j];
    }
    for (double& v : mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      double* row = c.row_ptr(i);
      for (std::size_t j = 0; j < c.cols(); ++j) row[j] -= mean[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = c.row_ptr(i);
      for (std::size_t j = 0; j < c.cols(); ++j) norms[j] += row[j] * row[j];
    }
    for (double& v : norms) v = std::sqrt(v);
  };
  std::vector<double> norm_o, norm_u;
  center_columns(co, norm_o);
  center_columns(cu, norm_u);

  Matrix dots = matmul_tn(co, cu);  // m x m
  Matrix cost(static_cast<std::size_t>(m), static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const double denom = norm_o[static_cast<std::size_t>(i)] * norm_u[static_cast<std::size_t>(j)];
      const double r = denom > 0.0
                           ? dots(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) / denom
                           : 0.0;
      cost(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = 1.0 - r;
    }
  }
  return cost;
}

}  // namespace

FeatureStats compute_feature_stats(const SparseCode& code, std::span<const int> labels,
                                   int num_classes) {
  const Matrix& c = code.values;
  if (c.rows() == 0) throw InputError("compute_feature_stats: empty batch");
  if (c.rows() != labels.size()) {
    throw ShapeError("compute_feature_stats: " + std::to_string(c.rows()) + " code rows vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (num_classes < 1) throw InputError("compute_feature_stats: num_classes must be positive");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw InputError("compute_feature_stats: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
  }

  FeatureStats st;
  st.num_features = static_cast<int>(c.cols());
  st.num_classes = num_classes;
  st.total_samples = static_cast<int>(c.rows());
  st.activation_count.assign(c.cols(), 0);
  st.class_count.assign(static_cast<std::size_t>(num_classes), 0);
  st.co_count.assign(c.cols(), std::vector<int>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < c.rows(); ++i) {
    const int y = labels[i];
    ++st.class_count[static_cast<std::size_t>(y)];
    const double* row = c.row_ptr(i);
    for (std::size_t j = 0; j < c.cols(); ++j) {
      if (row[j] > 0.0) {
        ++st.activation_count[j];
        ++st.co_count[j][static_cast<std::size_t>(y)];
      }
    }
  }

  st.precision = Matrix(c.cols(), static_cast<std::size_t>(num_classes));
  st.recall = Matrix(c.cols(), static_cast<std::size_t>(num_classes));
  st.f1 = Matrix(c.cols(), static_cast<std::size_t>(num_classes));
  st.never_active.assign(c.cols(), false);
  st.always_active.assign(c.cols(), false);
  for (std::size_t j = 0; j < c.cols(); ++j) {
    const int act = st.activation_count[j];
    st.never_active[j] = act == 0;
    st.always_active[j] = act == st.total_samples;
    for (int cls = 0; cls < num_classes; ++cls) {
      const int co = st.co_count[j][static_cast<std::size_t>(cls)];
      const double p = act > 0 ? static_cast<double>(co) / static_cast<double>(act) : 0.0;
      const int cls_n = st.class_count[static_cast<std::size_t>(cls)];
      const double r = cls_n > 0 ? static_cast<double>(co) / static_cast<double>(cls_n) : 0.0;
      st.precision(j, static_cast<std::size_t>(cls)) = p;
      st.recall(j, static_cast<std::size_t>(cls)) = r;
      st.f1(j, static_cast<std::size_t>(cls)) = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
  }
  return st;
}

std::vector<int> filter_uninformative(const FeatureStats& stats, int total_samples,
                                      double lo_frac, double hi_frac) {
  if (total_samples < 1) throw InputError("filter_uninformative: total_samples must be positive");
  if (lo_frac < 0.0 || hi_frac > 1.0 || lo_frac >= hi_frac) {
    throw InputError("filter_uninformative: need 0 <= lo_frac < hi_frac <= 1");
  }
  const double lo = lo_frac * static_cast<double>(total_samples);
  const double hi = hi_frac * static_cast<double>(total_samples);
  std::vector<int> survivors;
  for (int j = 0; j < stats.num_features; ++j) {
    const double count = static_cast<double>(stats.activation_count[static_cast<std::size_t>(j)]);
    if (count > lo && count < hi) survivors.push_back(j);
  }
  return survivors;
}

int expert_count_for(int k) {
  if (k < 1) throw InputError("expert_count_for: k must be positive");
  return (5 * k) / 4;
}

ExpertFeatureSet select_experts(const FeatureStats& stats, std::span<const int> survivors,
                                int class_label, int k, const SaeProvenance& source) {
  if (class_label < 0 || class_label >= stats.num_classes) {
    throw InputError("select_experts: class " + std::to_string(class_label) + " outside [0, " +
                     std::to_string(stats.num_classes) + ")");
  }
  const int want = expert_count_for(k);
  std::vector<int> scoring;
  for (int j : survivors) {
    if (j < 0 || j >= stats.num_features) {
      throw InputError("select_experts: survivor index " + std::to_string(j) + " out of range");
    }
    if (stats.f1(static_cast<std::size_t>(j), static_cast<std::size_t>(class_label)) > 0.0) {
      scoring.push_back(j);
    }
  }
  if (static_cast<int>(scoring.size()) < want) {
    throw SelectionError("select_experts: class " + std::to_string(class_label) + " has only " +
                         std::to_string(scoring.size()) + " scoring features, need " +
                         std::to_string(want));
  }
  std::sort(scoring.begin(), scoring.end(), [&](int a, int b) {
    const double fa = stats.f1(static_cast<std::size_t>(a), static_cast<std::size_t>(class_label));
    const double fb = stats.f1(static_cast<std::size_t>(b), static_cast<std::size_t>(class_label));
    if (fa != fb) return fa > fb;
    return a < b;
  });
  ExpertFeatureSet out;
  out.class_label = class_label;
  out.source = source;
  out.indices.assign(scoring.begin(), scoring.begin() + want);
  out.f1_scores.reserve(static_cast<std::size_t>(want));
  for (int j : out.indices) {
    out.f1_scores.push_back(
        stats.f1(static_cast<std::size_t>(j), static_cast<std::size_t>(class_label)));
  }
  return out;
}

FeatureMatching match_features(const SaeModel& sae_orig, const SaeModel& sae_unl,
                               MatchingCost cost_kind, const ActivationBatch* probe_orig,
                               const ActivationBatch* probe_unl) {
  if (sae_orig.m() != sae_unl.m()) {
    throw InputError("match_features: latent counts differ (" + std::to_string(sae_orig.m()) +
                     " vs " + std::to_string(sae_unl.m()) + ")");
  }
  Matrix cost;
  if (cost_kind == MatchingCost::DecoderCosine) {
    if (sae_orig.d() != sae_unl.d()) {
      throw InputError("match_features: decoder dims differ");
    }
    cost = cost_decoder_cosine(sae_orig, sae_unl);
  } else {
    if (probe_orig == nullptr || probe_unl == nullptr) {
      throw InputError("match_features: correlation cost needs a probe batch pair");
    }
    cost = cost_activation_correlation(sae_orig, sae_unl, *probe_orig, *probe_unl);
  }
  AssignmentResult solved = solve_assignment(cost);
  FeatureMatching matching;
  matching.perm = std::move(solved.assignment);
  matching.total_cost = solved.total_cost;
  matching.cost_digest = digest_matrix(cost);
  return matching;
}

FeatureMatching identity_matching(int m) {
  FeatureMatching matching;
  matching.perm.resize(static_cast<std::size_t>(m));
  std::iota(matching.perm.begin(), matching.perm.end(), 0);
  matching.cost_digest = "identity";
  matching.total_cost = 0.0;
  return matching;
}

SparseCode steer_codes(const SparseCode& c_unl, const SparseCode& c_orig,
                       const ExpertFeatureSet& experts, const FeatureMatching& matching,
                       double alpha) {
  if (!c_unl.values.same_shape(c_orig.values)) {
    throw ShapeError("steer_codes: code shapes differ");
  }
  if (!std::isfinite(alpha)) throw InputError("steer_codes: alpha must be finite");
  const int m = static_cast<int>(c_unl.values.cols());
  require_bijection(matching, m);
  for (int j : experts.indices) {
    if (j < 0 || j >= m) {
      throw InputError("steer_codes: expert index " + std::to_string(j) + " outside [0, m)");
    }
  }
  SparseCode out = c_unl;
  for (std::size_t i = 0; i < out.values.rows(); ++i) {
    double* row = out.values.row_ptr(i);
    const double* orig = c_orig.values.row_ptr(i);
    for (int j : experts.indices) {
      const int p = matching.perm[static_cast<std::size_t>(j)];
      row[p] = row[p] + alpha * (orig[j] - row[p]);
    }
  }
  return out;
}

AblationOutcome validate_experts(const LayeredClassifier& model, const SaeModel& sae,
                                 const ExpertFeatureSet& experts, const Dataset& eval,
                                 int layer) {
  validate_dataset(eval);
  auto [captured, logits_raw] = model.forward_capture(eval.inputs, layer);
  (void)logits_raw;
  const SparseCode code = encode(sae, captured.values);

  CapturedActivation pass_act{layer, decode(sae, code)};
  const std::vector<int> pred_pass = argmax_rows(model.forward_from(pass_act));

  const SparseCode ablated_code = ablate(code, experts.indices);
  CapturedActivation abl_act{layer, decode(sae, ablated_code)};
  const std::vector<int> pred_abl = argmax_rows(model.forward_from(abl_act));

  AblationOutcome out;
  out.passthrough_forget_acc = class_accuracy(pred_pass, eval.labels, experts.class_label);
  out.ablated_forget_acc = class_accuracy(pred_abl, eval.labels, experts.class_label);
  out.forget_drop_points = (out.passthrough_forget_acc - out.ablated_forget_acc) * 100.0;
  for (int cls = 0; cls < eval.num_classes; ++cls) {
    if (cls == experts.class_label) continue;
    bool present = false;
    for (int y : eval.labels) {
      if (y == cls) {
        present = true;
        break;
      }
    }
    if (!present) continue;
    const double drift = std::abs(class_accuracy(pred_pass, eval.labels, cls) -
                                  class_accuracy(pred_abl, eval.labels, cls)) *
                         100.0;
    out.retain_drift_points = std::max(out.retain_drift_points, drift);
  }
  return out;
}

RestoreRow restore(const Checkpoint& orig, const Checkpoint& unl, const SaeModel& sae_orig,
                   const SaeModel& sae_unl, const SteeringConfig& steering, const Dataset& eval,
                   int forget_class) {
  validate_dataset(eval);
  if (sae_orig.trained_on().layer != 0 && sae_orig.trained_on().layer != steering.layer) {
    throw ConfigError("restore: original SAE trained at layer " +
                      std::to_string(sae_orig.trained_on().layer) + ", steering at layer " +
                      std::to_string(steering.layer));
  }
  if (sae_unl.trained_on().layer != 0 && sae_unl.trained_on().layer != steering.layer) {
    throw ConfigError("restore: unlearned SAE trained at layer " +
                      std::to_string(sae_unl.trained_on().layer) + ", steering at layer " +
                      std::to_string(steering.layer));
  }
  if (sae_orig.m() != sae_unl.m()) throw ConfigError("restore: SAE latent counts differ");

  auto [h_orig, logits_o] = orig.model.forward_capture(eval.inputs, steering.layer);
  (void)logits_o;
  auto [h_unl, logits_raw] = unl.model.forward_capture(eval.inputs, steering.layer);

  const SparseCode c_orig = encode(sae_orig, h_orig.values);
  const SparseCode c_unl = encode(sae_unl, h_unl.values);

  // Reconstruction error of the unlearned activations, added back in
  // preserve mode so the SAE's own error does not depress the baseline.
  Matrix recon_unl = decode(sae_unl, c_unl);
  Matrix error_term;
  if (steering.error_term == ErrorTerm::Preserve) {
    error_term = h_unl.values;
    const double* pr = recon_unl.data().data();
    double* pe = error_term.data().data();
    for (std::size_t i = 0; i < error_term.size(); ++i) pe[i] -= pr[i];
  }

  auto finish = [&](Matrix decoded) {
    if (steering.error_term == ErrorTerm::Preserve) add_inplace(decoded, error_term);
    CapturedActivation act{steering.layer, std::move(decoded)};
    return argmax_rows(unl.model.forward_from(act));
  };

  const std::vector<int> pred_raw = argmax_rows(logits_raw);
  const std::vector<int> pred_pass = finish(std::move(recon_unl));
  const SparseCode steered =
      steer_codes(c_unl, c_orig, steering.expert_set, steering.matching, steering.alpha);
  const std::vector<int> pred_restored = finish(decode(sae_unl, steered));

  RestoreRow row;
  row.layer = steering.layer;
  row.split = eval.split_tag == SplitTag::Test ? "test" : "train";
  row.unlearned_forget_acc = class_accuracy(pred_raw, eval.labels, forget_class);
  row.passthrough_forget_acc = class_accuracy(pred_pass, eval.labels, forget_class);
  row.restored_forget_acc = class_accuracy(pred_restored, eval.labels, forget_class);
  row.delta_vs_unlearned = row.restored_forget_acc - row.unlearned_forget_acc;
  row.delta_vs_passthrough = row.restored_forget_acc - row.passthrough_forget_acc;
  row.unlearned_retain_acc = retain_accuracy(pred_raw, eval.labels, forget_class);
  row.passthrough_retain_acc = retain_accuracy(pred_pass, eval.labels, forget_class);
  row.restored_retain_acc = retain_accuracy(pred_restored, eval.labels, forget_class);
  row.retain_delta = row.restored_retain_acc - row.unlearned_retain_acc;
  return row;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Suppression:
      return "suppression";
    case Verdict::Deletion:
      return "deletion";
    case Verdict::Inconclusive:
      return "inconclusive";
  }
  return "inconclusive";
}

Verdict classify_verdict(std::span<const RestoreRow> rows, const VerdictThresholds& thresholds) {
  if (rows.empty()) throw InputError("classify_verdict: no rows");
  double max_restored = 0.0;
  double unlearned = 0.0;
  for (const RestoreRow& r : rows) {
    max_restored = std::max(max_restored, r.restored_forget_acc);
    unlearned = std::max(unlearned, r.unlearned_forget_acc);
  }
  if (max_restored >= thresholds.high && unlearned <= 0.10) return Verdict::Suppression;
  if (max_restored <= thresholds.low) return Verdict::Deletion;
  return Verdict::Inconclusive;
}

}  // namespace saeaudit
