// saeaudit: audit whether an unlearning method deleted or merely
// suppressed a class, by steering SAE expert features back in.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "saeaudit/audit.hpp"
#include "saeaudit/config.hpp"
#include "saeaudit/digest.hpp"
#include "saeaudit/errors.hpp"
#include "saeaudit/pipeline.hpp"
#include "saeaudit/report.hpp"
#include "saeaudit/unlearn.hpp"
#include "saeaudit/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace saeaudit;

namespace {

constexpr const char* kOutputRootEnv = "SAEAUDIT_OUT";

// Exit codes: 0 success, 2 config error, 3 stage failure.
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

HyperParams parse_sets(const std::vector<std::string>& sets) {
  HyperParams hp;
  for (const std::string& s : sets) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq);
    try {
      hp[key] = std::stod(s.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError("--set " + key + ": value is not a number");
    }
  }
  return hp;
}

// Applies the SAEAUDIT_OUT root to a relative output directory.
std::string apply_output_root(const std::string& dir) {
  const char* env = std::getenv(kOutputRootEnv);
  if (env == nullptr || *env == '\0') return dir;
  const fs::path p(dir);
  if (p.is_absolute()) return dir;
  return (fs::path(env) / p).string();
}

struct DataGenArgs {
  SyntheticSpec spec;
  std::uint64_t seed = 42;
  std::string out = "data.bin";
};

struct ModelTrainArgs {
  std::string data;
  std::string out = "model.ckpt";
  int hidden_layers = 6;
  int hidden_dim = 64;
  TrainConfig train;
  std::uint64_t seed = 42;
};

struct ModelEvalArgs {
  std::string model;
  std::string data;
  int forget_class = -1;
};

struct UnlearnRunArgs {
  std::string method;
  int forget_class = 2;
  std::string original;
  std::string data;
  std::string out_dir = ".";
  std::vector<std::string> sets;
  std::uint64_t seed = 42;
};

struct SaeTrainArgs {
  std::string model;
  std::string data;
  int layer = 0;
  std::string out;
  int expansion = 4;
  int k = 8;
  int epochs = 40;
  double lr = 0.02;
  double momentum = 0.9;
  int batch_size = 256;
  std::uint64_t seed = 42;
};

struct AuditRunArgs {
  std::string original;
  std::string unlearned;
  std::string data;
  std::string name = "unlearned";
  std::vector<int> layers = {3, 4, 5};
  double alpha = 10.0;
  int forget_class = 2;
  std::string out_dir = "audit_out";
  std::vector<std::string> sae_orig;
  std::vector<std::string> sae_unl;
  std::string matching_cost = "decoder-cosine";
  std::string sae_mode = "two-sae";
  std::string error_term = "drop";
  double high_threshold = 0.5;
  double low_threshold = 0.1;
  double filter_lo = 0.0;
  double filter_hi = 1.0;
  int sae_epochs = 40;
  int sae_expansion = 4;
  int sae_k = 8;
  double sae_lr = 0.02;
  std::uint64_t seed = 42;
};

struct PipelineRunArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool dump_config = false;
};

struct ReportRenderArgs {
  std::string run_dir;
  std::string format = "markdown";
  std::string out;
};

int cmd_data_gen(const DataGenArgs& a) {
  Rng rng = Rng::derive(a.seed, "data");
  const TrainTest data = generate_synthetic(a.spec, rng);
  const fs::path out = apply_output_root(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_dataset(data, out);
  std::cout << "wrote " << out.string() << " (" << data.train.size() << " train / "
            << data.test.size() << " test samples, " << a.spec.num_classes << " classes)\n";
  return 0;
}

int cmd_model_train(const ModelTrainArgs& a) {
  const TrainTest data = load_dataset(a.data);
  Rng rng = Rng::derive(a.seed, "model");
  Checkpoint ckpt = train_classifier(data, a.hidden_dim, a.hidden_layers, a.train, rng);
  ckpt.seed = a.seed;
  const fs::path out = apply_output_root(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_checkpoint(ckpt, out);
  std::cout << "wrote " << out.string() << " (train acc " << ckpt.train_accuracy << ", test acc "
            << ckpt.test_accuracy << ")\n";
  return 0;
}

int cmd_model_eval(const ModelEvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.model);
  const TrainTest data = load_dataset(a.data);
  json j;
  j["train_accuracy"] = accuracy(ckpt.model, data.train);
  j["test_accuracy"] = accuracy(ckpt.model, data.test);
  if (a.forget_class >= 0) {
    const std::vector<int> pred = predict(ckpt.model, data.test.inputs);
    std::size_t f_total = 0, f_hit = 0, r_total = 0, r_hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (data.test.labels[i] == a.forget_class) {
        ++f_total;
        if (pred[i] == data.test.labels[i]) ++f_hit;
      } else {
        ++r_total;
        if (pred[i] == data.test.labels[i]) ++r_hit;
      }
    }
    if (f_total == 0) throw InputError("no test samples of class " + std::to_string(a.forget_class));
    j["forget_class"] = a.forget_class;
    j["forget_accuracy"] = static_cast<double>(f_hit) / static_cast<double>(f_total);
    j["retain_accuracy"] = static_cast<double>(r_hit) / static_cast<double>(r_total);
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_unlearn_run(const UnlearnRunArgs& a) {
  if (!is_unlearn_method(a.method)) {
    throw ConfigError("unknown method '" + a.method + "'; registered: " + [] {
      std::string s;
      for (const std::string& n : unlearn_method_names()) s += n + " ";
      return s;
    }());
  }
  const TrainTest data = load_dataset(a.data);
  const Checkpoint original = load_checkpoint(a.original);
  const ForgetRetainSplit split = split_forget_retain(data.train, a.forget_class);
  Rng rng = Rng::derive(a.seed, "unlearn/" + a.method);
  UnlearnResult result = run_unlearn(a.method, {original, split, data.test}, parse_sets(a.sets), rng);
  result.model.seed = a.seed;

  const fs::path dir = apply_output_root(a.out_dir);
  fs::create_directories(dir);
  const fs::path ckpt_path = dir / (a.method + ".ckpt");
  save_checkpoint(result.model, ckpt_path);
  json j;
  j["method"] = a.method;
  j["category"] = category_name(result.spec.category);
  j["defaults_version"] = kUnlearnDefaultsVersion;
  j["hyperparams"] = result.spec.hyperparams;
  j["forget_accuracy"] = result.forget_accuracy;
  j["retain_accuracy"] = result.retain_accuracy;
  j["original_retain_accuracy"] = result.original_retain_accuracy;
  j["failed_unlearning"] = result.failed_unlearning;
  j["wall_time_seconds"] = result.wall_time_seconds;
  write_file(dir / (a.method + "_result.json"), j.dump(2) + "\n");
  std::cout << "wrote " << ckpt_path.string() << " (forget acc " << result.forget_accuracy
            << ", retain acc " << result.retain_accuracy
            << (result.failed_unlearning ? ", FAILED UNLEARNING contract" : "") << ")\n";
  return 0;
}

int cmd_sae_train(const SaeTrainArgs& a) {
  const TrainTest data = load_dataset(a.data);
  const Checkpoint ckpt = load_checkpoint(a.model);
  auto [cap, logits] = ckpt.model.forward_capture(data.train.inputs, a.layer);
  (void)logits;
  ActivationBatch acts{std::move(cap.values), digest_file(a.model), a.layer};
  SaeConfig sc;
  sc.d = ckpt.model.hidden_dim();
  sc.m = a.expansion * sc.d;
  sc.k = a.k;
  sc.epochs = a.epochs;
  sc.lr = a.lr;
  sc.momentum = a.momentum;
  sc.batch_size = a.batch_size;
  sc.seed = a.seed;
  SaeTrainStats stats;
  const SaeModel sae = train_sae(acts, sc, &stats);
  const fs::path out = apply_output_root(
      a.out.empty() ? ("sae_L" + std::to_string(a.layer) + ".sae") : a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_sae(sae, out);
  std::cout << "wrote " << out.string() << " (mse " << stats.initial_loss << " -> "
            << stats.final_loss << ", " << stats.dead_features_resampled
            << " dead features resampled)\n";
  return 0;
}

int cmd_audit_run(const AuditRunArgs& a) {
  if (!a.sae_orig.empty() && a.sae_orig.size() != a.layers.size()) {
    throw ConfigError("--sae-orig needs one path per layer");
  }
  if (!a.sae_unl.empty() && a.sae_unl.size() != a.layers.size()) {
    throw ConfigError("--sae-unl needs one path per layer");
  }
  const TrainTest data = load_dataset(a.data);
  const Checkpoint orig = load_checkpoint(a.original);
  const Checkpoint unl = load_checkpoint(a.unlearned);
  const fs::path dir = apply_output_root(a.out_dir);
  fs::create_directories(dir);

  const bool shared_mode = a.sae_mode == "shared";
  if (!shared_mode && a.sae_mode != "two-sae") {
    throw ConfigError("--mode must be 'two-sae' or 'shared'");
  }

  auto make_sae_config = [&](const Checkpoint& ckpt, const std::string& tag, int layer) {
    SaeConfig sc;
    sc.d = ckpt.model.hidden_dim();
    sc.m = a.sae_expansion * sc.d;
    sc.k = a.sae_k;
    sc.epochs = a.sae_epochs;
    sc.lr = a.sae_lr;
    sc.batch_size = 256;
    sc.seed = Rng::derive(a.seed, "audit-sae/" + tag + "/L" + std::to_string(layer)).next_u64();
    return sc;
  };

  const auto get_sae = [&](const std::vector<std::string>& given, const std::string& ckpt_path,
                           const Checkpoint& ckpt, std::size_t li, const std::string& tag) {
    const int layer = a.layers[li];
    if (!given.empty()) return load_sae(given[li]);
    auto [cap, logits] = ckpt.model.forward_capture(data.train.inputs, layer);
    (void)logits;
    ActivationBatch acts{std::move(cap.values), digest_file(ckpt_path), layer};
    const SaeModel sae = train_sae(acts, make_sae_config(ckpt, tag, layer));
    save_sae(sae, dir / (tag + "_L" + std::to_string(layer) + ".sae"));
    return sae;
  };

  const auto get_shared_sae = [&](std::size_t li) {
    const int layer = a.layers[li];
    if (!a.sae_orig.empty()) return load_sae(a.sae_orig[li]);
    auto [cap_o, lo] = orig.model.forward_capture(data.train.inputs, layer);
    auto [cap_u, lu] = unl.model.forward_capture(data.train.inputs, layer);
    (void)lo;
    (void)lu;
    Matrix pooled(cap_o.values.rows() + cap_u.values.rows(), cap_o.values.cols());
    for (std::size_t i = 0; i < cap_o.values.rows(); ++i) {
      std::copy(cap_o.values.row_ptr(i), cap_o.values.row_ptr(i) + cap_o.values.cols(),
                pooled.row_ptr(i));
    }
    for (std::size_t i = 0; i < cap_u.values.rows(); ++i) {
      std::copy(cap_u.values.row_ptr(i), cap_u.values.row_ptr(i) + cap_u.values.cols(),
                pooled.row_ptr(cap_o.values.rows() + i));
    }
    ActivationBatch acts{std::move(pooled),
                         "pooled(" + digest_file(a.original) + "," + digest_file(a.unlearned) + ")",
                         layer};
    const SaeModel sae = train_sae(acts, make_sae_config(orig, "shared", layer));
    save_sae(sae, dir / ("shared_L" + std::to_string(layer) + ".sae"));
    return sae;
  };

  json report = json::array();
  std::vector<RestoreRow> test_rows;
  for (std::size_t li = 0; li < a.layers.size(); ++li) {
    const int layer = a.layers[li];
    const SaeModel sae_o =
        shared_mode ? get_shared_sae(li) : get_sae(a.sae_orig, a.original, orig, li, "original");
    const SaeModel sae_u = shared_mode ? sae_o : get_sae(a.sae_unl, a.unlearned, unl, li, a.name);

    // experts always selected on the original model's SAE
    auto [cap, logits] = orig.model.forward_capture(data.train.inputs, layer);
    (void)logits;
    const SparseCode code = encode(sae_o, cap.values);
    const FeatureStats stats =
        compute_feature_stats(code, data.train.labels, data.train.num_classes);
    const std::vector<int> survivors =
        filter_uninformative(stats, stats.total_samples, a.filter_lo, a.filter_hi);
    const ExpertFeatureSet experts =
        select_experts(stats, survivors, a.forget_class, sae_o.k(),
                       {sae_o.trained_on().model_id, layer});

    FeatureMatching matching;
    if (shared_mode) {
      matching = identity_matching(sae_o.m());
    } else if (a.matching_cost == "decoder-cosine") {
      matching = match_features(sae_o, sae_u, MatchingCost::DecoderCosine);
    } else if (a.matching_cost == "activation-correlation") {
      auto [cap_o, lo2] = orig.model.forward_capture(data.train.inputs, layer);
      auto [cap_u, lu2] = unl.model.forward_capture(data.train.inputs, layer);
      (void)lo2;
      (void)lu2;
      ActivationBatch po{std::move(cap_o.values), sae_o.trained_on().model_id, layer};
      ActivationBatch pu{std::move(cap_u.values), sae_u.trained_on().model_id, layer};
      matching = match_features(sae_o, sae_u, MatchingCost::ActivationCorrelation, &po, &pu);
    } else {
      throw ConfigError("unknown matching cost '" + a.matching_cost + "'");
    }

    SteeringConfig steering;
    steering.alpha = a.alpha;
    steering.layer = layer;
    steering.expert_set = experts;
    steering.matching = matching;
    steering.error_term = a.error_term == "preserve" ? ErrorTerm::Preserve : ErrorTerm::Drop;

    const RestoreRow test_row = restore(orig, unl, sae_o, sae_u, steering, data.test, a.forget_class);
    const RestoreRow train_row =
        restore(orig, unl, sae_o, sae_u, steering, data.train, a.forget_class);
    test_rows.push_back(test_row);

    json cell;
    cell["method"] = a.name;
    cell["layer"] = layer;
    cell["alpha"] = a.alpha;
    cell["error_term"] = a.error_term;
    json mj;
    mj["cost"] = a.matching_cost;
    mj["total_cost"] = matching.total_cost;
    mj["digest"] = matching.cost_digest;
    cell["matching"] = mj;
    const auto fill = [](const RestoreRow& r) {
      json x;
      x["unlearned_forget_acc"] = r.unlearned_forget_acc;
      x["passthrough_forget_acc"] = r.passthrough_forget_acc;
      x["restored_forget_acc"] = r.restored_forget_acc;
      x["delta_vs_unlearned"] = r.delta_vs_unlearned;
      x["delta_vs_passthrough"] = r.delta_vs_passthrough;
      x["unlearned_retain_acc"] = r.unlearned_retain_acc;
      x["passthrough_retain_acc"] = r.passthrough_retain_acc;
      x["restored_retain_acc"] = r.restored_retain_acc;
      x["retain_delta"] = r.retain_delta;
      return x;
    };
    cell["rows"] = json{{"test", fill(test_row)}, {"train", fill(train_row)}};
    report.push_back(cell);
  }

  const Verdict verdict =
      classify_verdict(test_rows, {a.high_threshold, a.low_threshold});
  json out;
  out["cells"] = report;
  out["verdict"] = verdict_name(verdict);
  out["thresholds"] = json{{"high", a.high_threshold}, {"low", a.low_threshold}};
  write_file(dir / "audit.json", out.dump(2) + "\n");

  // Table-2 style CSV: one method row, restored columns with deltas.
  std::ostringstream csv;
  csv << "method,unlearned_accuracy";
  for (int layer : a.layers) csv << ",restored_L" << layer;
  csv << ",verdict\n" << a.name;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f%%", test_rows.front().unlearned_forget_acc * 100.0);
  csv << "," << buf;
  for (const RestoreRow& r : test_rows) {
    std::snprintf(buf, sizeof(buf), "%.2f%% (%+.2f)", r.restored_forget_acc * 100.0,
                  r.delta_vs_unlearned * 100.0);
    csv << "," << buf;
  }
  csv << "," << verdict_name(verdict) << "\n";
  write_file(dir / "audit.csv", csv.str());

  std::cout << "wrote " << (dir / "audit.json").string() << " (verdict: " << verdict_name(verdict)
            << ")\n";
  return 0;
}

int cmd_pipeline_run(const PipelineRunArgs& a) {
  PipelineConfig cfg =
      a.config_path.empty() ? default_pipeline_config() : load_pipeline_config(a.config_path);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;
  cfg.output_dir = apply_output_root(cfg.output_dir);
  if (a.dump_config) {
    std::cout << serialize_pipeline_config(cfg);
    return 0;
  }
  const RunManifest manifest = run_pipeline(cfg);
  std::size_t cached = 0;
  for (const auto& [name, rec] : manifest.stages) {
    if (rec.status == "cached") ++cached;
  }
  std::cout << "pipeline complete: " << manifest.stages.size() << " stages (" << cached
            << " cached), report at " << (fs::path(cfg.output_dir) / artifact::report_json()).string()
            << "\n";
  return 0;
}

int cmd_report_render(const ReportRenderArgs& a) {
  const fs::path root = apply_output_root(a.run_dir);
  const RunManifest manifest = load_manifest(root / artifact::manifest_file());
  const std::string doc = render_report(manifest, root, report_format_from_name(a.format));
  if (a.out.empty()) {
    std::cout << doc;
  } else {
    write_file(apply_output_root(a.out), doc);
    std::cout << "wrote " << apply_output_root(a.out) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saeaudit: representation-level unlearning audit toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  int threads = static_cast<int>(std::min(8u, std::max(1u, std::thread::hardware_concurrency())));
  app.add_option("--threads", threads,
                 "Worker threads for large matmuls (results are identical for any value)");

  // data gen
  auto* data_cmd = app.add_subcommand("data", "Dataset commands");
  data_cmd->require_subcommand(1);
  DataGenArgs dg;
  auto* data_gen = data_cmd->add_subcommand("gen", "Generate the synthetic dataset");
  data_gen->add_option("--classes", dg.spec.num_classes, "Number of classes");
  data_gen->add_option("--per-class", dg.spec.samples_per_class, "Samples per class");
  data_gen->add_option("--dim", dg.spec.input_dim, "Input dimension");
  data_gen->add_option("--separation", dg.spec.class_separation, "Pairwise mean separation");
  data_gen->add_option("--noise", dg.spec.intra_noise, "Intra-class noise scale");
  data_gen->add_option("--seed", dg.seed, "Seed");
  data_gen->add_option("--out", dg.out, "Output dataset file");

  // model train / eval
  auto* model_cmd = app.add_subcommand("model", "Classifier commands");
  model_cmd->require_subcommand(1);
  ModelTrainArgs mt;
  auto* model_train = model_cmd->add_subcommand("train", "Train the layered classifier");
  model_train->add_option("--data", mt.data, "Dataset file")->required();
  model_train->add_option("--out", mt.out, "Output checkpoint");
  model_train->add_option("--layers", mt.hidden_layers, "Hidden layers");
  model_train->add_option("--dim", mt.hidden_dim, "Hidden width");
  model_train->add_option("--epochs", mt.train.epochs, "Epochs");
  model_train->add_option("--lr", mt.train.lr, "Learning rate");
  model_train->add_option("--momentum", mt.train.momentum, "Momentum");
  model_train->add_option("--batch", mt.train.batch_size, "Batch size");
  model_train->add_option("--l2", mt.train.l2, "L2 weight decay");
  model_train->add_option("--seed", mt.seed, "Seed");
  ModelEvalArgs me;
  auto* model_eval = model_cmd->add_subcommand("eval", "Evaluate a checkpoint");
  model_eval->add_option("--model", me.model, "Checkpoint")->required();
  model_eval->add_option("--data", me.data, "Dataset file")->required();
  model_eval->add_option("--forget-class", me.forget_class, "Also report forget/retain accuracy");

  // unlearn run
  auto* unlearn_cmd = app.add_subcommand("unlearn", "Unlearning methods");
  unlearn_cmd->require_subcommand(1);
  UnlearnRunArgs ur;
  auto* unlearn_run = unlearn_cmd->add_subcommand("run", "Run one unlearning method");
  unlearn_run->add_option("--method", ur.method, "Method name")->required();
  unlearn_run->add_option("--forget-class", ur.forget_class, "Class to forget")->required();
  unlearn_run->add_option("--original", ur.original, "Original checkpoint")->required();
  unlearn_run->add_option("--data", ur.data, "Dataset file")->required();
  unlearn_run->add_option("--out-dir", ur.out_dir, "Output directory");
  unlearn_run->add_option("--set", ur.sets, "Hyperparameter override key=value (repeatable)");
  unlearn_run->add_option("--seed", ur.seed, "Seed");

  // sae train
  auto* sae_cmd = app.add_subcommand("sae", "Sparse autoencoder commands");
  sae_cmd->require_subcommand(1);
  SaeTrainArgs sa;
  auto* sae_train = sae_cmd->add_subcommand("train", "Train a TopK SAE on layer activations");
  sae_train->add_option("--model", sa.model, "Checkpoint")->required();
  sae_train->add_option("--layer", sa.layer, "Hidden layer to capture")->required();
  sae_train->add_option("--data", sa.data, "Dataset file")->required();
  sae_train->add_option("--out", sa.out, "Output SAE file");
  sae_train->add_option("--expansion", sa.expansion, "Latents per activation dim");
  sae_train->add_option("--k", sa.k, "TopK sparsity");
  sae_train->add_option("--epochs", sa.epochs, "Epochs");
  sae_train->add_option("--lr", sa.lr, "Learning rate");
  sae_train->add_option("--momentum", sa.momentum, "Momentum");
  sae_train->add_option("--batch", sa.batch_size, "Batch size");
  sae_train->add_option("--seed", sa.seed, "Seed");

  // audit run
  auto* audit_cmd = app.add_subcommand("audit", "Restoration audit");
  audit_cmd->require_subcommand(1);
  AuditRunArgs au;
  auto* audit_run = audit_cmd->add_subcommand("run", "Audit one unlearned checkpoint");
  audit_run->add_option("--original", au.original, "Original checkpoint")->required();
  audit_run->add_option("--unlearned", au.unlearned, "Unlearned checkpoint")->required();
  audit_run->add_option("--data", au.data, "Dataset file")->required();
  audit_run->add_option("--name", au.name, "Row label for the report");
  audit_run->add_option("--layers", au.layers, "Audit layers")->delimiter(',');
  audit_run->add_option("--alpha", au.alpha, "Steering coefficient");
  audit_run->add_option("--forget-class", au.forget_class, "Forgotten class")->required();
  audit_run->add_option("--out-dir", au.out_dir, "Output directory");
  audit_run->add_option("--sae-orig", au.sae_orig, "Original-model SAE files, one per layer")
      ->delimiter(',');
  audit_run->add_option("--sae-unl", au.sae_unl, "Unlearned-model SAE files, one per layer")
      ->delimiter(',');
  audit_run->add_option("--cost", au.matching_cost,
                        "Matching cost: decoder-cosine | activation-correlation");
  audit_run->add_option("--mode", au.sae_mode, "SAE mode: two-sae | shared");
  audit_run->add_option("--error-term", au.error_term, "drop | preserve");
  audit_run->add_option("--high-threshold", au.high_threshold, "Suppression verdict threshold");
  audit_run->add_option("--low-threshold", au.low_threshold, "Deletion verdict threshold");
  audit_run->add_option("--filter-lo", au.filter_lo, "Never-activate filter fraction");
  audit_run->add_option("--filter-hi", au.filter_hi, "Always-activate filter fraction");
  audit_run->add_option("--sae-epochs", au.sae_epochs, "Epochs when training SAEs on the fly");
  audit_run->add_option("--sae-expansion", au.sae_expansion, "Expansion when training SAEs");
  audit_run->add_option("--sae-k", au.sae_k, "TopK when training SAEs");
  audit_run->add_option("--sae-lr", au.sae_lr, "Learning rate when training SAEs");
  audit_run->add_option("--seed", au.seed, "Seed");

  // pipeline run
  auto* pipeline_cmd = app.add_subcommand("pipeline", "End-to-end pipeline");
  pipeline_cmd->require_subcommand(1);
  PipelineRunArgs pr;
  auto* pipeline_run = pipeline_cmd->add_subcommand("run", "Run the full audit pipeline");
  pipeline_run->add_option("--config", pr.config_path, "Pipeline config file (defaults built in)");
  pipeline_run->add_option("--out", pr.out_dir, "Output directory (overrides config)");
  std::uint64_t seed_override = 0;
  auto* seed_opt = pipeline_run->add_option("--seed", seed_override, "Seed (overrides config)");
  pipeline_run->add_flag("--dump-config", pr.dump_config,
                         "Print the materialized config and exit");

  // report render
  auto* report_cmd = app.add_subcommand("report", "Report rendering");
  report_cmd->require_subcommand(1);
  ReportRenderArgs rr;
  auto* report_render = report_cmd->add_subcommand("render", "Render a pipeline run's report");
  report_render->add_option("--run", rr.run_dir, "Pipeline output directory")->required();
  report_render->add_option("--format", rr.format, "csv | json | markdown");
  report_render->add_option("--out", rr.out, "Output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  set_matmul_threads(threads);

  try {
    if (data_gen->parsed()) return cmd_data_gen(dg);
    if (model_train->parsed()) return cmd_model_train(mt);
    if (model_eval->parsed()) return cmd_model_eval(me);
    if (unlearn_run->parsed()) return cmd_unlearn_run(ur);
    if (sae_train->parsed()) return cmd_sae_train(sa);
    if (audit_run->parsed()) return cmd_audit_run(au);
    if (pipeline_run->parsed()) {
      if (seed_opt->count() > 0) pr.seed = seed_override;
      return cmd_pipeline_run(pr);
    }
    if (report_render->parsed()) return cmd_report_render(rr);
    std::cerr << "no subcommand\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
}
