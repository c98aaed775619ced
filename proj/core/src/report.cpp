#include "saeaudit/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "saeaudit/audit.hpp"
#include "saeaudit/errors.hpp"
#include "saeaudit/unlearn.hpp"

namespace saeaudit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("report: cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("report: parse error in " + path.string() + ": " + e.what());
  }
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", v * 100.0);
  return buf;
}

std::string pct_with_delta(double v, double delta) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f%% (%+.2f)", v * 100.0, delta * 100.0);
  return buf;
}

RestoreRow row_from_json(const json& j, int layer, const std::string& split) {
  RestoreRow r;
  r.layer = layer;
  r.split = split;
  r.unlearned_forget_acc = j.at("unlearned_forget_acc").get<double>();
  r.passthrough_forget_acc = j.at("passthrough_forget_acc").get<double>();
  r.restored_forget_acc = j.at("restored_forget_acc").get<double>();
  r.delta_vs_unlearned = j.at("delta_vs_unlearned").get<double>();
  r.delta_vs_passthrough = j.at("delta_vs_passthrough").get<double>();
  r.unlearned_retain_acc = j.at("unlearned_retain_acc").get<double>();
  r.passthrough_retain_acc = j.at("passthrough_retain_acc").get<double>();
  r.restored_retain_acc = j.at("restored_retain_acc").get<double>();
  r.retain_delta = j.at("retain_delta").get<double>();
  return r;
}

struct MethodReport {
  std::string method;
  std::string category;
  bool failed_unlearning = false;
  double unlearned_forget_acc = 0.0;
  double retain_acc = 0.0;
  std::vector<RestoreRow> test_rows;  // one per audit layer
  std::vector<json> layer_json;       // raw per-layer artifacts
  Verdict verdict = Verdict::Inconclusive;
};

struct ReportData {
  PipelineConfig config;
  json model_result;
  std::vector<MethodReport> methods;
  std::vector<json> expert_validation;  // per layer (or per method x layer in shared mode)
  double retrain_best_delta = 0.0;
  int retrain_best_layer = 0;
  bool have_retrain = false;
};

ReportData collect(const RunManifest& manifest, const fs::path& root) {
  ReportData data;
  data.config = parse_pipeline_config(manifest.config_text);
  const PipelineConfig& cfg = data.config;
  data.model_result = load_json(root / artifact::model_result());

  const bool shared_mode = cfg.sae.mode == "shared";
  if (!shared_mode) {
    for (int layer : cfg.audit.layers) {
      data.expert_validation.push_back(load_json(root / artifact::experts_file(layer)));
    }
  } else {
    for (const std::string& method : cfg.methods) {
      for (int layer : cfg.audit.layers) {
        data.expert_validation.push_back(
            load_json(root / artifact::shared_experts_file(method, layer)));
      }
    }
  }

  const VerdictThresholds thresholds{cfg.audit.high_threshold, cfg.audit.low_threshold};
  for (const std::string& method : cfg.methods) {
    MethodReport mr;
    mr.method = method;
    const json result = load_json(root / artifact::unlearn_result(method));
    mr.category = result.at("category").get<std::string>();
    mr.failed_unlearning = result.at("failed_unlearning").get<bool>();
    mr.unlearned_forget_acc = result.at("forget_accuracy").get<double>();
    mr.retain_acc = result.at("retain_accuracy").get<double>();
    for (int layer : cfg.audit.layers) {
      const json row = load_json(root / artifact::audit_row(method, layer));
      mr.layer_json.push_back(row);
      mr.test_rows.push_back(row_from_json(row.at("rows").at("test"), layer, "test"));
    }
    mr.verdict = classify_verdict(mr.test_rows, thresholds);
    if (method == "retrain") {
      data.have_retrain = true;
      bool first = true;
      for (const RestoreRow& r : mr.test_rows) {
        if (first || r.delta_vs_unlearned > data.retrain_best_delta) {
          data.retrain_best_delta = r.delta_vs_unlearned;
          data.retrain_best_layer = r.layer;
          first = false;
        }
      }
    }
    data.methods.push_back(std::move(mr));
  }
  return data;
}

std::string render_json(const ReportData& data, const RunManifest& manifest) {
  const PipelineConfig& cfg = data.config;
  json j;
  j["tool_version"] = manifest.tool_version;
  j["config_digest"] = manifest.config_digest;
  j["alpha"] = cfg.audit.alpha;
  j["sae_mode"] = cfg.sae.mode;
  j["matching_cost"] = cfg.audit.matching_cost;
  j["error_term"] = cfg.audit.error_term;
  j["eval_split"] = "test";
  j["layers"] = cfg.audit.layers;
  j["forget_class"] = cfg.forget_class;
  json thresholds;
  thresholds["high"] = cfg.audit.high_threshold;
  thresholds["low"] = cfg.audit.low_threshold;
  j["verdict_thresholds"] = thresholds;
  json original;
  original["train_accuracy"] = data.model_result.at("train_accuracy");
  original["test_accuracy"] = data.model_result.at("test_accuracy");
  j["original"] = original;
  j["expert_validation"] = data.expert_validation;

  json methods = json::array();
  for (const MethodReport& mr : data.methods) {
    json m;
    m["method"] = mr.method;
    m["category"] = mr.category;
    m["failed_unlearning"] = mr.failed_unlearning;
    m["unlearned_forget_accuracy"] = mr.unlearned_forget_acc;
    m["retain_accuracy"] = mr.retain_acc;
    m["verdict"] = verdict_name(mr.verdict);
    json layers = json::array();
    for (const json& lj : mr.layer_json) {
      json cell;
      cell["layer"] = lj.at("layer");
      cell["matching"] = lj.at("matching");
      cell["rows"] = lj.at("rows");
      layers.push_back(cell);
    }
    m["layers"] = layers;
    methods.push_back(m);
  }
  j["methods"] = methods;

  if (data.have_retrain) {
    json rp;
    rp["best_delta_points"] = data.retrain_best_delta * 100.0;
    rp["best_layer"] = data.retrain_best_layer;
    rp["meets_40_point_gate"] = data.retrain_best_delta >= 0.40;
    j["retrain_persistence"] = rp;
  }
  return j.dump(2) + "\n";
}

std::string render_csv(const ReportData& data) {
  const PipelineConfig& cfg = data.config;
  std::ostringstream out;
  out << "method,category,failed_unlearning,unlearned_accuracy";
  for (int layer : cfg.audit.layers) out << ",passthrough_L" << layer;
  for (int layer : cfg.audit.layers) out << ",restored_L" << layer;
  out << ",verdict\n";
  for (const MethodReport& mr : data.methods) {
    out << mr.method << "," << mr.category << "," << (mr.failed_unlearning ? "yes" : "no") << ","
        << pct(mr.unlearned_forget_acc);
    for (const RestoreRow& r : mr.test_rows) out << "," << pct(r.passthrough_forget_acc);
    for (const RestoreRow& r : mr.test_rows) {
      out << "," << pct_with_delta(r.restored_forget_acc, r.delta_vs_unlearned);
    }
    out << "," << verdict_name(mr.verdict) << "\n";
  }
  return out.str();
}

std::string render_markdown(const ReportData& data) {
  const PipelineConfig& cfg = data.config;
  std::ostringstream out;
  out << "# Unlearning restoration audit\n\n";
  out << "Forget class " << cfg.forget_class << ", steering alpha " << cfg.audit.alpha
      << ", SAE mode " << cfg.sae.mode << ", matching cost " << cfg.audit.matching_cost
      << ", error term " << cfg.audit.error_term << ". Accuracies on the test split; restored"
      << " cells show the delta against the unlearned accuracy; cells at or above "
      << pct(cfg.audit.high_threshold) << " restored accuracy are flagged in bold.\n\n";

  out << "| Method | Category | Unlearned |";
  for (int layer : cfg.audit.layers) out << " Restored L" << layer << " |";
  out << " Verdict |\n";
  out << "|---|---|---|";
  for (std::size_t i = 0; i < cfg.audit.layers.size(); ++i) out << "---|";
  out << "---|\n";

  for (const MethodReport& mr : data.methods) {
    out << "| " << mr.method << (mr.failed_unlearning ? " (failed unlearning)" : "") << " | "
        << mr.category << " | " << pct(mr.unlearned_forget_acc) << " |";
    for (const RestoreRow& r : mr.test_rows) {
      const std::string cell = pct_with_delta(r.restored_forget_acc, r.delta_vs_unlearned);
      if (r.restored_forget_acc >= cfg.audit.high_threshold) {
        out << " **" << cell << "** |";
      } else {
        out << " " << cell << " |";
      }
    }
    out << " " << verdict_name(mr.verdict) << " |\n";
  }

  out << "\n## Expert-feature ablation (original model)\n\n";
  out << "| Layer | Passthrough | Ablated | Drop (points) | Max retain drift (points) |\n";
  out << "|---|---|---|---|---|\n";
  for (const json& ev : data.expert_validation) {
    const json& v = ev.at("validation");
    char drop[32], drift[32];
    std::snprintf(drop, sizeof(drop), "%.2f", v.at("forget_drop_points").get<double>());
    std::snprintf(drift, sizeof(drift), "%.2f", v.at("retain_drift_points").get<double>());
    out << "| " << ev.at("layer").get<int>() << " | "
        << pct(v.at("passthrough_forget_acc").get<double>()) << " | "
        << pct(v.at("ablated_forget_acc").get<double>()) << " | " << drop << " | " << drift
        << " |\n";
  }

  if (data.have_retrain) {
    char delta[32];
    std::snprintf(delta, sizeof(delta), "%.2f", data.retrain_best_delta * 100.0);
    out << "\nRetrain persistence: best restored-minus-unlearned delta " << delta
        << " points at layer " << data.retrain_best_layer << " ("
        << (data.retrain_best_delta >= 0.40 ? "meets" : "below") << " the 40-point analog).\n";
  }
  return out.str();
}

}  // namespace

ReportFormat report_format_from_name(const std::string& name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  throw ConfigError("unknown report format '" + name + "' (csv, json, markdown)");
}

std::string render_report(const RunManifest& manifest, const fs::path& root, ReportFormat format) {
  const ReportData data = collect(manifest, root);
  switch (format) {
    case ReportFormat::Json:
      return render_json(data, manifest);
    case ReportFormat::Csv:
      return render_csv(data);
    case ReportFormat::Markdown:
      return render_markdown(data);
  }
  throw ConfigError("unknown report format");
}

}  // namespace saeaudit
