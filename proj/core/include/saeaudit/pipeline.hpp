#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "saeaudit/config.hpp"

namespace saeaudit {

struct StageRecord {
  std::string params_digest;
  std::map<std::string, std::string> input_digests;   // relative path -> digest
  std::map<std::string, std::string> output_digests;  // relative path -> digest
  std::string timestamp;                               // ISO-8601 UTC, set when executed
  std::string status;                                  // "ok" or "cached"
};

struct RunManifest {
  std::string tool_version;
  std::string config_digest;
  std::string config_text;  // canonical materialized config
  std::map<std::string, StageRecord> stages;
  std::map<std::string, std::string> notes;
};

// Executes the whole audit pipeline under config.output_dir:
//   data -> model -> unlearn per method -> SAEs per (model, layer)
//   -> expert selection -> per (method, layer) restoration -> report.
// Stages whose inputs, parameters and outputs all match the previous
// manifest by content digest are skipped, so a re-run with unchanged
// inputs is a no-op and deleting one artifact re-executes only the
// stages that depend on it. The manifest is saved after every stage.
RunManifest run_pipeline(const PipelineConfig& config);

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

// Checks that every artifact the manifest lists exists under root and
// still matches its recorded digest. Returns false and fills first_error
// on the first mismatch.
bool verify_manifest(const RunManifest& manifest, const std::filesystem::path& root,
                     std::string* first_error = nullptr);

// Relative artifact paths used by the pipeline; report rendering and the
// CLI resolve artifacts through these.
namespace artifact {
std::string data();
std::string model_checkpoint();
std::string model_result();
std::string unlearn_checkpoint(const std::string& method);
std::string unlearn_result(const std::string& method);
std::string sae_file(const std::string& model_tag, int layer);  // "original" or method name
std::string shared_sae_file(const std::string& method, int layer);
std::string experts_file(int layer);
std::string shared_experts_file(const std::string& method, int layer);
std::string audit_row(const std::string& method, int layer);
std::string report_json();
std::string report_csv();
std::string report_markdown();
std::string manifest_file();
}  // namespace artifact

}  // namespace saeaudit
