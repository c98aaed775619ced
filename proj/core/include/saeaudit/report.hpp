#pragma once

#include <filesystem>
#include <string>

#include "saeaudit/pipeline.hpp"

namespace saeaudit {

enum class ReportFormat { Csv, Json, Markdown };

ReportFormat report_format_from_name(const std::string& name);

// Renders the method-by-layer audit table (unlearned accuracy, restored
// accuracy with deltas in parentheses, verdicts) from the artifacts a
// manifest points at. Output depends only on artifact contents, so equal
// runs render byte-identical documents.
std::string render_report(const RunManifest& manifest, const std::filesystem::path& root,
                          ReportFormat format);

}  // namespace saeaudit
