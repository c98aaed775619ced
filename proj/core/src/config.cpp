#include "saeaudit/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "saeaudit/errors.hpp"

namespace saeaudit {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
  }
  return i;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + value +
                      "'");
  }
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : value) {
    if (c == ',') {
      const std::string p = trim(cur);
      if (!p.empty()) parts.push_back(p);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  const std::string p = trim(cur);
  if (!p.empty()) parts.push_back(p);
  return parts;
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;
using Sections = std::vector<std::pair<std::string, KeyValues>>;

Sections parse_ini(const std::string& text) {
  Sections sections;
  sections.emplace_back("", KeyValues{});  // top level
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
      }
      const std::string name = trim(t.substr(1, t.size() - 2));
      if (name.empty()) {
        throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
      }
      sections.emplace_back(name, KeyValues{});
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    }
    for (const auto& [k, v] : sections.back().second) {
      if (k == key) {
        throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                          "'");
      }
    }
    sections.back().second.emplace_back(key, value);
  }
  return sections;
}

}  // namespace

PipelineConfig default_pipeline_config() {
  PipelineConfig cfg;
  cfg.methods = unlearn_method_names();
  return cfg;
}

void validate_pipeline_config(const PipelineConfig& c) {
  if (c.version != 1) throw ConfigError("config: unsupported version " + std::to_string(c.version));
  if (c.data.num_classes < 2) throw ConfigError("config: data.num_classes must be >= 2");
  if (c.data.samples_per_class < 5) throw ConfigError("config: data.samples_per_class must be >= 5");
  if (c.data.input_dim < c.data.num_classes) {
    throw ConfigError("config: data.input_dim must be >= data.num_classes");
  }
  if (c.data.class_separation <= 0.0 || c.data.intra_noise <= 0.0) {
    throw ConfigError("config: data.class_separation and data.intra_noise must be positive");
  }
  if (c.hidden_layers < 1 || c.hidden_dim < 1) {
    throw ConfigError("config: model.hidden_layers and model.hidden_dim must be positive");
  }
  if (c.model_train.epochs < 0) throw ConfigError("config: model.epochs must be >= 0");
  if (c.model_train.lr <= 0.0) throw ConfigError("config: model.lr must be positive");
  if (c.model_train.batch_size < 1) throw ConfigError("config: model.batch_size must be >= 1");
  if (c.model_train.momentum < 0.0 || c.model_train.momentum >= 1.0) {
    throw ConfigError("config: model.momentum must lie in [0, 1)");
  }
  if (c.model_train.l2 < 0.0) throw ConfigError("config: model.l2 must be >= 0");
  if (c.forget_class < 0 || c.forget_class >= c.data.num_classes) {
    throw ConfigError("config: unlearn.forget_class outside [0, num_classes)");
  }
  if (c.methods.empty()) throw ConfigError("config: unlearn.methods must not be empty");
  for (const std::string& m : c.methods) {
    if (!is_unlearn_method(m)) throw ConfigError("config: unregistered method '" + m + "'");
  }
  for (const auto& [m, hp] : c.method_overrides) {
    if (!is_unlearn_method(m)) throw ConfigError("config: overrides for unregistered method '" + m + "'");
    HyperParams defaults = unlearn_method_defaults(m);
    for (const auto& [k, v] : hp) {
      if (defaults.find(k) == defaults.end()) {
        throw ConfigError("config: unlearn." + m + " has unknown hyperparameter '" + k + "'");
      }
    }
  }
  if (c.sae.expansion < 2) throw ConfigError("config: sae.expansion must be >= 2 (overcomplete)");
  if (c.sae.k < 1 || c.sae.k > c.sae.expansion * c.hidden_dim) {
    throw ConfigError("config: sae.k must lie in [1, expansion * hidden_dim]");
  }
  if (c.sae.epochs < 1) throw ConfigError("config: sae.epochs must be >= 1");
  if (c.sae.lr <= 0.0) throw ConfigError("config: sae.lr must be positive");
  if (c.sae.batch_size < 1) throw ConfigError("config: sae.batch_size must be >= 1");
  if (c.sae.momentum < 0.0 || c.sae.momentum >= 1.0) {
    throw ConfigError("config: sae.momentum must lie in [0, 1)");
  }
  if (c.sae.mode != "two-sae" && c.sae.mode != "shared") {
    throw ConfigError("config: sae.mode must be 'two-sae' or 'shared'");
  }
  if (c.audit.layers.empty()) throw ConfigError("config: audit.layers must not be empty");
  for (int l : c.audit.layers) {
    if (l < 1 || l > c.hidden_layers) {
      throw ConfigError("config: audit layer " + std::to_string(l) + " outside [1, " +
                        std::to_string(c.hidden_layers) + "]");
    }
  }
  if (!std::isfinite(c.audit.alpha)) throw ConfigError("config: audit.alpha must be finite");
  if (c.audit.high_threshold <= c.audit.low_threshold) {
    throw ConfigError("config: audit.high_threshold must exceed audit.low_threshold");
  }
  if (c.audit.matching_cost != "decoder-cosine" &&
      c.audit.matching_cost != "activation-correlation") {
    throw ConfigError("config: audit.matching_cost must be 'decoder-cosine' or "
                      "'activation-correlation'");
  }
  if (c.audit.error_term != "drop" && c.audit.error_term != "preserve") {
    throw ConfigError("config: audit.error_term must be 'drop' or 'preserve'");
  }
  if (c.audit.filter_lo < 0.0 || c.audit.filter_hi > 1.0 ||
      c.audit.filter_lo >= c.audit.filter_hi) {
    throw ConfigError("config: need 0 <= audit.filter_lo < audit.filter_hi <= 1");
  }
  if (c.output_dir.empty()) throw ConfigError("config: output.dir must not be empty");
}

PipelineConfig parse_pipeline_config(const std::string& text) {
  PipelineConfig cfg = default_pipeline_config();
  bool methods_given = false;

  for (const auto& [section, kvs] : parse_ini(text)) {
    if (section.empty()) {
      for (const auto& [key, value] : kvs) {
        if (key == "version") cfg.version = parse_int(key, value);
        else if (key == "seed") cfg.seed = parse_u64(key, value);
        else throw ConfigError("config: unknown top-level key '" + key + "'");
      }
    } else if (section == "data") {
      for (const auto& [key, value] : kvs) {
        if (key == "num_classes") cfg.data.num_classes = parse_int(key, value);
        else if (key == "samples_per_class") cfg.data.samples_per_class = parse_int(key, value);
        else if (key == "input_dim") cfg.data.input_dim = parse_int(key, value);
        else if (key == "class_separation") cfg.data.class_separation = parse_double(key, value);
        else if (key == "intra_noise") cfg.data.intra_noise = parse_double(key, value);
        else throw ConfigError("config: unknown key 'data." + key + "'");
      }
    } else if (section == "model") {
      for (const auto& [key, value] : kvs) {
        if (key == "hidden_layers") cfg.hidden_layers = parse_int(key, value);
        else if (key == "hidden_dim") cfg.hidden_dim = parse_int(key, value);
        else if (key == "epochs") cfg.model_train.epochs = parse_int(key, value);
        else if (key == "lr") cfg.model_train.lr = parse_double(key, value);
        else if (key == "momentum") cfg.model_train.momentum = parse_double(key, value);
        else if (key == "batch_size") cfg.model_train.batch_size = parse_int(key, value);
        else if (key == "l2") cfg.model_train.l2 = parse_double(key, value);
        else throw ConfigError("config: unknown key 'model." + key + "'");
      }
    } else if (section == "unlearn") {
      for (const auto& [key, value] : kvs) {
        if (key == "forget_class") cfg.forget_class = parse_int(key, value);
        else if (key == "methods") {
          cfg.methods = split_list(value);
          methods_given = true;
        } else {
          throw ConfigError("config: unknown key 'unlearn." + key + "'");
        }
      }
    } else if (section.rfind("unlearn.", 0) == 0) {
      const std::string method = section.substr(8);
      if (!is_unlearn_method(method)) {
        throw ConfigError("config: section [" + section + "] names an unregistered method");
      }
      for (const auto& [key, value] : kvs) {
        cfg.method_overrides[method][key] = parse_double(key, value);
      }
    } else if (section == "sae") {
      for (const auto& [key, value] : kvs) {
        if (key == "expansion") cfg.sae.expansion = parse_int(key, value);
        else if (key == "k") cfg.sae.k = parse_int(key, value);
        else if (key == "epochs") cfg.sae.epochs = parse_int(key, value);
        else if (key == "lr") cfg.sae.lr = parse_double(key, value);
        else if (key == "momentum") cfg.sae.momentum = parse_double(key, value);
        else if (key == "batch_size") cfg.sae.batch_size = parse_int(key, value);
        else if (key == "mode") cfg.sae.mode = value;
        else throw ConfigError("config: unknown key 'sae." + key + "'");
      }
    } else if (section == "audit") {
      for (const auto& [key, value] : kvs) {
        if (key == "layers") {
          cfg.audit.layers.clear();
          for (const std::string& p : split_list(value)) {
            cfg.audit.layers.push_back(parse_int(key, p));
          }
        } else if (key == "alpha") cfg.audit.alpha = parse_double(key, value);
        else if (key == "high_threshold") cfg.audit.high_threshold = parse_double(key, value);
        else if (key == "low_threshold") cfg.audit.low_threshold = parse_double(key, value);
        else if (key == "matching_cost") cfg.audit.matching_cost = value;
        else if (key == "error_term") cfg.audit.error_term = value;
        else if (key == "filter_lo") cfg.audit.filter_lo = parse_double(key, value);
        else if (key == "filter_hi") cfg.audit.filter_hi = parse_double(key, value);
        else throw ConfigError("config: unknown key 'audit." + key + "'");
      }
    } else if (section == "output") {
      for (const auto& [key, value] : kvs) {
        if (key == "dir") cfg.output_dir = value;
        else throw ConfigError("config: unknown key 'output." + key + "'");
      }
    } else {
      throw ConfigError("config: unknown section [" + section + "]");
    }
  }
  (void)methods_given;
  validate_pipeline_config(cfg);
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_pipeline_config(buf.str());
}

std::string serialize_pipeline_config(const PipelineConfig& c) {
  std::ostringstream out;
  out << "version = " << c.version << "\n";
  out << "seed = " << c.seed << "\n";
  out << "\n[data]\n";
  out << "num_classes = " << c.data.num_classes << "\n";
  out << "samples_per_class = " << c.data.samples_per_class << "\n";
  out << "input_dim = " << c.data.input_dim << "\n";
  out << "class_separation = " << fmt_double(c.data.class_separation) << "\n";
  out << "intra_noise = " << fmt_double(c.data.intra_noise) << "\n";
  out << "\n[model]\n";
  out << "hidden_layers = " << c.hidden_layers << "\n";
  out << "hidden_dim = " << c.hidden_dim << "\n";
  out << "epochs = " << c.model_train.epochs << "\n";
  out << "lr = " << fmt_double(c.model_train.lr) << "\n";
  out << "momentum = " << fmt_double(c.model_train.momentum) << "\n";
  out << "batch_size = " << c.model_train.batch_size << "\n";
  out << "l2 = " << fmt_double(c.model_train.l2) << "\n";
  out << "\n[unlearn]\n";
  out << "forget_class = " << c.forget_class << "\n";
  out << "methods = ";
  for (std::size_t i = 0; i < c.methods.size(); ++i) {
    if (i) out << ", ";
    out << c.methods[i];
  }
  out << "\n";
  for (const auto& [method, hp] : c.method_overrides) {
    if (hp.empty()) continue;
    out << "\n[unlearn." << method << "]\n";
    for (const auto& [key, value] : hp) {
      out << key << " = " << fmt_double(value) << "\n";
    }
  }
  out << "\n[sae]\n";
  out << "expansion = " << c.sae.expansion << "\n";
  out << "k = " << c.sae.k << "\n";
  out << "epochs = " << c.sae.epochs << "\n";
  out << "lr = " << fmt_double(c.sae.lr) << "\n";
  out << "momentum = " << fmt_double(c.sae.momentum) << "\n";
  out << "batch_size = " << c.sae.batch_size << "\n";
  out << "mode = " << c.sae.mode << "\n";
  out << "\n[audit]\n";
  out << "layers = ";
  for (std::size_t i = 0; i < c.audit.layers.size(); ++i) {
    if (i) out << ", ";
    out << c.audit.layers[i];
  }
  out << "\n";
  out << "alpha = " << fmt_double(c.audit.alpha) << "\n";
  out << "high_threshold = " << fmt_double(c.audit.high_threshold) << "\n";
  out << "low_threshold = " << fmt_double(c.audit.low_threshold) << "\n";
  out << "matching_cost = " << c.audit.matching_cost << "\n";
  out << "error_term = " << c.audit.error_term << "\n";
  out << "filter_lo = " << fmt_double(c.audit.filter_lo) << "\n";
  out << "filter_hi = " << fmt_double(c.audit.filter_hi) << "\n";
  out << "\n[output]\n";
  out << "dir = " << c.output_dir << "\n";
  return out.str();
}

}  // namespace saeaudit
