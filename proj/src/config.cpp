#include "capstext/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "capstext/error.hpp"

namespace capstext {

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::capsule_a: return "capsule_a";
    case Arch::capsule_b: return "capsule_b";
    case Arch::shortcut: return "shortcut";
  }
  return "?";
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::margin: return "margin";
    case LossKind::spread: return "spread";
    case LossKind::cross_entropy: return "cross_entropy";
  }
  return "?";
}

std::string to_string(SquashKind kind) {
  switch (kind) {
    case SquashKind::ratio: return "ratio";
    case SquashKind::exp: return "exp";
    case SquashKind::tanh: return "tanh";
    case SquashKind::none: return "none";
  }
  return "?";
}

std::string to_string(Precision precision) {
  return precision == Precision::f32 ? "f32" : "f64";
}

Arch arch_from_string(const std::string& s) {
  if (s == "capsule_a" || s == "capsule-a") return Arch::capsule_a;
  if (s == "capsule_b" || s == "capsule-b") return Arch::capsule_b;
  if (s == "shortcut") return Arch::shortcut;
  throw ConfigError("unknown architecture '" + s + "'");
}

LossKind loss_from_string(const std::string& s) {
  if (s == "margin") return LossKind::margin;
  if (s == "spread") return LossKind::spread;
  if (s == "cross_entropy" || s == "crossent") return LossKind::cross_entropy;
  throw ConfigError("unknown loss '" + s + "'");
}

SquashKind squash_from_string(const std::string& s) {
  if (s == "ratio") return SquashKind::ratio;
  if (s == "exp") return SquashKind::exp;
  if (s == "tanh") return SquashKind::tanh;
  if (s == "none") return SquashKind::none;
  throw ConfigError("unknown squash kind '" + s + "'");
}

Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw ConfigError("unknown precision '" + s + "'");
}

std::vector<size_t> ModelConfig::branch_ngrams() const {
  if (!ngram_sizes.empty()) return ngram_sizes;
  if (arch == Arch::capsule_b) return {3, 4, 5};
  return {3};
}

void ModelConfig::validate() const {
  if (categories.empty()) throw ConfigError("model config: no categories");
  if (max_len == 0) throw ConfigError("model config: max_len must be set");
  if (embed_dim == 0 || conv_filters == 0 || primary_channels == 0 || capsule_dim == 0) {
    throw ConfigError("model config: zero-sized layer dimension");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("model config: threshold must lie in (0, 1)");
  }
  if (routing.iterations < 1) throw ConfigError("model config: routing iterations must be >= 1");

  auto ngrams = branch_ngrams();
  if (arch == Arch::capsule_b) {
    if (ngrams != std::vector<size_t>{3, 4, 5}) {
      throw ConfigError("capsule_b requires exactly three branches with n-gram sizes 3,4,5");
    }
  } else if (ngrams.size() != 1) {
    throw ConfigError(to_string(arch) + " uses a single branch");
  }
  size_t max_ngram = *std::max_element(ngrams.begin(), ngrams.end());
  if (max_len < max_ngram) {
    throw ConfigError("max_len " + std::to_string(max_len) +
                      " is smaller than the largest n-gram size " + std::to_string(max_ngram));
  }
  if (arch != Arch::shortcut) {
    size_t min_positions = max_len - max_ngram + 1;
    if (min_positions < conv_caps_window) {
      throw ConfigError("max_len too small for the capsule convolution window");
    }
  }
}

namespace {

std::string join_csv(const std::vector<std::string>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

std::string join_sizes(const std::vector<size_t>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(items[i]);
  }
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string model_config_to_text(const ModelConfig& c) {
  std::ostringstream out;
  out << "arch = " << to_string(c.arch) << "\n";
  out << "embed_dim = " << c.embed_dim << "\n";
  out << "ngram_sizes = " << join_sizes(c.branch_ngrams()) << "\n";
  out << "conv_filters = " << c.conv_filters << "\n";
  out << "primary_channels = " << c.primary_channels << "\n";
  out << "capsule_dim = " << c.capsule_dim << "\n";
  out << "conv_caps_window = " << c.conv_caps_window << "\n";
  out << "conv_caps_filters = " << c.conv_caps_filters << "\n";
  out << "categories = " << join_csv(c.categories) << "\n";
  out << "orphan = " << (c.orphan ? "true" : "false") << "\n";
  out << "shared_weights = " << (c.shared_weights ? "true" : "false") << "\n";
  out << "routing_iters = " << c.routing.iterations << "\n";
  out << "leaky = " << (c.routing.leaky ? "true" : "false") << "\n";
  out << "amend = " << (c.routing.amend ? "true" : "false") << "\n";
  out << "baseline_routing = " << (c.routing.baseline_mode ? "true" : "false") << "\n";
  out << "loss = " << to_string(c.loss) << "\n";
  out << "squash = " << to_string(c.squash) << "\n";
  out << "max_len = " << c.max_len << "\n";
  out << "threshold = " << c.threshold << "\n";
  out << "seed = " << c.seed << "\n";
  out << "train_embeddings = " << (c.train_embeddings ? "true" : "false") << "\n";
  out << "vocab_size = " << c.vocab_size << "\n";
  return out.str();
}

std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                 const std::string& source) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_kv_text(buffer.str(), path);
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("key '" + key + "': expected boolean, got '" + value + "'");
}

std::vector<std::string> split_csv(const std::string& value) {
  std::vector<std::string> items;
  if (value.empty()) return items;
  size_t start = 0;
  while (true) {
    size_t comma = value.find(',', start);
    items.push_back(trim(value.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return items;
}

ModelConfig model_config_from_text(const std::string& text) {
  auto kv = parse_kv_text(text, "model config");
  ModelConfig c;
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("model config: missing key '") + key + "'");
    return it->second;
  };
  c.arch = arch_from_string(get("arch"));
  c.embed_dim = std::stoull(get("embed_dim"));
  c.ngram_sizes.clear();
  for (const auto& item : split_csv(get("ngram_sizes"))) c.ngram_sizes.push_back(std::stoull(item));
  c.conv_filters = std::stoull(get("conv_filters"));
  c.primary_channels = std::stoull(get("primary_channels"));
  c.capsule_dim = std::stoull(get("capsule_dim"));
  c.conv_caps_window = std::stoull(get("conv_caps_window"));
  c.conv_caps_filters = std::stoull(get("conv_caps_filters"));
  c.categories = split_csv(get("categories"));
  c.orphan = parse_bool(get("orphan"), "orphan");
  c.shared_weights = parse_bool(get("shared_weights"), "shared_weights");
  c.routing.iterations = static_cast<int>(std::stol(get("routing_iters")));
  c.routing.leaky = parse_bool(get("leaky"), "leaky");
  c.routing.amend = parse_bool(get("amend"), "amend");
  c.routing.baseline_mode = parse_bool(get("baseline_routing"), "baseline_routing");
  c.loss = loss_from_string(get("loss"));
  c.squash = squash_from_string(get("squash"));
  c.max_len = std::stoull(get("max_len"));
  c.threshold = std::stod(get("threshold"));
  c.seed = std::stoull(get("seed"));
  c.train_embeddings = parse_bool(get("train_embeddings"), "train_embeddings");
  c.vocab_size = std::stoull(get("vocab_size"));
  return c;
}

}  // namespace capstext
