#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "capstext/ops.hpp"
#include "capstext/routing.hpp"

namespace capstext {

enum class Arch { capsule_a, capsule_b, shortcut };
enum class LossKind { margin, spread, cross_entropy };
enum class Precision { f32, f64 };

std::string to_string(Arch arch);
std::string to_string(LossKind kind);
std::string to_string(SquashKind kind);
std::string to_string(Precision precision);
Arch arch_from_string(const std::string& s);
LossKind loss_from_string(const std::string& s);
SquashKind squash_from_string(const std::string& s);
Precision precision_from_string(const std::string& s);

// Complete architecture description, including the ablation toggles. The
// defaults are the best-performing setup: three routing iterations with
// leaky softmax and coefficient amendment, orphan category on, non-shared
// transforms, margin loss, ratio squash.
struct ModelConfig {
  Arch arch = Arch::capsule_b;
  size_t embed_dim = 300;            // V
  std::vector<size_t> ngram_sizes;   // K1 per branch; empty = per-arch default
  size_t conv_filters = 32;          // B
  size_t primary_channels = 32;      // C
  size_t capsule_dim = 16;           // d
  size_t conv_caps_window = 3;       // K2
  size_t conv_caps_filters = 16;     // D
  std::vector<std::string> categories;
  bool orphan = true;
  bool shared_weights = false;
  RoutingConfig routing;
  LossKind loss = LossKind::margin;
  SquashKind squash = SquashKind::ratio;
  size_t max_len = 0;                // L, required
  double threshold = 0.5;            // multi-label decision threshold
  uint64_t seed = 0;
  bool train_embeddings = false;
  size_t vocab_size = 0;

  std::vector<size_t> branch_ngrams() const;
  size_t output_count() const { return categories.size() + (orphan ? 1 : 0); }
  void validate() const;
};

// Flat "key = value" text round-trip, also used as checkpoint metadata.
std::string model_config_to_text(const ModelConfig& config);
ModelConfig model_config_from_text(const std::string& text);

// Parses "key = value" lines with '#' comments into an ordered map.
// `source` names the origin for error messages.
std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                 const std::string& source);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

bool parse_bool(const std::string& value, const std::string& key);
std::vector<std::string> split_csv(const std::string& value);

}  // namespace capstext
