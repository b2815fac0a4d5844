#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capstext/model.hpp"
#include "capstext/text.hpp"

namespace capstext {

// One n-gram position of one example: the final-iteration coupling toward
// each output category (orphan included), averaged over the primary-capsule
// channels at that position.
struct StrengthRecord {
  size_t example = 0;
  size_t branch = 0;
  size_t position = 0;
  std::string ngram;
  std::vector<std::pair<std::string, double>> couplings;  // category name -> strength
};

// JSON Lines round trip; floats carry 6 significant digits.
size_t write_strength_records(const std::vector<StrengthRecord>& records,
                              const std::string& path);
std::vector<StrengthRecord> read_strength_records(const std::string& path);

// N-grams ranked by mean coupling toward `category`, descending, ties broken
// lexicographically. Returns at most `k` entries.
std::vector<std::pair<std::string, double>> top_ngrams(const std::vector<StrengthRecord>& records,
                                                       const std::string& category, size_t k);

// Walks the primary-to-FC couplings of a shortcut-architecture model.
template <typename T>
std::vector<StrengthRecord> collect_strengths(const Model<T>& model,
                                              const std::vector<LabeledExample>& examples,
                                              const Vocabulary& vocab) {
  if (model.config.arch != Arch::shortcut) {
    throw ConfigError("strength export requires the shortcut architecture (got " +
                      to_string(model.config.arch) + ")");
  }
  std::vector<std::string> slot_names = model.config.categories;
  if (model.config.orphan) {
    for (const auto& name : slot_names) {
      if (name == "orphan") {
        throw ConfigError("strength export: category name 'orphan' collides with the orphan slot");
      }
    }
    slot_names.push_back("orphan");
  }

  size_t max_len = model.config.max_len;
  size_t channels = model.config.primary_channels;
  size_t slots = model.config.output_count();
  auto ngrams = model.config.branch_ngrams();

  std::vector<StrengthRecord> records;
  for (size_t ei = 0; ei < examples.size(); ++ei) {
    const auto& example = examples[ei];
    EncodedSentence encoded = encode_example(example, vocab, max_len);
    ClassOutputs<T> outputs = forward_example(model, encoded, /*retain_couplings=*/true);
    for (size_t bi = 0; bi < model.branches.size(); ++bi) {
      size_t ngram = ngrams[bi];
      size_t positions = max_len - ngram + 1;
      auto couplings = outputs.branch_couplings[bi].values();  // [positions * channels, slots]
      for (size_t p = 0; p < positions; ++p) {
        StrengthRecord record;
        record.example = ei;
        record.branch = bi;
        record.position = p;
        for (size_t k = 0; k < ngram; ++k) {
          if (k) record.ngram += " ";
          size_t ti = p + k;
          record.ngram += ti < example.tokens.size() && ti < max_len ? example.tokens[ti] : "<pad>";
        }
        for (size_t j = 0; j < slots; ++j) {
          double total = 0.0;
          for (size_t c = 0; c < channels; ++c) {
            total += static_cast<double>(couplings[((p * channels) + c) * slots + j]);
          }
          record.couplings.emplace_back(slot_names[j], total / static_cast<double>(channels));
        }
        records.push_back(std::move(record));
      }
    }
  }
  return records;
}

template <typename T>
size_t export_strengths(const Model<T>& model, const std::vector<LabeledExample>& examples,
                        const Vocabulary& vocab, const std::string& path) {
  return write_strength_records(collect_strengths(model, examples, vocab), path);
}

}  // namespace capstext
