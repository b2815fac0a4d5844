#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace capstext {

// Lowercases and splits into maximal runs of letters/digits; every other
// non-whitespace character becomes its own single-character token. Bytes
// outside ASCII are treated as word characters so multibyte sequences stay
// intact.
std::vector<std::string> tokenize(const std::string& text);

struct LabeledExample {
  std::vector<std::string> tokens;
  std::set<std::string> labels;
};

class Vocabulary {
 public:
  static constexpr size_t kPadIndex = 0;
  static constexpr size_t kUnkIndex = 1;

  // Tokens with frequency >= min_count enter the vocabulary, ordered by
  // (frequency desc, token asc) after the two reserved slots.
  static Vocabulary build(const std::vector<LabeledExample>& corpus, size_t min_count = 1);

  size_t lookup(const std::string& token) const;
  const std::string& token(size_t index) const;
  size_t size() const { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, size_t> index_;
};

struct EmbeddingTable {
  size_t rows = 0;
  size_t dim = 0;
  std::vector<double> data;  // row-major [rows, dim]
  bool trainable = false;

  const double* row(size_t r) const { return &data[r * dim]; }
};

// Reads word2vec text format ("<count> <dim>" header, then "<word> <floats>"
// per line). In-vocabulary rows are copied; the rest are drawn from
// U(-0.25, 0.25) with the given seed; the padding row is zero.
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, size_t dim,
                               uint64_t seed);

// Fully random table for runs without pretrained vectors; same OOV range and
// zero padding row as load_embeddings.
EmbeddingTable random_embeddings(const Vocabulary& vocab, size_t dim, uint64_t seed);

struct DatasetSplits {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> dev;
  std::vector<LabeledExample> test;
  std::vector<std::string> categories;  // sorted union over all splits
};

// Expects train.tsv/dev.tsv/test.tsv under `dir`, each line
// "<label>[,<label>...]\t<text>".
DatasetSplits load_dataset(const std::string& dir);

struct EncodedSentence {
  std::vector<size_t> indices;  // exactly max_len entries, zero-padded tail
  size_t original_length = 0;
};

EncodedSentence encode_example(const LabeledExample& example, const Vocabulary& vocab,
                               size_t max_len);

// Suggested encoding length: 95th-percentile token count of the split,
// rounded up.
size_t suggest_max_len(const std::vector<LabeledExample>& split);

}  // namespace capstext
