#include "capstext/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "capstext/error.hpp"
#include "capstext/rng.hpp"

namespace capstext {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
    if (!std::isspace(c)) tokens.emplace_back(1, static_cast<char>(c));
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary Vocabulary::build(const std::vector<LabeledExample>& corpus, size_t min_count) {
  if (min_count < 1) throw ContractError("build_vocab: min_count must be >= 1");
  if (corpus.empty()) throw ContractError("build_vocab: empty corpus");

  std::unordered_map<std::string, size_t> counts;
  for (const auto& example : corpus) {
    for (const auto& token : example.tokens) ++counts[token];
  }
  std::vector<std::pair<std::string, size_t>> kept;
  kept.reserve(counts.size());
  for (auto& [token, count] : counts) {
    if (count >= min_count) kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  vocab.tokens_ = {"<pad>", "<unk>"};
  for (auto& [token, count] : kept) vocab.tokens_.push_back(token);
  for (size_t i = 0; i < vocab.tokens_.size(); ++i) vocab.index_[vocab.tokens_[i]] = i;
  return vocab;
}

size_t Vocabulary::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkIndex : it->second;
}

const std::string& Vocabulary::token(size_t index) const {
  if (index >= tokens_.size()) {
    throw ContractError("vocabulary index " + std::to_string(index) + " out of range");
  }
  return tokens_[index];
}

namespace {

void fill_random_row(std::vector<double>& data, size_t row, size_t dim, Rng& rng) {
  for (size_t j = 0; j < dim; ++j) data[row * dim + j] = rng.next_uniform(-0.25, 0.25);
}

}  // namespace

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, size_t dim,
                               uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ":1: missing header line");
  std::istringstream header(line);
  size_t word_count = 0, file_dim = 0;
  if (!(header >> word_count >> file_dim)) {
    throw FormatError(path + ":1: malformed header, expected '<count> <dim>'");
  }
  if (file_dim != dim) {
    throw ConfigError(path + ": embedding dim " + std::to_string(file_dim) +
                      " does not match configured dim " + std::to_string(dim));
  }

  EmbeddingTable table;
  table.rows = vocab.size();
  table.dim = dim;
  table.data.assign(table.rows * dim, 0.0);
  std::vector<bool> filled(table.rows, false);

  size_t lineno = 1;
  size_t seen = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ++seen;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) throw FormatError(path + ":" + std::to_string(lineno) + ": empty record");
    std::vector<double> vec(dim);
    for (size_t j = 0; j < dim; ++j) {
      if (!(ls >> vec[j])) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(dim) + " values for word '" + word + "'");
      }
    }
    double extra;
    if (ls >> extra) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": too many values for word '" +
                        word + "'");
    }
    size_t idx = vocab.lookup(word);
    if (idx != Vocabulary::kUnkIndex && !filled[idx]) {
      std::copy(vec.begin(), vec.end(), table.data.begin() + static_cast<ptrdiff_t>(idx * dim));
      filled[idx] = true;
    }
  }
  if (seen != word_count) {
    throw FormatError(path + ": header promises " + std::to_string(word_count) +
                      " records, file has " + std::to_string(seen));
  }

  // Vocabulary words absent from the file get seeded random rows, drawn in
  // index order so the result is independent of file ordering.
  Rng rng(seed);
  for (size_t i = Vocabulary::kUnkIndex; i < table.rows; ++i) {
    if (!filled[i]) fill_random_row(table.data, i, dim, rng);
  }
  return table;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, size_t dim, uint64_t seed) {
  EmbeddingTable table;
  table.rows = vocab.size();
  table.dim = dim;
  table.data.assign(table.rows * dim, 0.0);
  Rng rng(seed);
  for (size_t i = Vocabulary::kUnkIndex; i < table.rows; ++i) fill_random_row(table.data, i, dim, rng);
  return table;
}

namespace {

std::vector<LabeledExample> load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  std::vector<LabeledExample> examples;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": missing tab separator");
    }
    std::string label_field = line.substr(0, tab);
    std::string text = line.substr(tab + 1);
    LabeledExample example;
    size_t start = 0;
    while (start <= label_field.size()) {
      size_t comma = label_field.find(',', start);
      std::string label = label_field.substr(
          start, comma == std::string::npos ? std::string::npos : comma - start);
      if (label.empty()) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": empty label field");
      }
      example.labels.insert(label);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    example.tokens = tokenize(text);
    examples.push_back(std::move(example));
  }
  return examples;
}

}  // namespace

DatasetSplits load_dataset(const std::string& dir) {
  DatasetSplits splits;
  splits.train = load_split(dir + "/train.tsv");
  splits.dev = load_split(dir + "/dev.tsv");
  splits.test = load_split(dir + "/test.tsv");

  std::set<std::string> categories;
  for (const auto* split : {&splits.train, &splits.dev, &splits.test}) {
    for (const auto& example : *split) {
      categories.insert(example.labels.begin(), example.labels.end());
    }
  }
  splits.categories.assign(categories.begin(), categories.end());
  return splits;
}

EncodedSentence encode_example(const LabeledExample& example, const Vocabulary& vocab,
                               size_t max_len) {
  if (max_len == 0) throw ContractError("encode_example: max_len must be >= 1");
  EncodedSentence encoded;
  encoded.original_length = example.tokens.size();
  encoded.indices.assign(max_len, Vocabulary::kPadIndex);
  size_t n = std::min(max_len, example.tokens.size());
  for (size_t i = 0; i < n; ++i) encoded.indices[i] = vocab.lookup(example.tokens[i]);
  return encoded;
}

size_t suggest_max_len(const std::vector<LabeledExample>& split) {
  if (split.empty()) throw ContractError("suggest_max_len: empty split");
  std::vector<size_t> lengths;
  lengths.reserve(split.size());
  for (const auto& example : split) lengths.push_back(example.tokens.size());
  std::sort(lengths.begin(), lengths.end());
  size_t idx = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(lengths.size())));
  if (idx > 0) --idx;
  return std::max<size_t>(1, lengths[idx]);
}

}  // namespace capstext
