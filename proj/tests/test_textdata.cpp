#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "capstext/error.hpp"
#include "capstext/text.hpp"
#include "support.hpp"

using namespace capstext;

namespace {

std::vector<LabeledExample> corpus_from_lines(const std::vector<std::string>& lines) {
  std::vector<LabeledExample> corpus;
  for (const auto& line : lines) {
    LabeledExample example;
    example.tokens = tokenize(line);
    example.labels.insert("x");
    corpus.push_back(std::move(example));
  }
  return corpus;
}

std::string write_file(const std::string& name, const std::string& content) {
  std::string path = testsupport::temp_dir("capstext_textdata") + "/" + name;
  std::ofstream out(path, std::ios::trunc);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("tokenize splits words and punctuation") {
  auto tokens = tokenize("Interest rates, firm.");
  CHECK(tokens == std::vector<std::string>{"interest", "rates", ",", "firm", "."});
  CHECK(tokenize("").empty());
  CHECK(tokenize("ABC abc") == std::vector<std::string>{"abc", "abc"});
  CHECK(tokenize("a-b c2d") == std::vector<std::string>{"a", "-", "b", "c2d"});
}

TEST_CASE("vocabulary build and lookup") {
  auto corpus = corpus_from_lines({"a b", "a"});
  auto vocab = Vocabulary::build(corpus, 1);
  CHECK(vocab.size() == 4);
  CHECK(vocab.lookup("<pad>") == 0);
  CHECK(vocab.lookup("a") == 2);
  CHECK(vocab.lookup("b") == 3);
  CHECK(vocab.lookup("zzz") == Vocabulary::kUnkIndex);

  auto strict = Vocabulary::build(corpus, 2);
  CHECK(strict.size() == 3);
  CHECK(strict.lookup("a") == 2);
  CHECK(strict.lookup("b") == Vocabulary::kUnkIndex);

  CHECK_THROWS_AS(Vocabulary::build(corpus, 0), ContractError);
  CHECK_THROWS_AS(Vocabulary::build({}, 1), ContractError);
}

TEST_CASE("vocabulary ordering is frequency desc then token asc") {
  auto corpus = corpus_from_lines({"b b c c a"});
  auto vocab = Vocabulary::build(corpus, 1);
  CHECK(vocab.token(2) == "b");  // count 2, before c by token order
  CHECK(vocab.token(3) == "c");
  CHECK(vocab.token(4) == "a");
}

TEST_CASE("load_embeddings copies in-vocab rows") {
  auto path = write_file("vecs.txt", "2 3\nfoo 1 2 3\nbar 4 5 6\n");
  auto corpus = corpus_from_lines({"foo baz"});
  auto vocab = Vocabulary::build(corpus);
  auto table = load_embeddings(path, vocab, 3, 99);

  size_t foo = vocab.lookup("foo");
  CHECK(table.row(foo)[0] == 1.0);
  CHECK(table.row(foo)[1] == 2.0);
  CHECK(table.row(foo)[2] == 3.0);
  for (size_t j = 0; j < 3; ++j) CHECK(table.row(Vocabulary::kPadIndex)[j] == 0.0);

  // absent word: seeded random in (-0.25, 0.25), reproducible
  size_t baz = vocab.lookup("baz");
  for (size_t j = 0; j < 3; ++j) {
    CHECK(std::abs(table.row(baz)[j]) < 0.25);
    CHECK(table.row(baz)[j] != 0.0);
  }
  auto again = load_embeddings(path, vocab, 3, 99);
  CHECK(table.data == again.data);
  auto different = load_embeddings(path, vocab, 3, 100);
  CHECK(table.row(baz)[0] != different.row(baz)[0]);
}

TEST_CASE("load_embeddings error paths") {
  auto corpus = corpus_from_lines({"foo"});
  auto vocab = Vocabulary::build(corpus);

  auto mismatched = write_file("vecs_dim.txt", "2 4\nfoo 1 2 3 4\nbar 4 5 6 7\n");
  CHECK_THROWS_AS(load_embeddings(mismatched, vocab, 3, 1), ConfigError);

  auto garbled = write_file("vecs_bad.txt", "not a header\nfoo 1 2 3\n");
  try {
    load_embeddings(garbled, vocab, 3, 1);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(":1:") != std::string::npos);
  }

  auto short_row = write_file("vecs_short.txt", "1 3\nfoo 1 2\n");
  try {
    load_embeddings(short_row, vocab, 3, 1);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }

  CHECK_THROWS_AS(load_embeddings("/nonexistent/vecs.txt", vocab, 3, 1), IoError);
}

TEST_CASE("in-vocab embedding rows round-trip exactly") {
  auto path = write_file("vecs_rt.txt", "2 3\nfoo 0.123456 -4.5 1e-3\nbar -0.25 0.25 7\n");
  auto corpus = corpus_from_lines({"foo bar"});
  auto vocab = Vocabulary::build(corpus);
  auto table = load_embeddings(path, vocab, 3, 5);
  CHECK(table.row(vocab.lookup("foo"))[0] == 0.123456);
  CHECK(table.row(vocab.lookup("foo"))[1] == -4.5);
  CHECK(table.row(vocab.lookup("foo"))[2] == 1e-3);
  CHECK(table.row(vocab.lookup("bar"))[2] == 7.0);
}

TEST_CASE("load_dataset parses labels and reports malformed lines") {
  std::string dir = testsupport::temp_dir("capstext_dataset_ok");
  std::ofstream(dir + "/train.tsv") << "pos\tgreat movie\nneg\tawful plot\n";
  std::ofstream(dir + "/dev.tsv") << "pos\tfine\n";
  std::ofstream(dir + "/test.tsv") << "acq,earn\ttext here\n";

  auto splits = load_dataset(dir);
  CHECK(splits.train.size() == 2);
  CHECK(splits.train[0].labels == std::set<std::string>{"pos"});
  CHECK(splits.train[0].tokens == std::vector<std::string>{"great", "movie"});
  CHECK(splits.test[0].labels == std::set<std::string>{"acq", "earn"});
  CHECK(splits.categories == std::vector<std::string>{"acq", "earn", "neg", "pos"});

  std::string bad_dir = testsupport::temp_dir("capstext_dataset_bad");
  std::ofstream(bad_dir + "/train.tsv") << "pos\tok line\nno-tab-here\n";
  std::ofstream(bad_dir + "/dev.tsv") << "pos\tfine\n";
  std::ofstream(bad_dir + "/test.tsv") << "pos\tfine\n";
  try {
    load_dataset(bad_dir);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    std::string msg = e.what();
    CHECK(msg.find("train.tsv:2") != std::string::npos);
  }

  std::string empty_label_dir = testsupport::temp_dir("capstext_dataset_lbl");
  std::ofstream(empty_label_dir + "/train.tsv") << "pos,\ttext\n";
  std::ofstream(empty_label_dir + "/dev.tsv") << "pos\tfine\n";
  std::ofstream(empty_label_dir + "/test.tsv") << "pos\tfine\n";
  CHECK_THROWS_AS(load_dataset(empty_label_dir), FormatError);

  CHECK_THROWS_AS(load_dataset("/nonexistent_dir"), IoError);
}

TEST_CASE("encode_example pads, truncates and stays deterministic") {
  auto corpus = corpus_from_lines({"a b c d e f"});
  auto vocab = Vocabulary::build(corpus);

  LabeledExample two;
  two.tokens = {"a", "b"};
  auto padded = encode_example(two, vocab, 4);
  CHECK(padded.indices.size() == 4);
  CHECK(padded.indices[0] == vocab.lookup("a"));
  CHECK(padded.indices[1] == vocab.lookup("b"));
  CHECK(padded.indices[2] == 0);
  CHECK(padded.indices[3] == 0);
  CHECK(padded.original_length == 2);

  LabeledExample six;
  six.tokens = {"a", "b", "c", "d", "e", "f"};
  auto truncated = encode_example(six, vocab, 4);
  CHECK(truncated.indices.size() == 4);
  CHECK(truncated.indices[3] == vocab.lookup("d"));
  CHECK(truncated.original_length == 6);

  LabeledExample exact;
  exact.tokens = {"a", "b", "c", "d"};
  auto same = encode_example(exact, vocab, 4);
  for (size_t i = 0; i < 4; ++i) CHECK(same.indices[i] == vocab.lookup(exact.tokens[i]));

  auto again = encode_example(six, vocab, 4);
  CHECK(again.indices == truncated.indices);
}

TEST_CASE("transfer-style corpora keep train and dev single-label") {
  auto corpus = testsupport::make_keyword_corpus(3, 10, 4, 20, 7);
  for (const auto& example : corpus.train) CHECK(example.labels.size() == 1);
  for (const auto& example : corpus.dev) CHECK(example.labels.size() == 1);
  bool any_multi = false;
  for (const auto& example : corpus.multi_test) any_multi |= example.labels.size() > 1;
  CHECK(any_multi);

  // survives the TSV round trip
  std::string dir = testsupport::write_corpus_dir(corpus, testsupport::temp_dir("capstext_transfer"));
  auto splits = load_dataset(dir);
  for (const auto& example : splits.train) CHECK(example.labels.size() == 1);
  for (const auto& example : splits.dev) CHECK(example.labels.size() == 1);
}

TEST_CASE("suggest_max_len uses the 95th percentile") {
  std::vector<LabeledExample> split;
  for (size_t len = 1; len <= 100; ++len) {
    LabeledExample example;
    for (size_t i = 0; i < len; ++i) example.tokens.push_back("w");
    example.labels.insert("x");
    split.push_back(std::move(example));
  }
  CHECK(suggest_max_len(split) == 95);
}
