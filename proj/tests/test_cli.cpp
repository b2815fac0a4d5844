#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "capstext/cli.hpp"
#include "capstext/error.hpp"
#include "support.hpp"

#include "json.hpp"

using namespace capstext;

namespace {

struct CaptureStdout {
  std::ostringstream buffer;
  std::streambuf* saved;
  CaptureStdout() : saved(std::cout.rdbuf(buffer.rdbuf())) {}
  ~CaptureStdout() { std::cout.rdbuf(saved); }
  std::string text() const { return buffer.str(); }
};

int run(std::vector<std::string> args, std::string* output = nullptr) {
  args.insert(args.begin(), "capstext");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  CaptureStdout capture;
  int code = run_cli(static_cast<int>(argv.size()), argv.data());
  if (output) *output = capture.text();
  return code;
}

std::string corpus_dir() {
  static std::string dir = [] {
    auto corpus = testsupport::make_keyword_corpus(2, 8, 3, 10, 515);
    return testsupport::write_corpus_dir(corpus, testsupport::temp_dir("capstext_cli_data"));
  }();
  return dir;
}

std::vector<std::string> small_model_flags() {
  return {"--embed-dim", "8",  "--conv-filters",      "5", "--primary-channels", "3",
          "--capsule-dim", "4", "--conv-caps-window", "2", "--conv-caps-filters", "2",
          "--max-len", "26",    "--seed",             "9"};
}

}  // namespace

TEST_CASE("kv settings apply and reject unknown keys") {
  RunConfig config;
  apply_kv_settings(config,
                    {{"arch", "shortcut"}, {"epochs", "3"}, {"lr", "0.01"}, {"leaky", "false"}},
                    "test");
  CHECK(config.model.arch == Arch::shortcut);
  CHECK(config.trainer.epochs == 3);
  CHECK(config.trainer.learning_rate == doctest::Approx(0.01));
  CHECK(config.model.routing.leaky == false);

  CHECK_THROWS_AS(apply_kv_settings(config, {{"not_a_key", "1"}}, "test"), ConfigError);
  CHECK_THROWS_AS(apply_kv_settings(config, {{"epochs", "many"}}, "test"), ConfigError);
}

TEST_CASE("echo covers the whole resolved configuration") {
  RunConfig config;
  config.model.categories = {"a", "b"};
  config.model.max_len = 10;
  auto echo = run_config_echo(config);
  for (const char* key : {"arch = ", "routing_iters = ", "leaky = ", "orphan = ", "loss = ",
                          "squash = ", "seed = ", "lr = ", "batch_size = ", "epochs = ",
                          "precision = ", "threshold = "}) {
    CAPTURE(key);
    CHECK(echo.find(key) != std::string::npos);
  }
}

TEST_CASE("train writes a checkpoint and a history file") {
  std::string out = testsupport::temp_dir("capstext_cli_train");
  auto args = std::vector<std::string>{"train",      "--data", corpus_dir(), "--out", out,
                                       "--epochs",   "2",      "--batch-size", "8",
                                       "--arch",     "shortcut"};
  auto extra = small_model_flags();
  args.insert(args.end(), extra.begin(), extra.end());

  std::string output;
  CHECK(run(args, &output) == 0);
  CHECK(output.find("# resolved configuration") != std::string::npos);
  CHECK(output.find("seed = 9") != std::string::npos);
  CHECK(std::filesystem::exists(out + "/model.ckpt"));
  CHECK(std::filesystem::exists(out + "/history.csv"));

  std::ifstream history(out + "/history.csv");
  std::string header;
  std::getline(history, header);
  CHECK(header == "step,epoch,loss,dev_metric,timestamp_ms");
}

TEST_CASE("eval emits a json report with the multi-label keys") {
  std::string out = testsupport::temp_dir("capstext_cli_eval");
  std::string ckpt = testsupport::temp_dir("capstext_cli_train") + "/model.ckpt";
  REQUIRE(std::filesystem::exists(ckpt));  // produced by the train test above

  std::string output;
  CHECK(run({"eval", "--checkpoint", ckpt, "--data", corpus_dir(), "--mode", "multi",
             "--threshold", "0.5", "--out", out},
            &output) == 0);
  auto report = nlohmann::json::parse(std::ifstream(out + "/eval.json"));
  for (const char* key : {"ER", "precision", "recall", "F1", "TP", "FP", "FN"}) {
    CAPTURE(key);
    CHECK(report.contains(key));
  }

  CHECK(run({"eval", "--checkpoint", ckpt, "--data", corpus_dir(), "--mode", "single", "--split",
             "dev", "--out", out},
            &output) == 0);
  auto single = nlohmann::json::parse(std::ifstream(out + "/eval.json"));
  CHECK(single.contains("accuracy"));

  CHECK(run({"eval", "--checkpoint", ckpt, "--data", corpus_dir(), "--mode", "multi", "--macro",
             "--out", out},
            &output) == 0);
  auto macro = nlohmann::json::parse(std::ifstream(out + "/eval.json"));
  CHECK(macro.contains("macro_F1"));
}

TEST_CASE("predict labels raw text lines") {
  std::string out = testsupport::temp_dir("capstext_cli_predict");
  std::string ckpt = testsupport::temp_dir("capstext_cli_train") + "/model.ckpt";
  REQUIRE(std::filesystem::exists(ckpt));

  std::string input_path = out + "/input.txt";
  std::ofstream(input_path) << "k0x0 k0x1 w3 k0x2\nk1x0 w1 k1x1 k1x3\n";

  std::string output;
  CHECK(run({"predict", "--checkpoint", ckpt, "--data", corpus_dir(), "--input", input_path,
             "--mode", "single", "--out", out},
            &output) == 0);
  // one tab-separated line per input after the config echo
  size_t tabs = 0;
  for (char c : output) tabs += c == '\t' ? 1 : 0;
  CHECK(tabs == 2);
  CHECK(output.find("cat0=") != std::string::npos);
  CHECK(output.find("orphan=") != std::string::npos);
}

TEST_CASE("export-strengths writes json lines for shortcut checkpoints") {
  std::string out = testsupport::temp_dir("capstext_cli_export");
  std::string ckpt = testsupport::temp_dir("capstext_cli_train") + "/model.ckpt";
  REQUIRE(std::filesystem::exists(ckpt));

  std::string output;
  CHECK(run({"export-strengths", "--checkpoint", ckpt, "--data", corpus_dir(), "--split", "dev",
             "--out", out},
            &output) == 0);
  CHECK(std::filesystem::exists(out + "/strengths.jsonl"));
  CHECK(output.find("records: ") != std::string::npos);
}

TEST_CASE("ablate with two toggles yields a four-row table") {
  std::string out = testsupport::temp_dir("capstext_cli_ablate");
  auto args = std::vector<std::string>{"ablate", "--data",  corpus_dir(), "--out",  out,
                                       "--epochs", "1",     "--batch-size", "8",
                                       "--arch", "shortcut", "--iters-grid", "3",
                                       "--vary", "leaky,orphan"};
  auto extra = small_model_flags();
  args.insert(args.end(), extra.begin(), extra.end());

  std::string output;
  CHECK(run(args, &output) == 0);
  for (const char* column :
       {"Index", "Routing", "Leaky", "Shared", "OrphanCap", "Loss", "Squash", "Accuracy"}) {
    CAPTURE(column);
    CHECK(output.find(column) != std::string::npos);
  }

  std::ifstream csv(out + "/ablation.csv");
  std::string line;
  size_t rows = 0;
  std::getline(csv, line);  // header
  CHECK(line == "index,routing,leaky,shared,orphan_cap,amend,loss,squash,accuracy");
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("usage errors exit with code 2") {
  std::string output;
  CHECK(run({"train", "--definitely-not-a-flag"}, &output) == 2);
  CHECK(run({"not-a-command"}, &output) == 2);
}

TEST_CASE("runtime failures exit with code 1") {
  std::string output;
  CHECK(run({"eval", "--checkpoint", "/nonexistent.ckpt", "--data", corpus_dir()}, &output) == 1);
  CHECK(run({"train", "--data", "/nonexistent_dir"}, &output) == 1);
}

TEST_CASE("seed falls back to the environment variable") {
  setenv("CAPSTEXT_SEED", "4242", 1);
  std::string out = testsupport::temp_dir("capstext_cli_envseed");
  auto args = std::vector<std::string>{"train",    "--data", corpus_dir(), "--out", out,
                                       "--epochs", "1",      "--batch-size", "16",
                                       "--arch",   "shortcut"};
  // small dims, but no --seed
  for (auto flag : {"--embed-dim", "--conv-filters", "--primary-channels", "--capsule-dim"}) {
    args.push_back(flag);
    args.push_back("4");
  }
  args.push_back("--max-len");
  args.push_back("26");

  std::string output;
  CHECK(run(args, &output) == 0);
  CHECK(output.find("seed = 4242") != std::string::npos);
  unsetenv("CAPSTEXT_SEED");
}
