#include "capstext/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "capstext/checkpoint.hpp"
#include "capstext/error.hpp"
#include "capstext/model.hpp"
#include "capstext/strength.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace capstext {

namespace {

struct PreparedData {
  DatasetSplits splits;
  Vocabulary vocab;
};

PreparedData prepare_data(RunConfig& run) {
  if (run.data_dir.empty()) throw ConfigError("--data is required for this command");
  PreparedData data;
  data.splits = load_dataset(run.data_dir);
  data.vocab = Vocabulary::build(data.splits.train, run.min_count);
  run.model.categories = data.splits.categories;
  run.model.vocab_size = data.vocab.size();
  if (run.model.max_len == 0) run.model.max_len = suggest_max_len(data.splits.train);
  return data;
}

EmbeddingTable make_embeddings(const RunConfig& run, const Vocabulary& vocab) {
  EmbeddingTable table;
  if (run.embeddings_path.empty()) {
    table = random_embeddings(vocab, run.model.embed_dim, run.model.seed);
  } else {
    table = load_embeddings(run.embeddings_path, vocab, run.model.embed_dim, run.model.seed);
  }
  table.trainable = run.model.train_embeddings;
  return table;
}

template <typename Fn>
void with_precision(Precision precision, Fn&& fn) {
  if (precision == Precision::f32) {
    fn(float{});
  } else {
    fn(double{});
  }
}

const std::vector<LabeledExample>& pick_split(const DatasetSplits& splits,
                                              const std::string& name) {
  if (name == "train") return splits.train;
  if (name == "dev") return splits.dev;
  if (name == "test") return splits.test;
  throw ConfigError("unknown split '" + name + "' (expected train, dev or test)");
}

std::string resolve_out_path(const RunConfig& run, const std::string& name) {
  std::filesystem::create_directories(run.out_dir);
  return (std::filesystem::path(run.out_dir) / name).string();
}

Vocabulary rebuild_vocab(const RunConfig& run, const DatasetSplits& splits,
                         const ModelConfig& config) {
  Vocabulary vocab = Vocabulary::build(splits.train, run.min_count);
  if (vocab.size() != config.vocab_size) {
    throw ConfigError("rebuilt vocabulary has " + std::to_string(vocab.size()) +
                      " entries but the checkpoint was trained with " +
                      std::to_string(config.vocab_size) +
                      "; pass the training data dir and --min-count used for training");
  }
  return vocab;
}

std::string metrics_table(const MetricsReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  if (report.mode == MetricsReport::Mode::single) {
    out << "metric      value\n";
    out << "accuracy    " << report.accuracy << "  (" << report.correct << "/" << report.examples
        << ")\n";
  } else {
    out << "metric      value\n";
    out << "ER          " << report.exact_match << "\n";
    out << "precision   " << report.precision << "\n";
    out << "recall      " << report.recall << "\n";
    out << "F1          " << report.f1 << "\n";
    out << "TP/FP/FN    " << report.true_positives << "/" << report.false_positives << "/"
        << report.false_negatives << "\n";
    if (report.has_macro) {
      out << "macro P     " << report.macro_precision << "\n";
      out << "macro R     " << report.macro_recall << "\n";
      out << "macro F1    " << report.macro_f1 << "\n";
    }
  }
  return out.str();
}

nlohmann::json metrics_json(const MetricsReport& report) {
  nlohmann::json j;
  j["examples"] = report.examples;
  if (report.mode == MetricsReport::Mode::single) {
    j["mode"] = "single";
    j["accuracy"] = report.accuracy;
    j["correct"] = report.correct;
  } else {
    j["mode"] = "multi";
    j["ER"] = report.exact_match;
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["F1"] = report.f1;
    j["TP"] = report.true_positives;
    j["FP"] = report.false_positives;
    j["FN"] = report.false_negatives;
    if (report.has_macro) {
      j["macro_precision"] = report.macro_precision;
      j["macro_recall"] = report.macro_recall;
      j["macro_F1"] = report.macro_f1;
    }
  }
  return j;
}

int cmd_train(RunConfig run) {
  PreparedData data = prepare_data(run);
  run.model.validate();
  std::cout << run_config_echo(run) << std::flush;

  std::string ckpt_path =
      run.checkpoint_path.empty() ? resolve_out_path(run, "model.ckpt") : run.checkpoint_path;
  std::string history_path = resolve_out_path(run, "history.csv");

  with_precision(run.trainer.precision, [&](auto tag) {
    using T = decltype(tag);
    EmbeddingTable table = make_embeddings(run, data.vocab);
    Model<T> model = build_model<T>(run.model, table);
    TrainHistory history = train(model, data.splits.train, data.splits.dev, data.vocab,
                                 run.trainer);
    save_checkpoint(model, ckpt_path);
    write_history_csv(history, history_path);
    std::cout << "steps: " << history.steps.size() << "\n";
    if (!history.steps.empty()) {
      std::cout << "final epoch mean loss: " << history.epoch_mean_loss(history.last_epoch())
                << "\n";
    }
    double best_dev = -1.0;
    for (const auto& s : history.steps) {
      if (s.has_dev_metric && s.dev_metric > best_dev) best_dev = s.dev_metric;
    }
    if (best_dev >= 0.0) std::cout << "best dev metric: " << best_dev << "\n";
    std::cout << "checkpoint: " << ckpt_path << "\n";
    std::cout << "history: " << history_path << "\n";
  });
  return 0;
}

int cmd_eval(RunConfig run) {
  if (run.checkpoint_path.empty()) throw ConfigError("--checkpoint is required for eval");
  if (run.data_dir.empty()) throw ConfigError("--data is required for eval");
  if (run.mode != "single" && run.mode != "multi") {
    throw ConfigError("--mode must be single or multi");
  }

  ModelConfig stored = checkpoint_config(run.checkpoint_path);
  double threshold = run.model.threshold;
  RunConfig echo = run;
  echo.model = stored;
  echo.model.threshold = threshold;
  echo.trainer.precision = checkpoint_precision(run.checkpoint_path);
  std::cout << run_config_echo(echo) << std::flush;

  DatasetSplits splits = load_dataset(run.data_dir);
  const auto& split = pick_split(splits, run.split);

  MetricsReport report;
  with_precision(echo.trainer.precision, [&](auto tag) {
    using T = decltype(tag);
    Model<T> model = load_checkpoint<T>(run.checkpoint_path);
    Vocabulary vocab = rebuild_vocab(run, splits, model.config);
    if (run.mode == "single") {
      report = evaluate_single(model, split, vocab);
    } else {
      report = evaluate_multi(model, split, vocab, threshold, run.include_macro);
    }
  });

  std::cout << metrics_table(report);
  std::string json_path = resolve_out_path(run, "eval.json");
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw IoError("cannot write report: " + json_path);
  out << metrics_json(report).dump(2) << "\n";
  std::cout << "report: " << json_path << "\n";
  return 0;
}

int cmd_predict(RunConfig run) {
  if (run.checkpoint_path.empty()) throw ConfigError("--checkpoint is required for predict");
  if (run.data_dir.empty()) throw ConfigError("--data is required for predict (vocabulary)");
  if (run.mode != "single" && run.mode != "multi") {
    throw ConfigError("--mode must be single or multi");
  }

  ModelConfig stored = checkpoint_config(run.checkpoint_path);
  double threshold = run.model.threshold;
  RunConfig echo = run;
  echo.model = stored;
  echo.model.threshold = threshold;
  echo.trainer.precision = checkpoint_precision(run.checkpoint_path);
  std::cout << run_config_echo(echo) << std::flush;

  DatasetSplits splits = load_dataset(run.data_dir);

  std::istream* in = &std::cin;
  std::ifstream file;
  if (!run.input_path.empty() && run.input_path != "-") {
    file.open(run.input_path);
    if (!file) throw IoError("cannot open input: " + run.input_path);
    in = &file;
  }

  with_precision(echo.trainer.precision, [&](auto tag) {
    using T = decltype(tag);
    Model<T> model = load_checkpoint<T>(run.checkpoint_path);
    Vocabulary vocab = rebuild_vocab(run, splits, model.config);
    size_t real = model.real_category_count();

    std::string line;
    while (std::getline(*in, line)) {
      LabeledExample example;
      example.tokens = tokenize(line);
      if (example.tokens.empty()) {
        std::cout << "\n";
        continue;
      }
      auto outputs =
          forward_example(model, encode_example(example, vocab, model.config.max_len));
      auto probs = extract_probs(outputs);
      std::vector<size_t> picked;
      if (run.mode == "single") {
        picked.push_back(predict_single(probs, real));
      } else {
        picked = predict_multi(probs, real, threshold);
      }
      std::ostringstream labels;
      for (size_t i = 0; i < picked.size(); ++i) {
        labels << (i ? "," : "") << model.config.categories[picked[i]];
      }
      std::cout << labels.str() << "\t";
      for (size_t k = 0; k < probs.size(); ++k) {
        std::string name = k < real ? model.config.categories[k] : std::string("orphan");
        std::cout << (k ? " " : "") << name << "=" << std::setprecision(4) << probs[k];
      }
      std::cout << "\n";
    }
  });
  return 0;
}

int cmd_export_strengths(RunConfig run) {
  if (run.checkpoint_path.empty()) {
    throw ConfigError("--checkpoint is required for export-strengths");
  }
  if (run.data_dir.empty()) throw ConfigError("--data is required for export-strengths");

  RunConfig echo = run;
  echo.model = checkpoint_config(run.checkpoint_path);
  echo.trainer.precision = checkpoint_precision(run.checkpoint_path);
  std::cout << run_config_echo(echo) << std::flush;

  DatasetSplits splits = load_dataset(run.data_dir);
  const auto& split = pick_split(splits, run.split);
  std::string out_path = run.input_path.empty() ? resolve_out_path(run, "strengths.jsonl")
                                                : run.input_path;

  size_t count = 0;
  with_precision(echo.trainer.precision, [&](auto tag) {
    using T = decltype(tag);
    Model<T> model = load_checkpoint<T>(run.checkpoint_path);
    Vocabulary vocab = rebuild_vocab(run, splits, model.config);
    count = export_strengths(model, split, vocab, out_path);
  });
  std::cout << "records: " << count << "\n";
  std::cout << "output: " << out_path << "\n";
  return 0;
}

int cmd_ablate(RunConfig run) {
  auto rows = run_ablation(run);
  std::cout << ablation_table(rows);
  std::string csv_path = resolve_out_path(run, "ablation.csv");
  write_ablation_csv(rows, csv_path);
  std::cout << "table: " << csv_path << "\n";
  return 0;
}

}  // namespace

void apply_kv_settings(RunConfig& run, const std::map<std::string, std::string>& kv,
                       const std::string& source) {
  for (const auto& [key, value] : kv) {
    try {
      if (key == "arch") run.model.arch = arch_from_string(value);
      else if (key == "embed_dim") run.model.embed_dim = std::stoull(value);
      else if (key == "ngram_sizes") {
        run.model.ngram_sizes.clear();
        for (const auto& item : split_csv(value)) run.model.ngram_sizes.push_back(std::stoull(item));
      }
      else if (key == "conv_filters") run.model.conv_filters = std::stoull(value);
      else if (key == "primary_channels") run.model.primary_channels = std::stoull(value);
      else if (key == "capsule_dim") run.model.capsule_dim = std::stoull(value);
      else if (key == "conv_caps_window") run.model.conv_caps_window = std::stoull(value);
      else if (key == "conv_caps_filters") run.model.conv_caps_filters = std::stoull(value);
      else if (key == "orphan") run.model.orphan = parse_bool(value, key);
      else if (key == "shared_weights") run.model.shared_weights = parse_bool(value, key);
      else if (key == "routing_iters") run.model.routing.iterations = std::stoi(value);
      else if (key == "leaky") run.model.routing.leaky = parse_bool(value, key);
      else if (key == "amend") run.model.routing.amend = parse_bool(value, key);
      else if (key == "baseline_routing") run.model.routing.baseline_mode = parse_bool(value, key);
      else if (key == "loss") run.model.loss = loss_from_string(value);
      else if (key == "squash") run.model.squash = squash_from_string(value);
      else if (key == "max_len") run.model.max_len = std::stoull(value);
      else if (key == "threshold") run.model.threshold = std::stod(value);
      else if (key == "seed") {
        run.model.seed = std::stoull(value);
        run.trainer.seed = run.model.seed;
      }
      else if (key == "train_embeddings") run.model.train_embeddings = parse_bool(value, key);
      else if (key == "lr") run.trainer.learning_rate = std::stod(value);
      else if (key == "batch_size") run.trainer.batch_size = std::stoull(value);
      else if (key == "epochs") run.trainer.epochs = std::stoull(value);
      else if (key == "shuffle") run.trainer.shuffle = parse_bool(value, key);
      else if (key == "precision") run.trainer.precision = precision_from_string(value);
      else if (key == "min_count") run.min_count = std::stoull(value);
      else if (key == "data_dir") run.data_dir = value;
      else if (key == "embeddings_path") run.embeddings_path = value;
      else if (key == "checkpoint") run.checkpoint_path = value;
      else if (key == "out_dir") run.out_dir = value;
      else throw ConfigError(source + ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError(source + ": bad value '" + value + "' for key '" + key + "'");
    } catch (const std::out_of_range&) {
      throw ConfigError(source + ": value '" + value + "' out of range for key '" + key + "'");
    }
  }
}

std::string run_config_echo(const RunConfig& run) {
  std::ostringstream out;
  out << "# resolved configuration\n";
  out << model_config_to_text(run.model);
  out << "lr = " << run.trainer.learning_rate << "\n";
  out << "batch_size = " << run.trainer.batch_size << "\n";
  out << "epochs = " << run.trainer.epochs << "\n";
  out << "shuffle = " << (run.trainer.shuffle ? "true" : "false") << "\n";
  out << "precision = " << to_string(run.trainer.precision) << "\n";
  out << "min_count = " << run.min_count << "\n";
  if (!run.data_dir.empty()) out << "data_dir = " << run.data_dir << "\n";
  if (!run.embeddings_path.empty()) out << "embeddings_path = " << run.embeddings_path << "\n";
  if (!run.checkpoint_path.empty()) out << "checkpoint = " << run.checkpoint_path << "\n";
  out << "out_dir = " << run.out_dir << "\n";
  out << "# end configuration\n";
  return out.str();
}

std::vector<AblationRow> run_ablation(const RunConfig& base) {
  RunConfig run = base;
  PreparedData data = prepare_data(run);

  // accuracy over the first split that is non-empty and purely single-label
  const std::vector<LabeledExample>* eval_split = nullptr;
  for (const auto* candidate : {&data.splits.test, &data.splits.dev, &data.splits.train}) {
    bool usable = !candidate->empty();
    for (const auto& example : *candidate) usable = usable && example.labels.size() == 1;
    if (usable) {
      eval_split = candidate;
      break;
    }
  }
  if (!eval_split) throw ConfigError("ablate: no single-label split to score");

  for (const auto& name : run.ablate_vary) {
    if (name != "leaky" && name != "orphan" && name != "amend" && name != "shared") {
      throw ConfigError("ablate: unknown toggle '" + name + "'");
    }
  }

  std::vector<AblationRow> rows;
  size_t combos = size_t(1) << run.ablate_vary.size();
  for (int iters : run.ablate_iterations) {
    for (size_t mask = 0; mask < combos; ++mask) {
      AblationRow row;
      row.index = rows.size() + 1;
      row.routing = iters;
      row.leaky = run.model.routing.leaky;
      row.orphan = run.model.orphan;
      row.amend = run.model.routing.amend;
      row.shared = run.model.shared_weights;
      for (size_t v = 0; v < run.ablate_vary.size(); ++v) {
        bool on = (mask >> v) & 1;
        const std::string& name = run.ablate_vary[v];
        if (name == "leaky") row.leaky = on;
        else if (name == "orphan") row.orphan = on;
        else if (name == "amend") row.amend = on;
        else if (name == "shared") row.shared = on;
      }
      row.loss = to_string(run.model.loss);
      row.squash = to_string(run.model.squash);
      rows.push_back(row);
    }
  }

  std::atomic<size_t> next{0};
  auto worker = [&] {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= rows.size()) break;
      AblationRow& row = rows[i];
      RunConfig variant = run;
      variant.model.routing.iterations = row.routing;
      variant.model.routing.leaky = row.leaky;
      variant.model.routing.amend = row.amend;
      variant.model.orphan = row.orphan;
      variant.model.shared_weights = row.shared;
      variant.model.validate();
      with_precision(variant.trainer.precision, [&](auto tag) {
        using T = decltype(tag);
        EmbeddingTable table = make_embeddings(variant, data.vocab);
        Model<T> model = build_model<T>(variant.model, table);
        train(model, data.splits.train, data.splits.dev, data.vocab, variant.trainer);
        row.accuracy = evaluate_single(model, *eval_split, data.vocab).accuracy;
      });
    }
  };

  size_t jobs = std::max<size_t>(1, run.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (size_t i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << std::left;
  out << std::setw(6) << "Index" << std::setw(9) << "Routing" << std::setw(7) << "Leaky"
      << std::setw(8) << "Shared" << std::setw(11) << "OrphanCap" << std::setw(7) << "Amend"
      << std::setw(10) << "Loss" << std::setw(8) << "Squash" << "Accuracy\n";
  for (const auto& row : rows) {
    out << std::setw(6) << row.index << std::setw(9) << row.routing << std::setw(7)
        << (row.leaky ? "Yes" : "No") << std::setw(8) << (row.shared ? "Yes" : "No")
        << std::setw(11) << (row.orphan ? "Yes" : "No") << std::setw(7)
        << (row.amend ? "Yes" : "No") << std::setw(10) << row.loss << std::setw(8) << row.squash
        << std::fixed << std::setprecision(4) << row.accuracy << "\n";
  }
  return out.str();
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write ablation table: " + path);
  out << "index,routing,leaky,shared,orphan_cap,amend,loss,squash,accuracy\n";
  for (const auto& row : rows) {
    out << row.index << "," << row.routing << "," << (row.leaky ? "yes" : "no") << ","
        << (row.shared ? "yes" : "no") << "," << (row.orphan ? "yes" : "no") << ","
        << (row.amend ? "yes" : "no") << "," << row.loss << "," << row.squash << ","
        << std::setprecision(6) << row.accuracy << "\n";
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"capsule-routing text classifier"};
  app.require_subcommand(1);

  RunConfig run;
  std::string config_path;
  bool no_leaky = false, no_orphan = false, no_amendment = false, shared_weights = false;
  bool baseline_routing = false, train_embeddings = false, macro = false;
  std::string arch, loss, squash, precision, iters_grid, vary;
  long routing_iters = -1;
  double lr = -1.0, threshold = -1.0;
  long long batch_size = -1, epochs = -1, max_len = -1, min_count = -1, jobs = -1;
  long long embed_dim = -1, conv_filters = -1, primary_channels = -1, capsule_dim = -1;
  long long conv_caps_window = -1, conv_caps_filters = -1;
  long long seed = -1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value configuration file");
    cmd->add_option("--data", run.data_dir, "dataset directory with train/dev/test.tsv");
    cmd->add_option("--embeddings", run.embeddings_path, "word2vec text-format vectors");
    cmd->add_option("--checkpoint", run.checkpoint_path, "checkpoint path");
    cmd->add_option("--out", run.out_dir, "output directory");
    cmd->add_option("--seed", seed, "run seed (fallback: CAPSTEXT_SEED)");
    cmd->add_option("--arch", arch, "capsule-a | capsule-b | shortcut");
    cmd->add_option("--routing-iters", routing_iters, "routing iterations");
    cmd->add_flag("--no-leaky", no_leaky, "disable leaky softmax");
    cmd->add_flag("--no-orphan", no_orphan, "disable the orphan category");
    cmd->add_flag("--no-amendment", no_amendment, "disable coefficient amendment");
    cmd->add_flag("--shared-weights", shared_weights, "share child-parent transforms");
    cmd->add_flag("--baseline-routing", baseline_routing, "plain softmax, no amendment");
    cmd->add_option("--loss", loss, "margin | spread | cross_entropy");
    cmd->add_option("--squash", squash, "ratio | exp | tanh | none");
    cmd->add_option("--max-len", max_len, "encoded sentence length");
    cmd->add_option("--threshold", threshold, "multi-label decision threshold");
    cmd->add_option("--min-count", min_count, "vocabulary frequency threshold");
    cmd->add_option("--precision", precision, "f32 | f64");
    cmd->add_option("--lr", lr, "learning rate");
    cmd->add_option("--batch-size", batch_size, "mini-batch size");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_flag("--train-embeddings", train_embeddings, "fine-tune the embedding table");
    cmd->add_option("--embed-dim", embed_dim, "embedding size");
    cmd->add_option("--conv-filters", conv_filters, "n-gram conv filter count");
    cmd->add_option("--primary-channels", primary_channels, "primary capsule channels");
    cmd->add_option("--capsule-dim", capsule_dim, "capsule dimensionality");
    cmd->add_option("--conv-caps-window", conv_caps_window, "capsule conv window");
    cmd->add_option("--conv-caps-filters", conv_caps_filters, "capsule conv filters");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  add_common(eval_cmd);
  eval_cmd->add_option("--split", run.split, "train | dev | test");
  eval_cmd->add_option("--mode", run.mode, "single | multi");
  eval_cmd->add_flag("--macro", macro, "also report macro-averaged metrics");

  CLI::App* predict_cmd = app.add_subcommand("predict", "label raw text lines");
  add_common(predict_cmd);
  predict_cmd->add_option("--input", run.input_path, "input text file ('-' for stdin)");
  predict_cmd->add_option("--mode", run.mode, "single | multi");

  CLI::App* export_cmd =
      app.add_subcommand("export-strengths", "write n-gram connection strengths as JSON lines");
  add_common(export_cmd);
  export_cmd->add_option("--split", run.split, "train | dev | test");
  export_cmd->add_option("--output", run.input_path, "output .jsonl path");

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "run the component ablation grid");
  add_common(ablate_cmd);
  ablate_cmd->add_option("--iters-grid", iters_grid, "comma list of routing iterations");
  ablate_cmd->add_option("--vary", vary, "comma list of toggles: leaky,orphan,amend,shared");
  ablate_cmd->add_option("--jobs", jobs, "parallel ablation workers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();

    if (!config_path.empty()) apply_kv_settings(run, parse_kv_file(config_path), config_path);

    // Flags override file values.
    if (!arch.empty()) run.model.arch = arch_from_string(arch);
    if (routing_iters >= 0) run.model.routing.iterations = static_cast<int>(routing_iters);
    if (no_leaky) run.model.routing.leaky = false;
    if (no_orphan) run.model.orphan = false;
    if (no_amendment) run.model.routing.amend = false;
    if (shared_weights) run.model.shared_weights = true;
    if (baseline_routing) run.model.routing.baseline_mode = true;
    if (train_embeddings) run.model.train_embeddings = true;
    if (!loss.empty()) run.model.loss = loss_from_string(loss);
    if (!squash.empty()) run.model.squash = squash_from_string(squash);
    if (max_len >= 0) run.model.max_len = static_cast<size_t>(max_len);
    if (threshold >= 0.0) run.model.threshold = threshold;
    if (min_count >= 0) run.min_count = static_cast<size_t>(min_count);
    if (!precision.empty()) run.trainer.precision = precision_from_string(precision);
    if (lr >= 0.0) run.trainer.learning_rate = lr;
    if (batch_size >= 0) run.trainer.batch_size = static_cast<size_t>(batch_size);
    if (epochs >= 0) run.trainer.epochs = static_cast<size_t>(epochs);
    if (embed_dim >= 0) run.model.embed_dim = static_cast<size_t>(embed_dim);
    if (conv_filters >= 0) run.model.conv_filters = static_cast<size_t>(conv_filters);
    if (primary_channels >= 0) run.model.primary_channels = static_cast<size_t>(primary_channels);
    if (capsule_dim >= 0) run.model.capsule_dim = static_cast<size_t>(capsule_dim);
    if (conv_caps_window >= 0) run.model.conv_caps_window = static_cast<size_t>(conv_caps_window);
    if (conv_caps_filters >= 0) run.model.conv_caps_filters = static_cast<size_t>(conv_caps_filters);
    if (jobs >= 0) run.jobs = static_cast<size_t>(jobs);
    if (macro) run.include_macro = true;
    if (seed >= 0) {
      run.model.seed = static_cast<uint64_t>(seed);
      run.trainer.seed = static_cast<uint64_t>(seed);
    } else if (const char* env = std::getenv("CAPSTEXT_SEED")) {
      run.model.seed = std::strtoull(env, nullptr, 10);
      run.trainer.seed = run.model.seed;
    }
    if (!iters_grid.empty()) {
      run.ablate_iterations.clear();
      for (const auto& item : split_csv(iters_grid)) run.ablate_iterations.push_back(std::stoi(item));
    }
    if (!vary.empty()) run.ablate_vary = split_csv(vary);

    if (cmd == train_cmd) return cmd_train(std::move(run));
    if (cmd == eval_cmd) return cmd_eval(std::move(run));
    if (cmd == predict_cmd) return cmd_predict(std::move(run));
    if (cmd == export_cmd) return cmd_export_strengths(std::move(run));
    if (cmd == ablate_cmd) return cmd_ablate(std::move(run));
    throw ConfigError("unknown command");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace capstext
