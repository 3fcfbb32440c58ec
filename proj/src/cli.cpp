#include "secovarc/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <vector>

#include "secovarc/data.hpp"

namespace secovarc {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(std::string_view key, std::string_view value) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw ConfigError("config key '" + std::string(key) + "': invalid value '" +
                      std::string(value) + "'");
  }
  return v;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw std::runtime_error("write failed: " + path.string());
}

const fs::path& require_path(const std::optional<fs::path>& p, std::string_view key) {
  if (!p) {
    throw ConfigError("config key '" + std::string(key) + "' is required");
  }
  if (!fs::exists(*p)) {
    throw std::runtime_error("config key '" + std::string(key) + "': no such file " +
                             p->string());
  }
  return *p;
}

fs::path output_dir(const CliConfig& c) {
  if (!c.out_dir) throw ConfigError("config key 'out' is required");
  fs::create_directories(*c.out_dir);
  return *c.out_dir;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// Inputs of a downstream run, shared by train and sweep.
struct Workload {
  Vocabulary vocab;
  std::vector<ScoredTriple> train;
  std::vector<EncodedInstance> dev;
  std::vector<EncodedInstance> test;
  std::optional<EncoderWeights> pretrained;
};

Workload load_workload(const CliConfig& c) {
  const auto train_rows = parse_arc_tsv(require_path(c.train_path, "train"));
  const auto dev_rows = parse_arc_tsv(require_path(c.dev_path, "dev"));
  Workload w;
  w.vocab = build_vocab(token_streams(train_rows));
  w.train = expand_instances(train_rows, w.vocab);
  w.dev = encode_instances(dev_rows, w.vocab);
  if (c.test_path) w.test = encode_instances(parse_arc_tsv(require_path(c.test_path, "test")), w.vocab);
  if (c.embeddings_path) require_path(c.embeddings_path, "embeddings");
  if (c.train.encoder == EncoderInit::kPretrained) {
    w.pretrained = read_encoder(require_path(c.encoder_bundle, "encoder_bundle"));
  }
  return w;
}

RunRecord run_seed(const CliConfig& c, const Workload& w) {
  Rng embed_rng(c.train.seed ^ 0x5DEECE66DULL);
  const EmbeddingMatrix e =
      initial_embeddings(c.train, w.vocab, c.embeddings_path, embed_rng);
  RunRecord r = run_experiment(c.train, e, w.pretrained ? &*w.pretrained : nullptr,
                               w.train, w.dev);
  if (!w.test.empty()) r.test_accuracy = evaluate(*r.best_model, w.test);
  return r;
}

// Loads the config file (if any) and applies --set overrides in order.
CliConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  CliConfig c = config_path.empty() ? CliConfig{} : parse_config_file(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    set_cli_field(c, trim(std::string_view(kv).substr(0, eq)),
                  trim(std::string_view(kv).substr(eq + 1)));
  }
  return c;
}

int cmd_train(const CliConfig& c, std::ostream& out) {
  const Workload w = load_workload(c);
  const fs::path dir = output_dir(c);
  const RunRecord r = run_seed(c, w);
  save_model(dir / "model.swb", *r.best_model, w.vocab);
  write_text(dir / "run.txt", format_run_record(r));
  write_text(dir / "config.txt", format_config(c));
  out << "best_epoch " << r.best_epoch << " dev_acc "
      << fmt("%.6f", r.best_epoch ? r.epochs[r.best_epoch - 1].dev_accuracy
                                  : evaluate(*r.best_model, w.dev))
      << "\n";
  return 0;
}

int cmd_sweep(const CliConfig& c, std::size_t seeds, std::ostream& out) {
  if (seeds == 0) throw ConfigError("--seeds must be at least 1");
  const Workload w = load_workload(c);
  const fs::path dir = output_dir(c);
  std::vector<double> dev_acc, test_acc;
  std::string report;
  for (std::size_t k = 0; k < seeds; ++k) {
    CliConfig run = c;
    run.train.seed = c.train.seed + k;
    const RunRecord r = run_seed(run, w);
    const double dev = evaluate(*r.best_model, w.dev);
    dev_acc.push_back(dev);
    report += "seed " + std::to_string(run.train.seed) + " best_epoch " +
              std::to_string(r.best_epoch) + " dev_acc " + fmt("%.6f", dev);
    if (r.test_accuracy) {
      test_acc.push_back(*r.test_accuracy);
      report += " test_acc " + fmt("%.6f", *r.test_accuracy);
    }
    report += "\n";
  }
  const std::string variant = c.train.variant();
  std::string table = "variant split mean std\n";
  table += format_summary_row(variant + " dev", aggregate_runs(dev_acc)) + "\n";
  if (!test_acc.empty()) {
    table += format_summary_row(variant + " test", aggregate_runs(test_acc)) + "\n";
  }
  write_text(dir / "sweep.txt", report + table);
  write_text(dir / "config.txt", format_config(c));
  out << table;
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             std::ostream& out) {
  if (!fs::exists(model_path)) throw std::runtime_error("no such file " + model_path);
  if (!fs::exists(data_path)) throw std::runtime_error("no such file " + data_path);
  const LoadedModel m = load_model(model_path);
  const auto rows = parse_arc_tsv(data_path);
  const double acc = evaluate(m.model, encode_instances(rows, m.vocab));
  out << "accuracy " << fmt("%.6f", acc) << " instances " << rows.size() << "\n";
  return 0;
}

int cmd_pretrain(const CliConfig& c, std::ostream& out) {
  const auto corpus = read_pretrain_corpus(require_path(c.pretrain_corpus, "pretrain_corpus"));
  if (corpus.empty()) throw std::runtime_error("empty pretraining corpus");
  const fs::path dir = output_dir(c);
  std::vector<std::vector<std::string>> streams;
  streams.reserve(corpus.size());
  for (const auto& s : corpus) streams.push_back(s.tokens);
  const Vocabulary vocab = build_vocab(streams);
  Rng embed_rng(c.train.seed ^ 0x5DEECE66DULL);
  const EmbeddingMatrix e =
      initial_embeddings(c.train, vocab, c.embeddings_path, embed_rng);

  PretrainConfig pc;
  pc.epochs = c.pretrain_epochs;
  pc.batch_size = c.train.batch_size;
  pc.learning_rate = c.train.learning_rate;
  pc.beta1 = c.train.beta1;
  pc.beta2 = c.train.beta2;
  pc.epsilon = c.train.epsilon;
  pc.l2_weight = c.train.l2_weight;
  pc.hidden_dim = c.train.hidden_dim;
  pc.seed = c.train.seed;
  const auto encoded = encode_corpus(corpus, vocab);
  const PretrainResult r = pretrain_encoder(encoded, e, pc);
  write_encoder(dir / "encoder.swb", r.encoder);

  std::string report;
  for (std::size_t k = 0; k < r.epoch_loss.size(); ++k) {
    report += "epoch " + std::to_string(k + 1) + " loss " + fmt("%.6f", r.epoch_loss[k]) + "\n";
  }
  const double acc = token_accuracy(r, e, encoded);
  report += "token_acc " + fmt("%.6f", acc) + "\n";
  write_text(dir / "pretrain_run.txt", report);
  out << "token_acc " << fmt("%.6f", acc) << "\n";
  return 0;
}

struct SynthOptions {
  std::size_t n = 2400;
  std::size_t vocab = 60;
  std::size_t pretrain_n = 2000;
  std::size_t dim = kDefaultWordDim;
  double stddev = 0.5;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_gen_synth(const SynthOptions& o, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("--out is required");
  // 10:1:1 split.
  const std::size_t n_dev = o.n / 12;
  const std::size_t n_test = o.n / 12;
  const std::size_t n_train = o.n - n_dev - n_test;
  if (n_train == 0) throw ConfigError("--n is too small to split");
  Rng root(o.seed);
  Rng arc_rng = root.fork();
  Rng corpus_rng = root.fork();
  Rng vector_rng = root.fork();
  const auto all = gen_synthetic_arc(o.n, o.vocab, arc_rng);
  const auto corpus = gen_pretrain_corpus(o.pretrain_n, o.vocab, corpus_rng);
  const nd::Tensor vectors = gen_synthetic_vectors(o.vocab, o.dim, o.stddev, vector_rng);

  const fs::path dir(o.out);
  fs::create_directories(dir);
  const std::span<const ArcInstance> span(all);
  write_arc_tsv(dir / "train.tsv", span.subspan(0, n_train));
  write_arc_tsv(dir / "dev.tsv", span.subspan(n_train, n_dev));
  write_arc_tsv(dir / "test.tsv", span.subspan(n_train + n_dev, n_test));
  write_pretrain_corpus(dir / "pretrain.txt", corpus);
  write_embeddings(dir / "embeddings.txt", synthetic_vocabulary(o.vocab), vectors);
  std::ostringstream meta;
  meta << "split 10:1:1\n"
       << "train " << n_train << "\ndev " << n_dev << "\ntest " << n_test << "\n"
       << "vocab " << o.vocab << "\npretrain " << o.pretrain_n << "\n"
       << "dim " << o.dim << "\nstddev " << fmt("%.17g", o.stddev) << "\n"
       << "seed " << o.seed << "\n";
  write_text(dir / "meta.txt", meta.str());
  out << "train " << n_train << " dev " << n_dev << " test " << n_test << "\n";
  return 0;
}

}  // namespace

void set_cli_field(CliConfig& c, std::string_view key, std::string_view value) {
  auto path = [&]() -> fs::path {
    if (value.empty()) {
      throw ConfigError("config key '" + std::string(key) + "': empty path");
    }
    return fs::path(std::string(value));
  };
  if (key == "train") c.train_path = path();
  else if (key == "dev") c.dev_path = path();
  else if (key == "test") c.test_path = path();
  else if (key == "embeddings") c.embeddings_path = path();
  else if (key == "encoder_bundle") c.encoder_bundle = path();
  else if (key == "out") c.out_dir = path();
  else if (key == "pretrain_corpus") c.pretrain_corpus = path();
  else if (key == "pretrain_epochs") c.pretrain_epochs = parse_count(key, value);
  else {
    try {
      set_config_field(c.train, key, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
}

CliConfig parse_config_text(std::string_view text, const std::string& source) {
  CliConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) +
                        ": expected key=value, got '" + std::string(line) + "'");
    }
    try {
      set_cli_field(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

CliConfig parse_config_file(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("no such config file " + path.string());
  return parse_config_text(read_text(path), path.string());
}

std::string format_config(const CliConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_fields(c.train)) out += k + "=" + v + "\n";
  out += "pretrain_epochs=" + std::to_string(c.pretrain_epochs) + "\n";
  auto put = [&](const char* key, const std::optional<fs::path>& p) {
    if (p) out += std::string(key) + "=" + p->string() + "\n";
  };
  put("train", c.train_path);
  put("dev", c.dev_path);
  put("test", c.test_path);
  put("embeddings", c.embeddings_path);
  put("encoder_bundle", c.encoder_bundle);
  put("out", c.out_dir);
  put("pretrain_corpus", c.pretrain_corpus);
  return out;
}

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Argument reasoning with transferred sentence encoders", "secovarc"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir, train_tsv, dev_tsv, test_tsv, embeddings, encoder_bundle;
  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value experiment file");
    sub->add_option("--set", overrides, "override one key (key=value), repeatable");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--embeddings", embeddings, "word-vector text file");
  };

  auto add_data_options = [&](CLI::App* sub) {
    add_run_options(sub);
    sub->add_option("--train", train_tsv, "training TSV");
    sub->add_option("--dev", dev_tsv, "development TSV");
    sub->add_option("--test", test_tsv, "test TSV");
    sub->add_option("--encoder-bundle", encoder_bundle, "pretrained encoder bundle");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "fit one model, write model.swb and run.txt");
  add_data_options(train_cmd);

  std::size_t seeds = 20;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train K seeds, write sweep.txt");
  add_data_options(sweep_cmd);
  sweep_cmd->add_option("--seeds", seeds, "number of seeds");

  std::string model_path, data_path;
  CLI::App* eval_cmd = app.add_subcommand("eval", "accuracy of a checkpoint on a TSV");
  eval_cmd->add_option("--model", model_path, "model bundle")->required();
  eval_cmd->add_option("--data", data_path, "task TSV")->required();

  std::string corpus;
  CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "pretrain the encoder, write encoder.swb");
  add_run_options(pretrain_cmd);
  pretrain_cmd->add_option("--corpus", corpus, "duplicate-detection corpus");

  SynthOptions synth;
  CLI::App* synth_cmd = app.add_subcommand("gen-synth", "write a synthetic task corpus");
  synth_cmd->add_option("--n", synth.n, "instances before the 10:1:1 split");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--vocab", synth.vocab, "vocabulary size");
  synth_cmd->add_option("--pretrain-n", synth.pretrain_n, "pretraining sequences");
  synth_cmd->add_option("--dim", synth.dim, "word-vector dimension");
  synth_cmd->add_option("--stddev", synth.stddev, "word-vector standard deviation");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (eval_cmd->parsed()) return cmd_eval(model_path, data_path, out);
    if (synth_cmd->parsed()) return cmd_gen_synth(synth, out);

    CliConfig c = resolve_config(config_path, overrides);
    auto flag = [&](const std::string& v, std::string_view key) {
      if (!v.empty()) set_cli_field(c, key, v);
    };
    flag(out_dir, "out");
    flag(embeddings, "embeddings");
    flag(train_tsv, "train");
    flag(dev_tsv, "dev");
    flag(test_tsv, "test");
    flag(encoder_bundle, "encoder_bundle");
    flag(corpus, "pretrain_corpus");

    if (train_cmd->parsed()) return cmd_train(c, out);
    if (sweep_cmd->parsed()) return cmd_sweep(c, seeds, out);
    if (pretrain_cmd->parsed()) return cmd_pretrain(c, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "error: no subcommand\n";
  return 1;
}

}  // namespace secovarc
