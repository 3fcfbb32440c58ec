#include "secovarc/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace secovarc {

std::string_view to_string(EncoderInit e) {
  switch (e) {
    case EncoderInit::kScratch: return "scratch";
    case EncoderInit::kPretrained: return "pretrained";
    case EncoderInit::kBow: return "bow";
  }
  return "?";
}

std::string_view to_string(Pooling p) { return p == Pooling::kMax ? "max" : "last"; }

EncoderMode TrainConfig::encoder_mode() const {
  if (encoder == EncoderInit::kBow) return EncoderMode::kBowMean;
  return pooling == Pooling::kMax ? EncoderMode::kBilstmMax : EncoderMode::kBilstmLast;
}

ModelConfig TrainConfig::model_config() const {
  return {feature_dim, encoder_mode(), heuristics, dropout_p};
}

std::string TrainConfig::variant() const {
  std::string v = encoder == EncoderInit::kBow
                      ? "bow"
                      : std::string(to_string(encoder)) + "-" + std::string(to_string(pooling));
  if (!heuristics) v += "-noheur";
  return v;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw std::invalid_argument("config key '" + std::string(key) +
                              "': invalid value '" + std::string(value) + "'");
}

double parse_double(std::string_view key, std::string_view value) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size() || !std::isfinite(v)) {
    bad_value(key, value);
  }
  return v;
}

std::uint64_t parse_uint(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) bad_value(key, value);
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  bad_value(key, value);
}

}  // namespace

void set_config_field(TrainConfig& c, std::string_view key, std::string_view value) {
  if (key == "learning_rate") {
    c.learning_rate = parse_double(key, value);
  } else if (key == "batch_size") {
    c.batch_size = parse_uint(key, value);
    if (c.batch_size == 0) bad_value(key, value);
  } else if (key == "max_epochs") {
    c.max_epochs = parse_uint(key, value);
  } else if (key == "l2_weight") {
    c.l2_weight = parse_double(key, value);
  } else if (key == "dropout_p") {
    c.dropout_p = parse_double(key, value);
    if (c.dropout_p < 0 || c.dropout_p >= 1) bad_value(key, value);
  } else if (key == "pooling") {
    if (value == "max") c.pooling = Pooling::kMax;
    else if (value == "last") c.pooling = Pooling::kLast;
    else bad_value(key, value);
  } else if (key == "heuristics") {
    c.heuristics = parse_bool(key, value);
  } else if (key == "encoder") {
    if (value == "scratch") c.encoder = EncoderInit::kScratch;
    else if (value == "pretrained") c.encoder = EncoderInit::kPretrained;
    else if (value == "bow") c.encoder = EncoderInit::kBow;
    else bad_value(key, value);
  } else if (key == "seed") {
    c.seed = parse_uint(key, value);
  } else if (key == "beta1") {
    c.beta1 = parse_double(key, value);
  } else if (key == "beta2") {
    c.beta2 = parse_double(key, value);
  } else if (key == "epsilon") {
    c.epsilon = parse_double(key, value);
  } else if (key == "word_dim") {
    c.word_dim = parse_uint(key, value);
    if (c.word_dim == 0) bad_value(key, value);
  } else if (key == "hidden_dim") {
    c.hidden_dim = parse_uint(key, value);
    if (c.hidden_dim == 0) bad_value(key, value);
  } else if (key == "feature_dim") {
    c.feature_dim = parse_uint(key, value);
    if (c.feature_dim == 0) bad_value(key, value);
  } else {
    throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
  }
}

std::vector<std::pair<std::string, std::string>> config_fields(const TrainConfig& c) {
  return {
      {"learning_rate", fmt_double(c.learning_rate)},
      {"batch_size", std::to_string(c.batch_size)},
      {"max_epochs", std::to_string(c.max_epochs)},
      {"l2_weight", fmt_double(c.l2_weight)},
      {"dropout_p", fmt_double(c.dropout_p)},
      {"pooling", std::string(to_string(c.pooling))},
      {"heuristics", c.heuristics ? "1" : "0"},
      {"encoder", std::string(to_string(c.encoder))},
      {"seed", std::to_string(c.seed)},
      {"beta1", fmt_double(c.beta1)},
      {"beta2", fmt_double(c.beta2)},
      {"epsilon", fmt_double(c.epsilon)},
      {"word_dim", std::to_string(c.word_dim)},
      {"hidden_dim", std::to_string(c.hidden_dim)},
      {"feature_dim", std::to_string(c.feature_dim)},
  };
}

void adam_step(std::span<const nd::Tensor> params, AdamState& state,
               const AdamOptions& o) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw nd::ShapeError("adam_step: state tracks " +
                         std::to_string(state.first_moment.size()) +
                         " tensors, given " + std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    nd::Tensor p = params[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != p.size()) {
      throw nd::ShapeError("adam_step: moment size mismatch for tensor " +
                           std::to_string(k));
    }
    auto theta = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

nd::Tensor l2_penalty(nd::Tape& tape, std::span<const nd::Tensor> params,
                      double l2_weight) {
  nd::Tensor total = nd::Tensor::scalar(0.0);
  for (const auto& p : params) total = nd::add(tape, total, nd::squared_norm(tape, p));
  return nd::scale(tape, total, l2_weight);
}

nd::Tensor batch_loss(nd::Tape& tape, const Batch& batch,
                      const SecovarcModel& model, double l2_weight,
                      nd::Mode mode, Rng* dropout_rng) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  std::vector<nd::Tensor> probs;
  probs.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    probs.push_back(model.score(tape, batch.claim.view(i), batch.reason.view(i),
                                batch.warrant.view(i), mode, dropout_rng));
  }
  const nd::Tensor y = nd::concat(tape, probs);
  nd::Tensor loss = nd::binary_cross_entropy(tape, y, batch.targets);
  if (l2_weight != 0.0) {
    const auto params = model.parameters();
    loss = nd::add(tape, loss, l2_penalty(tape, params, l2_weight));
  }
  return loss;
}

double evaluate(const SecovarcModel& model,
                std::span<const EncodedInstance> instances) {
  if (instances.empty()) throw std::invalid_argument("evaluate on an empty set");
  std::size_t correct = 0;
  for (const auto& inst : instances) {
    if (predict(model, inst.claim, inst.reason, inst.warrant0, inst.warrant1) ==
        inst.label) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

EmbeddingMatrix initial_embeddings(const TrainConfig& config,
                                   const Vocabulary& vocab,
                                   const std::optional<std::filesystem::path>& vectors,
                                   Rng& rng) {
  if (vectors) return load_embeddings(*vectors, vocab, rng, config.word_dim);
  return random_embeddings(vocab, config.word_dim, rng);
}

SecovarcModel init_model(const TrainConfig& config, EmbeddingMatrix embeddings,
                         const EncoderWeights* pretrained, Rng& rng) {
  std::optional<EncoderWeights> enc;
  switch (config.encoder) {
    case EncoderInit::kScratch:
      enc = EncoderWeights::scratch(config.word_dim, config.hidden_dim, rng);
      break;
    case EncoderInit::kPretrained:
      if (!pretrained) {
        throw std::invalid_argument("encoder=pretrained needs an encoder bundle");
      }
      if (pretrained->hidden_dim() != config.hidden_dim ||
          pretrained->input_dim() != config.word_dim) {
        throw nd::ShapeError(
            "pretrained encoder is " + std::to_string(pretrained->input_dim()) +
            " -> " + std::to_string(pretrained->hidden_dim()) +
            " but the config asks for word_dim " + std::to_string(config.word_dim) +
            ", hidden_dim " + std::to_string(config.hidden_dim));
      }
      enc = pretrained->clone();
      break;
    case EncoderInit::kBow:
      break;
  }
  return SecovarcModel(std::move(embeddings), std::move(enc), config.model_config(), rng);
}

RunRecord train(const TrainConfig& config, SecovarcModel model,
                std::span<const ScoredTriple> train_data,
                std::span<const EncodedInstance> dev_data) {
  if (train_data.empty()) throw std::invalid_argument("empty training set");
  RunRecord record;
  record.config = config;
  Rng streams(config.seed);
  Rng shuffle_rng = streams.fork();
  Rng dropout_rng = streams.fork();
  const AdamOptions adam{config.learning_rate, config.beta1, config.beta2,
                         config.epsilon};
  AdamState state;
  const auto params = model.parameters();
  double best_acc = -1.0;
  record.best_model = model.clone();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto batches = make_batches(train_data, config.batch_size, shuffle_rng);
    double loss_sum = 0.0;
    for (const Batch& batch : batches) {
      for (auto p : params) p.zero_grad();
      nd::Tape tape;
      nd::Tensor loss = batch_loss(tape, batch, model, config.l2_weight,
                                   nd::Mode::kTrain, &dropout_rng);
      tape.backward(loss);
      model.zero_pad_grad();
      adam_step(params, state, adam);
      loss_sum += loss.item() * static_cast<double>(batch.size());
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(train_data.size()),
                     dev_data.empty() ? 0.0 : evaluate(model, dev_data)};
    record.epochs.push_back(stats);
    if (stats.dev_accuracy > best_acc) {
      best_acc = stats.dev_accuracy;
      record.best_epoch = epoch;
      record.best_model = model.clone();
    }
  }
  return record;
}

RunRecord run_experiment(const TrainConfig& config, const EmbeddingMatrix& embeddings,
                         const EncoderWeights* pretrained,
                         std::span<const ScoredTriple> train_data,
                         std::span<const EncodedInstance> dev_data) {
  Rng init_rng(config.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  EmbeddingMatrix e{embeddings.table.clone(), embeddings.coverage};
  e.table.set_requires_grad(true);
  SecovarcModel model = init_model(config, std::move(e), pretrained, init_rng);
  return train(config, std::move(model), train_data, dev_data);
}

std::string format_run_record(const RunRecord& r) {
  std::string out;
  char buf[128];
  for (const auto& e : r.epochs) {
    std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f dev_acc %.6f\n", e.epoch,
                  e.train_loss, e.dev_accuracy);
    out += buf;
  }
  out += "best_epoch " + std::to_string(r.best_epoch) + "\n";
  if (r.test_accuracy) {
    std::snprintf(buf, sizeof buf, "test_acc %.6f\n", *r.test_accuracy);
    out += buf;
  }
  return out;
}

RunSummary aggregate_runs(std::span<const double> accuracies) {
  if (accuracies.empty()) throw std::invalid_argument("aggregate_runs of no runs");
  const double n = static_cast<double>(accuracies.size());
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  const double mean = sum / n;
  if (accuracies.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  double sq = 0.0;
  for (double a : accuracies) sq += (a - mean) * (a - mean);
  return {mean, std::sqrt(sq / (n - 1.0))};
}

std::string format_summary_row(std::string_view variant, const RunSummary& s) {
  char buf[64];
  if (std::isnan(s.stddev)) {
    std::snprintf(buf, sizeof buf, " %.3f -", s.mean);
  } else {
    std::snprintf(buf, sizeof buf, " %.3f %.3f", s.mean, s.stddev);
  }
  return std::string(variant) + buf;
}

std::vector<EncodedSequence> encode_corpus(std::span<const LabeledSequence> corpus,
                                           const Vocabulary& vocab) {
  std::vector<EncodedSequence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) {
    out.push_back({vocab.encode(s.tokens),
                   std::vector<double>(s.labels.begin(), s.labels.end())});
  }
  return out;
}

namespace {

// Per-token probabilities [L] of the pretraining head over one sequence.
nd::Tensor token_probs(nd::Tape& tape, const EncoderWeights& enc,
                       const nd::Tensor& head_w, const nd::Tensor& head_b,
                       const nd::Tensor& table, std::span<const TokenId> ids) {
  const nd::Tensor x = nd::gather_rows(tape, table, ids);
  const nd::Tensor h = bilstm_forward(tape, x, ids.size(), enc);
  const nd::Tensor logits = nd::linear(tape, h, head_w, head_b);
  return nd::sigmoid(tape, nd::reshape(tape, logits, {ids.size()}));
}

}  // namespace

PretrainResult pretrain_encoder(std::span<const EncodedSequence> corpus,
                                const EmbeddingMatrix& embeddings,
                                const PretrainConfig& config) {
  if (corpus.empty()) throw std::invalid_argument("empty pretraining corpus");
  if (config.batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  Rng streams(config.seed);
  Rng init_rng = streams.fork();
  Rng shuffle_rng = streams.fork();

  PretrainResult result{
      EncoderWeights::scratch(embeddings.dim(), config.hidden_dim, init_rng),
      nd::Tensor::uniform({1, 2 * config.hidden_dim}, -kInitRange, kInitRange,
                          init_rng, true),
      nd::Tensor::zeros({1}, true),
      {}};
  // Word vectors stay fixed while the encoder learns on top of them.
  nd::Tensor table = embeddings.table.clone();
  table.set_requires_grad(false);

  auto params = result.encoder.parameters();
  params.push_back(result.head_weight);
  params.push_back(result.head_bias);
  const AdamOptions adam{config.learning_rate, config.beta1, config.beta2, config.epsilon};
  AdamState state;

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (auto p : params) p.zero_grad();
      nd::Tape tape;
      std::vector<nd::Tensor> probs;
      std::vector<double> targets;
      for (std::size_t k = start; k < end; ++k) {
        const auto& seq = corpus[order[k]];
        probs.push_back(token_probs(tape, result.encoder, result.head_weight,
                                    result.head_bias, table, seq.ids));
        targets.insert(targets.end(), seq.labels.begin(), seq.labels.end());
      }
      nd::Tensor loss =
          nd::binary_cross_entropy(tape, nd::concat(tape, probs), targets);
      if (config.l2_weight != 0.0) {
        loss = nd::add(tape, loss, l2_penalty(tape, params, config.l2_weight));
      }
      tape.backward(loss);
      adam_step(params, state, adam);
      loss_sum += loss.item();
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  result.encoder.provenance = Provenance::kPretrained;
  return result;
}

double token_accuracy(const PretrainResult& result,
                      const EmbeddingMatrix& embeddings,
                      std::span<const EncodedSequence> corpus) {
  std::size_t correct = 0, total = 0;
  for (const auto& seq : corpus) {
    nd::Tape tape(false);
    const nd::Tensor p = token_probs(tape, result.encoder, result.head_weight,
                                     result.head_bias, embeddings.table, seq.ids);
    for (std::size_t t = 0; t < seq.ids.size(); ++t) {
      const double predicted = p[t] > 0.5 ? 1.0 : 0.0;
      if (predicted == seq.labels[t]) ++correct;
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("token_accuracy on an empty corpus");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace secovarc
