#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "secovarc/data.hpp"
#include "secovarc/encoder.hpp"
#include "secovarc/model.hpp"
#include "secovarc/nd.hpp"
#include "secovarc/vocab.hpp"

namespace secovarc {

enum class EncoderInit { kScratch, kPretrained, kBow };
enum class Pooling { kMax, kLast };

std::string_view to_string(EncoderInit e);
std::string_view to_string(Pooling p);

// Every knob of one training run. Defaults are the published settings; the
// three dimensions may be shrunk for desk-scale experiments.
struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 10;
  double l2_weight = 1e-5;
  double dropout_p = 0.1;
  Pooling pooling = Pooling::kMax;
  bool heuristics = true;
  EncoderInit encoder = EncoderInit::kScratch;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t word_dim = kDefaultWordDim;
  std::size_t hidden_dim = kDefaultHiddenDim;
  std::size_t feature_dim = kDefaultFeatureDim;

  EncoderMode encoder_mode() const;
  ModelConfig model_config() const;
  // Short label such as "pretrained-max" or "bow".
  std::string variant() const;
};

// Sets one field from its textual key; throws std::invalid_argument naming the
// key for unknown keys or unparsable values.
void set_config_field(TrainConfig& config, std::string_view key,
                      std::string_view value);
// All fields as (key, value) pairs in a fixed order.
std::vector<std::pair<std::string, std::string>> config_fields(
    const TrainConfig& config);

struct AdamOptions {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;
};

// One bias-corrected Adam update of every tensor from its accumulated grad.
void adam_step(std::span<const nd::Tensor> params, AdamState& state,
               const AdamOptions& options);

// Mean cross-entropy over the batch plus l2_weight * sum of squared entries of
// every model parameter.
nd::Tensor batch_loss(nd::Tape& tape, const Batch& batch,
                      const SecovarcModel& model, double l2_weight,
                      nd::Mode mode, Rng* dropout_rng);

nd::Tensor l2_penalty(nd::Tape& tape, std::span<const nd::Tensor> params,
                      double l2_weight);

// Fraction of instances whose predicted warrant matches the label.
double evaluate(const SecovarcModel& model,
                std::span<const EncodedInstance> instances);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct RunRecord {
  TrainConfig config;
  std::vector<EpochStats> epochs;
  // 0 when no epoch ran and the initial weights were kept.
  std::size_t best_epoch = 0;
  std::optional<SecovarcModel> best_model;
  std::optional<double> test_accuracy;
};

// Initial embeddings for a run: file vectors where available, otherwise
// uniform(-0.005, 0.005).
EmbeddingMatrix initial_embeddings(const TrainConfig& config,
                                   const Vocabulary& vocab,
                                   const std::optional<std::filesystem::path>& vectors,
                                   Rng& rng);

// Builds the model a config describes. `pretrained` is required for
// EncoderInit::kPretrained and must match hidden_dim and word_dim.
SecovarcModel init_model(const TrainConfig& config, EmbeddingMatrix embeddings,
                         const EncoderWeights* pretrained, Rng& rng);

// Trains for up to max_epochs, keeping the epoch with the highest dev
// accuracy (earliest on ties).
RunRecord train(const TrainConfig& config, SecovarcModel model,
                std::span<const ScoredTriple> train_data,
                std::span<const EncodedInstance> dev_data);

// Seeds one run end to end: embeddings, model init, training. All randomness
// derives from config.seed.
RunRecord run_experiment(const TrainConfig& config, const EmbeddingMatrix& embeddings,
                         const EncoderWeights* pretrained,
                         std::span<const ScoredTriple> train_data,
                         std::span<const EncodedInstance> dev_data);

// "epoch <k> loss <x> dev_acc <x>" lines, then "best_epoch <k>" and
// "test_acc <x>" when present.
std::string format_run_record(const RunRecord& record);

struct RunSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) deviation; NaN for a single run
};

RunSummary aggregate_runs(std::span<const double> accuracies);

// "<variant> <mean> <std>" with three decimals, or "-" for a missing std.
std::string format_summary_row(std::string_view variant, const RunSummary& s);

struct PretrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l2_weight = 1e-5;
  std::size_t hidden_dim = kDefaultHiddenDim;
  std::uint64_t seed = 1;
};

struct EncodedSequence {
  std::vector<TokenId> ids;
  std::vector<double> labels;
};

std::vector<EncodedSequence> encode_corpus(std::span<const LabeledSequence> corpus,
                                           const Vocabulary& vocab);

struct PretrainResult {
  EncoderWeights encoder;
  // Temporary per-token classifier used only during pretraining.
  nd::Tensor head_weight;  // [1 x 2h]
  nd::Tensor head_bias;    // [1]
  std::vector<double> epoch_loss;
};

// Trains the encoder plus a per-token sigmoid head on duplicate detection over
// frozen word vectors.
PretrainResult pretrain_encoder(std::span<const EncodedSequence> corpus,
                                const EmbeddingMatrix& embeddings,
                                const PretrainConfig& config);

// Per-token accuracy of the pretraining head at threshold 0.5.
double token_accuracy(const PretrainResult& result,
                      const EmbeddingMatrix& embeddings,
                      std::span<const EncodedSequence> corpus);

}  // namespace secovarc
