#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "secovarc/encoder.hpp"
#include "secovarc/nd.hpp"
#include "secovarc/rng.hpp"
#include "secovarc/vocab.hpp"

namespace secovarc {

inline constexpr std::size_t kDefaultFeatureDim = 300;

// Token ids of one sentence; entries past valid_len are padding.
struct SentenceView {
  std::span<const TokenId> ids;
  std::size_t valid_len;

  SentenceView(std::span<const TokenId> ids_in)  // NOLINT(google-explicit-constructor)
      : ids(ids_in), valid_len(ids_in.size()) {}
  SentenceView(const std::vector<TokenId>& ids_in)  // NOLINT(google-explicit-constructor)
      : SentenceView(std::span<const TokenId>(ids_in)) {}
  SentenceView(std::span<const TokenId> ids_in, std::size_t len)
      : ids(ids_in), valid_len(len) {}
};

// tanh(W s + b) with W [out x in].
struct Dense {
  nd::Tensor weight;
  nd::Tensor bias;

  static Dense init(std::size_t in, std::size_t out, Rng& rng);
  nd::Tensor apply_tanh(nd::Tape& tape, const nd::Tensor& s) const;
};

// Three role-specific projections; they share no parameters.
struct Localizer {
  Dense claim;
  Dense reason;
  Dense warrant;
};

struct LocalizedReps {
  nd::Tensor claim;
  nd::Tensor reason;
  nd::Tensor warrant;
};

struct HeuristicFeatures {
  nd::Tensor residual;  // |v_w - v_r - v_c|
  nd::Tensor product;   // v_w * v_r * v_c
};

LocalizedReps localize(nd::Tape& tape, const Localizer& loc,
                       const nd::Tensor& s_claim, const nd::Tensor& s_reason,
                       const nd::Tensor& s_warrant);

HeuristicFeatures heuristic_features(nd::Tape& tape, const nd::Tensor& v_claim,
                                     const nd::Tensor& v_reason,
                                     const nd::Tensor& v_warrant);

// Logistic regression over the joined features.
struct OutputHead {
  nd::Tensor weight;  // [1 x width]
  nd::Tensor bias;    // [1]
  bool heuristics = true;
};

struct ModelConfig {
  std::size_t feature_dim = kDefaultFeatureDim;
  EncoderMode mode = EncoderMode::kBilstmMax;
  bool heuristics = true;
  double dropout_p = 0.1;
};

// Embedding lookup, a shared sentence encoder, role localization and the
// heuristic-feature scorer. A const model is safe to score from several
// threads in eval mode.
class SecovarcModel {
 public:
  // `encoder` must be present unless mode is kBowMean. Localizer and head
  // weights are drawn from uniform(-0.005, 0.005) with zero biases.
  SecovarcModel(EmbeddingMatrix embeddings, std::optional<EncoderWeights> encoder,
                const ModelConfig& config, Rng& init_rng);
  SecovarcModel(EmbeddingMatrix embeddings, std::optional<EncoderWeights> encoder,
                Localizer localizer, OutputHead head, const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const EmbeddingMatrix& embeddings() const { return embeddings_; }
  const std::optional<EncoderWeights>& encoder() const { return encoder_; }
  const Localizer& localizer() const { return localizer_; }
  const OutputHead& head() const { return head_; }
  std::size_t sentence_dim() const;
  std::size_t feature_width() const;

  // Sentence representation before dropout.
  nd::Tensor encode_sentence(nd::Tape& tape, SentenceView sentence) const;

  // Pre-sigmoid score from three sentence representations. `rng` drives
  // dropout and is required in train mode.
  nd::Tensor logit_from_reps(nd::Tape& tape, const nd::Tensor& s_claim,
                             const nd::Tensor& s_reason,
                             const nd::Tensor& s_warrant, nd::Mode mode,
                             Rng* rng) const;

  nd::Tensor logit(nd::Tape& tape, SentenceView claim, SentenceView reason,
                   SentenceView warrant, nd::Mode mode, Rng* rng) const;

  // Plausibility in (0, 1).
  nd::Tensor score(nd::Tape& tape, SentenceView claim, SentenceView reason,
                   SentenceView warrant, nd::Mode mode, Rng* rng) const;
  double score(SentenceView claim, SentenceView reason,
               SentenceView warrant) const;

  // Eval-mode logits of both candidate warrants; claim and reason are
  // encoded once.
  std::pair<double, double> pair_logits(SentenceView claim, SentenceView reason,
                                        SentenceView warrant0,
                                        SentenceView warrant1) const;

  std::vector<nd::Tensor> parameters() const;
  void zero_pad_grad() { embeddings_.zero_pad_grad(); }
  SecovarcModel clone() const;

 private:
  EmbeddingMatrix embeddings_;
  std::optional<EncoderWeights> encoder_;
  Localizer localizer_;
  OutputHead head_;
  ModelConfig config_;
};

// 0 when warrant 0 scores at least as high (ties go to warrant 0), else 1.
int decide(double score0, double score1);

// Eval-mode pairwise decision between two candidate warrants.
int predict(const SecovarcModel& model, SentenceView claim, SentenceView reason,
            SentenceView warrant0, SentenceView warrant1);

// Full checkpoint: embeddings, encoder (when present), localizer and head,
// plus the vocabulary and model configuration as header metadata.
void save_model(const std::filesystem::path& path, const SecovarcModel& model,
                const Vocabulary& vocab);
Bundle model_bundle(const SecovarcModel& model, const Vocabulary& vocab);

struct LoadedModel {
  SecovarcModel model;
  Vocabulary vocab;
};
LoadedModel model_from_bundle(const Bundle& bundle);
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace secovarc
