#include "secovarc/model.hpp"

#include <cstdio>
#include <stdexcept>

namespace secovarc {

Dense Dense::init(std::size_t in, std::size_t out, Rng& rng) {
  return {nd::Tensor::uniform({out, in}, -kInitRange, kInitRange, rng, true),
          nd::Tensor::zeros({out}, true)};
}

nd::Tensor Dense::apply_tanh(nd::Tape& tape, const nd::Tensor& s) const {
  return nd::tanh(tape, nd::linear(tape, s, weight, bias));
}

LocalizedReps localize(nd::Tape& tape, const Localizer& loc,
                       const nd::Tensor& s_claim, const nd::Tensor& s_reason,
                       const nd::Tensor& s_warrant) {
  return {loc.claim.apply_tanh(tape, s_claim),
          loc.reason.apply_tanh(tape, s_reason),
          loc.warrant.apply_tanh(tape, s_warrant)};
}

HeuristicFeatures heuristic_features(nd::Tape& tape, const nd::Tensor& v_claim,
                                     const nd::Tensor& v_reason,
                                     const nd::Tensor& v_warrant) {
  auto residual =
      nd::abs(tape, nd::sub(tape, nd::sub(tape, v_warrant, v_reason), v_claim));
  auto product =
      nd::hadamard(tape, nd::hadamard(tape, v_warrant, v_reason), v_claim);
  return {residual, product};
}

namespace {

OutputHead init_head(std::size_t width, bool heuristics, Rng& rng) {
  return {nd::Tensor::uniform({1, width}, -kInitRange, kInitRange, rng, true),
          nd::Tensor::zeros({1}, true), heuristics};
}

std::size_t width_for(const ModelConfig& c) {
  return (c.heuristics ? 5 : 3) * c.feature_dim;
}

std::size_t sentence_dim_for(const EmbeddingMatrix& e,
                             const std::optional<EncoderWeights>& enc,
                             EncoderMode mode) {
  return mode == EncoderMode::kBowMean ? e.dim() : enc->output_dim();
}

void check_encoder(const EmbeddingMatrix& e,
                   const std::optional<EncoderWeights>& enc, EncoderMode mode) {
  if (mode == EncoderMode::kBowMean) return;
  if (!enc) {
    throw std::invalid_argument(std::string("encoder mode ") +
                                std::string(to_string(mode)) +
                                " requires encoder weights");
  }
  if (enc->input_dim() != e.dim()) {
    throw nd::ShapeError("encoder input width " +
                         std::to_string(enc->input_dim()) +
                         " does not match word dimension " +
                         std::to_string(e.dim()));
  }
}

}  // namespace

SecovarcModel::SecovarcModel(EmbeddingMatrix embeddings,
                             std::optional<EncoderWeights> encoder,
                             const ModelConfig& config, Rng& init_rng)
    : embeddings_(std::move(embeddings)),
      encoder_(std::move(encoder)),
      config_(config) {
  check_encoder(embeddings_, encoder_, config_.mode);
  if (config_.mode == EncoderMode::kBowMean) encoder_.reset();
  const std::size_t in = sentence_dim();
  localizer_.claim = Dense::init(in, config_.feature_dim, init_rng);
  localizer_.reason = Dense::init(in, config_.feature_dim, init_rng);
  localizer_.warrant = Dense::init(in, config_.feature_dim, init_rng);
  head_ = init_head(width_for(config_), config_.heuristics, init_rng);
}

SecovarcModel::SecovarcModel(EmbeddingMatrix embeddings,
                             std::optional<EncoderWeights> encoder,
                             Localizer localizer, OutputHead head,
                             const ModelConfig& config)
    : embeddings_(std::move(embeddings)),
      encoder_(std::move(encoder)),
      localizer_(std::move(localizer)),
      head_(std::move(head)),
      config_(config) {
  check_encoder(embeddings_, encoder_, config_.mode);
  if (config_.mode == EncoderMode::kBowMean) encoder_.reset();
  head_.heuristics = config_.heuristics;
  const std::size_t in = sentence_dim();
  for (const Dense* d : {&localizer_.claim, &localizer_.reason, &localizer_.warrant}) {
    if (d->weight.shape() != nd::Shape{config_.feature_dim, in} ||
        d->bias.shape() != nd::Shape{config_.feature_dim}) {
      throw nd::ShapeError("localizer weight " + nd::shape_str(d->weight.shape()) +
                           " does not map " + std::to_string(in) + " to " +
                           std::to_string(config_.feature_dim));
    }
  }
  if (head_.weight.shape() != nd::Shape{1, width_for(config_)} ||
      head_.bias.size() != 1) {
    throw nd::ShapeError("output head " + nd::shape_str(head_.weight.shape()) +
                         " does not match feature width " +
                         std::to_string(width_for(config_)));
  }
}

std::size_t SecovarcModel::sentence_dim() const {
  return sentence_dim_for(embeddings_, encoder_, config_.mode);
}

std::size_t SecovarcModel::feature_width() const { return width_for(config_); }

nd::Tensor SecovarcModel::encode_sentence(nd::Tape& tape,
                                          SentenceView sentence) const {
  if (sentence.valid_len == 0) {
    throw std::invalid_argument("cannot score an empty sentence");
  }
  const nd::Tensor x = embed(tape, sentence.ids, embeddings_);
  const EncoderWeights* w = encoder_ ? &*encoder_ : nullptr;
  return encode(tape, x, sentence.valid_len, config_.mode, w).s;
}

nd::Tensor SecovarcModel::logit_from_reps(nd::Tape& tape,
                                          const nd::Tensor& s_claim,
                                          const nd::Tensor& s_reason,
                                          const nd::Tensor& s_warrant,
                                          nd::Mode mode, Rng* rng) const {
  if (mode == nd::Mode::kTrain && rng == nullptr && config_.dropout_p > 0) {
    throw std::invalid_argument("train-mode scoring needs a dropout stream");
  }
  Rng unused(0);
  Rng& r = rng ? *rng : unused;
  const double p = config_.dropout_p;
  auto sc = nd::dropout(tape, s_claim, p, mode, r);
  auto sr = nd::dropout(tape, s_reason, p, mode, r);
  auto sw = nd::dropout(tape, s_warrant, p, mode, r);
  const LocalizedReps v = localize(tape, localizer_, sc, sr, sw);
  nd::Tensor features;
  if (config_.heuristics) {
    const HeuristicFeatures h = heuristic_features(tape, v.claim, v.reason, v.warrant);
    features = nd::concat(tape, {v.claim, v.reason, v.warrant, h.residual, h.product});
  } else {
    features = nd::concat(tape, {v.claim, v.reason, v.warrant});
  }
  features = nd::dropout(tape, features, p, mode, r);
  return nd::linear(tape, features, head_.weight, head_.bias);
}

nd::Tensor SecovarcModel::logit(nd::Tape& tape, SentenceView claim,
                                SentenceView reason, SentenceView warrant,
                                nd::Mode mode, Rng* rng) const {
  auto sc = encode_sentence(tape, claim);
  auto sr = encode_sentence(tape, reason);
  auto sw = encode_sentence(tape, warrant);
  return logit_from_reps(tape, sc, sr, sw, mode, rng);
}

nd::Tensor SecovarcModel::score(nd::Tape& tape, SentenceView claim,
                                SentenceView reason, SentenceView warrant,
                                nd::Mode mode, Rng* rng) const {
  return nd::sigmoid(tape, logit(tape, claim, reason, warrant, mode, rng));
}

double SecovarcModel::score(SentenceView claim, SentenceView reason,
                            SentenceView warrant) const {
  nd::Tape tape(false);
  return score(tape, claim, reason, warrant, nd::Mode::kEval, nullptr).item();
}

std::pair<double, double> SecovarcModel::pair_logits(SentenceView claim,
                                                     SentenceView reason,
                                                     SentenceView warrant0,
                                                     SentenceView warrant1) const {
  nd::Tape tape(false);
  auto sc = encode_sentence(tape, claim);
  auto sr = encode_sentence(tape, reason);
  auto l0 = logit_from_reps(tape, sc, sr, encode_sentence(tape, warrant0),
                            nd::Mode::kEval, nullptr);
  auto l1 = logit_from_reps(tape, sc, sr, encode_sentence(tape, warrant1),
                            nd::Mode::kEval, nullptr);
  return {l0.item(), l1.item()};
}

std::vector<nd::Tensor> SecovarcModel::parameters() const {
  std::vector<nd::Tensor> out{embeddings_.table};
  if (encoder_) {
    for (auto& p : encoder_->parameters()) out.push_back(p);
  }
  for (const Dense* d : {&localizer_.claim, &localizer_.reason, &localizer_.warrant}) {
    out.push_back(d->weight);
    out.push_back(d->bias);
  }
  out.push_back(head_.weight);
  out.push_back(head_.bias);
  return out;
}

SecovarcModel SecovarcModel::clone() const {
  EmbeddingMatrix e{embeddings_.table.clone(), embeddings_.coverage};
  std::optional<EncoderWeights> enc;
  if (encoder_) enc = encoder_->clone();
  auto copy_dense = [](const Dense& d) { return Dense{d.weight.clone(), d.bias.clone()}; };
  Localizer loc{copy_dense(localizer_.claim), copy_dense(localizer_.reason),
                copy_dense(localizer_.warrant)};
  OutputHead head{head_.weight.clone(), head_.bias.clone(), head_.heuristics};
  return SecovarcModel(std::move(e), std::move(enc), std::move(loc),
                       std::move(head), config_);
}

int decide(double score0, double score1) { return score1 > score0 ? 1 : 0; }

int predict(const SecovarcModel& model, SentenceView claim, SentenceView reason,
            SentenceView warrant0, SentenceView warrant1) {
  // sigmoid is strictly increasing, so logits order the warrants exactly as
  // scores do without saturating to equal values near 0 or 1.
  const auto [l0, l1] = model.pair_logits(claim, reason, warrant0, warrant1);
  return decide(l0, l1);
}

Bundle model_bundle(const SecovarcModel& model, const Vocabulary& vocab) {
  const ModelConfig& c = model.config();
  Bundle b;
  b.set_meta("kind", "model");
  b.set_meta("mode", std::string(to_string(c.mode)));
  b.set_meta("heuristics", c.heuristics ? "1" : "0");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", c.dropout_p);
  b.set_meta("dropout_p", buf);
  b.set_meta("feature_dim", std::to_string(c.feature_dim));
  if (model.encoder()) {
    b.set_meta("provenance", std::string(to_string(model.encoder()->provenance)));
  }
  for (std::size_t id = 2; id < vocab.size(); ++id) {
    b.meta.emplace_back("token", vocab.token(static_cast<TokenId>(id)));
  }
  b.add("embedding", model.embeddings().table);
  if (model.encoder()) add_encoder_arrays(b, *model.encoder());
  const Localizer& loc = model.localizer();
  for (const auto& [name, d] : {std::pair<const char*, const Dense*>{"claim", &loc.claim},
                                {"reason", &loc.reason},
                                {"warrant", &loc.warrant}}) {
    b.add(std::string("localizer.") + name + ".weight", d->weight);
    b.add(std::string("localizer.") + name + ".bias", d->bias);
  }
  b.add("head.weight", model.head().weight);
  b.add("head.bias", model.head().bias);
  return b;
}

void save_model(const std::filesystem::path& path, const SecovarcModel& model,
                const Vocabulary& vocab) {
  write_bundle(path, model_bundle(model, vocab));
}

LoadedModel model_from_bundle(const Bundle& b) {
  if (b.require_meta("kind") != "model") {
    throw BundleError("bundle is not a full model checkpoint");
  }
  ModelConfig c;
  c.mode = parse_encoder_mode(b.require_meta("mode"));
  c.heuristics = b.require_meta("heuristics") == "1";
  c.dropout_p = std::stod(b.require_meta("dropout_p"));
  c.feature_dim = std::stoull(b.require_meta("feature_dim"));

  Vocabulary vocab;
  for (const auto& [k, v] : b.meta)
    if (k == "token") vocab.add(v);

  const NamedArray* emb = b.find("embedding");
  if (!emb || emb->shape.size() != 2) {
    throw BundleError("bundle is missing a [V x dim] 'embedding' array");
  }
  EmbeddingMatrix e{b.tensor("embedding", {vocab.size(), emb->shape[1]}), 0};

  std::optional<EncoderWeights> enc;
  if (c.mode != EncoderMode::kBowMean) enc = encoder_from_bundle(b);
  const std::size_t in = c.mode == EncoderMode::kBowMean ? e.dim() : enc->output_dim();
  auto dense = [&](const std::string& role) {
    return Dense{b.tensor("localizer." + role + ".weight", {c.feature_dim, in}),
                 b.tensor("localizer." + role + ".bias", {c.feature_dim})};
  };
  Localizer loc{dense("claim"), dense("reason"), dense("warrant")};
  OutputHead head{b.tensor("head.weight", {1, width_for(c)}),
                  b.tensor("head.bias", {1}), c.heuristics};
  return {SecovarcModel(std::move(e), std::move(enc), std::move(loc),
                        std::move(head), c),
          std::move(vocab)};
}

LoadedModel load_model(const std::filesystem::path& path) {
  return model_from_bundle(read_bundle(path));
}

}  // namespace secovarc
