#include "secovarc/encoder.hpp"

#include <stdexcept>

#include "secovarc/vocab.hpp"

namespace secovarc {

std::string_view to_string(Provenance p) {
  return p == Provenance::kPretrained ? "pretrained" : "scratch";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "scratch") return Provenance::kScratch;
  if (s == "pretrained") return Provenance::kPretrained;
  throw std::invalid_argument("unknown provenance '" + std::string(s) + "'");
}

std::string_view to_string(EncoderMode m) {
  switch (m) {
    case EncoderMode::kBilstmMax: return "bilstm-max";
    case EncoderMode::kBilstmLast: return "bilstm-last";
    case EncoderMode::kBowMean: return "bow-mean";
  }
  return "?";
}

EncoderMode parse_encoder_mode(std::string_view s) {
  if (s == "bilstm-max") return EncoderMode::kBilstmMax;
  if (s == "bilstm-last") return EncoderMode::kBilstmLast;
  if (s == "bow-mean") return EncoderMode::kBowMean;
  throw std::invalid_argument("unknown encoder mode '" + std::string(s) + "'");
}

namespace {

LstmDirectionWeights scratch_direction(std::size_t in, std::size_t h, Rng& rng) {
  return {nd::Tensor::uniform({4 * h, in}, -kInitRange, kInitRange, rng, true),
          nd::Tensor::uniform({4 * h, h}, -kInitRange, kInitRange, rng, true),
          nd::Tensor::zeros({4 * h}, true)};
}

LstmDirectionWeights clone_direction(const LstmDirectionWeights& d) {
  return {d.w_x.clone(), d.w_h.clone(), d.bias.clone()};
}

// Gate nonlinearities and state update given the pre-activation [4h].
LstmState lstm_cell(nd::Tape& tape, const nd::Tensor& pre,
                    const nd::Tensor& c_prev, std::size_t h) {
  auto i = nd::sigmoid(tape, nd::slice(tape, pre, 0, h));
  auto f = nd::sigmoid(tape, nd::slice(tape, pre, h, h));
  auto g = nd::tanh(tape, nd::slice(tape, pre, 2 * h, h));
  auto o = nd::sigmoid(tape, nd::slice(tape, pre, 3 * h, h));
  auto c = nd::add(tape, nd::hadamard(tape, f, c_prev), nd::hadamard(tape, i, g));
  auto out = nd::hadamard(tape, o, nd::tanh(tape, c));
  return {out, c};
}

// Hidden states of one direction over x [L x in], in time order.
std::vector<nd::Tensor> run_direction(nd::Tape& tape, const nd::Tensor& x,
                                      const LstmDirectionWeights& w,
                                      bool reverse) {
  const std::size_t len = x.shape()[0];
  const std::size_t h = w.hidden_dim();
  const nd::Tensor projected = nd::linear(tape, x, w.w_x, w.bias);
  std::vector<nd::Tensor> states(len);
  LstmState state{nd::Tensor::zeros({h}), nd::Tensor::zeros({h})};
  for (std::size_t k = 0; k < len; ++k) {
    const std::size_t t = reverse ? len - 1 - k : k;
    nd::Tensor pre = nd::row(tape, projected, t);
    pre = nd::add(tape, pre, nd::linear(tape, state.h, w.w_h, {}));
    state = lstm_cell(tape, pre, state.c, h);
    states[t] = state.h;
  }
  return states;
}

nd::Tensor run_layer(nd::Tape& tape, const nd::Tensor& x,
                     const LstmLayerWeights& w) {
  const auto fwd = run_direction(tape, x, w.forward, false);
  const auto bwd = run_direction(tape, x, w.backward, true);
  std::vector<nd::Tensor> rows;
  rows.reserve(fwd.size());
  for (std::size_t t = 0; t < fwd.size(); ++t) {
    rows.push_back(nd::concat(tape, {fwd[t], bwd[t]}));
  }
  return nd::stack_rows(tape, rows, rows.size());
}

}  // namespace

EncoderWeights EncoderWeights::scratch(std::size_t input_dim,
                                       std::size_t hidden_dim, Rng& rng) {
  EncoderWeights w;
  std::size_t in = input_dim;
  for (auto& layer : w.layers) {
    layer.forward = scratch_direction(in, hidden_dim, rng);
    layer.backward = scratch_direction(in, hidden_dim, rng);
    in = 2 * hidden_dim;
  }
  w.provenance = Provenance::kScratch;
  return w;
}

std::vector<nd::Tensor> EncoderWeights::parameters() const {
  std::vector<nd::Tensor> out;
  for (const auto& layer : layers) {
    for (const auto* d : {&layer.forward, &layer.backward}) {
      out.push_back(d->w_x);
      out.push_back(d->w_h);
      out.push_back(d->bias);
    }
  }
  return out;
}

EncoderWeights EncoderWeights::clone() const {
  EncoderWeights w;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    w.layers[i].forward = clone_direction(layers[i].forward);
    w.layers[i].backward = clone_direction(layers[i].backward);
  }
  w.provenance = provenance;
  w.format_version = format_version;
  return w;
}

LstmState lstm_step(nd::Tape& tape, const nd::Tensor& x_t,
                    const nd::Tensor& h_prev, const nd::Tensor& c_prev,
                    const LstmDirectionWeights& w) {
  const std::size_t h = w.hidden_dim();
  if (x_t.size() != w.input_dim() || h_prev.size() != h || c_prev.size() != h) {
    throw nd::ShapeError("lstm_step: input " + nd::shape_str(x_t.shape()) +
                         ", state " + nd::shape_str(h_prev.shape()) + "/" +
                         nd::shape_str(c_prev.shape()) + " against weights " +
                         nd::shape_str(w.w_x.shape()));
  }
  auto pre = nd::add(tape, nd::linear(tape, x_t, w.w_x, w.bias),
                     nd::linear(tape, h_prev, w.w_h, {}));
  return lstm_cell(tape, pre, c_prev, h);
}

nd::Tensor bilstm_forward(nd::Tape& tape, const nd::Tensor& x,
                          std::size_t valid_len, const EncoderWeights& w) {
  if (x.rank() != 2 || x.shape()[1] != w.input_dim()) {
    throw nd::ShapeError("bilstm_forward: input " + nd::shape_str(x.shape()) +
                         " does not match encoder input width " +
                         std::to_string(w.input_dim()));
  }
  const std::size_t n = x.shape()[0];
  if (valid_len == 0 || valid_len > n) {
    throw std::out_of_range("bilstm_forward: valid_len " +
                            std::to_string(valid_len) + " outside [1, " +
                            std::to_string(n) + "]");
  }
  nd::Tensor h = nd::head_rows(tape, x, valid_len);
  for (const auto& layer : w.layers) h = run_layer(tape, h, layer);
  if (valid_len == n) return h;
  std::vector<nd::Tensor> rows;
  rows.reserve(valid_len);
  for (std::size_t t = 0; t < valid_len; ++t) rows.push_back(nd::row(tape, h, t));
  return nd::stack_rows(tape, rows, n);
}

SentenceRep encode(nd::Tape& tape, const nd::Tensor& tokens,
                   std::size_t valid_len, EncoderMode mode,
                   const EncoderWeights* w) {
  if (mode == EncoderMode::kBowMean) {
    return {nd::masked_mean_pool(tape, tokens, valid_len), mode};
  }
  if (w == nullptr) {
    throw std::invalid_argument(std::string("encoder mode ") +
                                std::string(to_string(mode)) +
                                " requires encoder weights");
  }
  if (valid_len == 0 || valid_len > tokens.shape()[0]) {
    throw std::out_of_range("encode: valid_len " + std::to_string(valid_len) +
                            " outside [1, " +
                            std::to_string(tokens.shape()[0]) + "]");
  }
  // Pooling only reads valid rows, so the padded tail is never materialized.
  nd::Tensor states =
      bilstm_forward(tape, nd::head_rows(tape, tokens, valid_len), valid_len, *w);
  nd::Tensor s = mode == EncoderMode::kBilstmMax
                     ? nd::masked_max_pool(tape, states, valid_len)
                     : nd::last_pool(tape, states, valid_len);
  return {s, mode};
}

void add_encoder_arrays(Bundle& bundle, const EncoderWeights& w,
                        const std::string& prefix) {
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    for (const auto& [dir, d] :
         {std::pair<const char*, const LstmDirectionWeights*>{"fwd", &w.layers[l].forward},
          {"bwd", &w.layers[l].backward}}) {
      const std::string base = prefix + ".l" + std::to_string(l) + "." + dir + ".";
      bundle.add(base + "w_x", d->w_x);
      bundle.add(base + "w_h", d->w_h);
      bundle.add(base + "bias", d->bias);
    }
  }
}

EncoderWeights encoder_from_bundle(const Bundle& bundle,
                                   const std::string& prefix) {
  const NamedArray* first = bundle.find(prefix + ".l0.fwd.w_x");
  if (!first) throw BundleError("bundle is missing array '" + prefix + ".l0.fwd.w_x'");
  if (first->shape.size() != 2 || first->shape[0] % 4 != 0 || first->shape[0] == 0) {
    throw BundleError("shape mismatch for '" + prefix + ".l0.fwd.w_x': " +
                      nd::shape_str(first->shape) + " is not [4h x in]");
  }
  const std::size_t h = first->shape[0] / 4;
  std::size_t in = first->shape[1];
  EncoderWeights w;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    for (auto [dir, d] : {std::pair<const char*, LstmDirectionWeights*>{"fwd", &w.layers[l].forward},
                          {"bwd", &w.layers[l].backward}}) {
      const std::string base = prefix + ".l" + std::to_string(l) + "." + dir + ".";
      d->w_x = bundle.tensor(base + "w_x", {4 * h, in});
      d->w_h = bundle.tensor(base + "w_h", {4 * h, h});
      d->bias = bundle.tensor(base + "bias", {4 * h});
    }
    in = 2 * h;
  }
  if (auto p = bundle.find_meta("provenance")) w.provenance = parse_provenance(*p);
  return w;
}

void write_encoder(const std::filesystem::path& path, const EncoderWeights& w) {
  Bundle bundle;
  bundle.set_meta("kind", "encoder");
  bundle.set_meta("provenance", std::string(to_string(w.provenance)));
  add_encoder_arrays(bundle, w);
  write_bundle(path, bundle);
}

EncoderWeights read_encoder(const std::filesystem::path& path) {
  return encoder_from_bundle(read_bundle(path));
}

}  // namespace secovarc
