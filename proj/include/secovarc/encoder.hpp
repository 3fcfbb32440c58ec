#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "secovarc/bundle.hpp"
#include "secovarc/nd.hpp"
#include "secovarc/rng.hpp"

namespace secovarc {

inline constexpr std::size_t kDefaultHiddenDim = 300;

// One direction of one LSTM layer. Rows of w_x, w_h and bias are grouped by
// gate in the fixed order input, forget, cell, output.
struct LstmDirectionWeights {
  nd::Tensor w_x;   // [4h x in_dim]
  nd::Tensor w_h;   // [4h x h]
  nd::Tensor bias;  // [4h]

  std::size_t hidden_dim() const { return w_h.shape()[1]; }
  std::size_t input_dim() const { return w_x.shape()[1]; }
};

struct LstmLayerWeights {
  LstmDirectionWeights forward;
  LstmDirectionWeights backward;
};

enum class Provenance { kScratch, kPretrained };

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view s);

// Two stacked bidirectional LSTM layers; layer 1 reads the 2h-wide output of
// layer 0, so the encoder emits 2h features per token.
struct EncoderWeights {
  std::array<LstmLayerWeights, 2> layers;
  Provenance provenance = Provenance::kScratch;
  int format_version = kBundleVersion;

  std::size_t input_dim() const { return layers[0].forward.input_dim(); }
  std::size_t hidden_dim() const { return layers[0].forward.hidden_dim(); }
  std::size_t output_dim() const { return 2 * hidden_dim(); }

  // Weights uniform(-0.005, 0.005), biases zero.
  static EncoderWeights scratch(std::size_t input_dim, std::size_t hidden_dim,
                                Rng& rng);

  std::vector<nd::Tensor> parameters() const;
  EncoderWeights clone() const;
};

enum class EncoderMode { kBilstmMax, kBilstmLast, kBowMean };

std::string_view to_string(EncoderMode m);
EncoderMode parse_encoder_mode(std::string_view s);

struct LstmState {
  nd::Tensor h;
  nd::Tensor c;
};

// One LSTM recurrence from x_t [in_dim] and the previous state.
LstmState lstm_step(nd::Tape& tape, const nd::Tensor& x_t,
                    const nd::Tensor& h_prev, const nd::Tensor& c_prev,
                    const LstmDirectionWeights& w);

// Per-token outputs [n x 2h] of the two-layer encoder over x [n x in_dim].
// Only the first valid_len rows are read; output rows past valid_len are zero.
nd::Tensor bilstm_forward(nd::Tape& tape, const nd::Tensor& x,
                          std::size_t valid_len, const EncoderWeights& w);

struct SentenceRep {
  nd::Tensor s;
  EncoderMode pooling;
};

// Pools the encoder states (or, for kBowMean, the embeddings themselves) of
// the first valid_len tokens into a fixed-width vector. `w` may be null only
// for kBowMean.
SentenceRep encode(nd::Tape& tape, const nd::Tensor& tokens,
                   std::size_t valid_len, EncoderMode mode,
                   const EncoderWeights* w);

// Array naming shared by encoder and full-model bundles.
void add_encoder_arrays(Bundle& bundle, const EncoderWeights& w,
                        const std::string& prefix = "encoder");
EncoderWeights encoder_from_bundle(const Bundle& bundle,
                                   const std::string& prefix = "encoder");

void write_encoder(const std::filesystem::path& path, const EncoderWeights& w);
EncoderWeights read_encoder(const std::filesystem::path& path);

}  // namespace secovarc
