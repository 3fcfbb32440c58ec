#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "secovarc/encoder.hpp"

using namespace secovarc;
using nd::Tape;
using nd::Tensor;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

EncoderWeights zero_encoder(std::size_t in, std::size_t h) {
  Rng rng(0);
  EncoderWeights w = EncoderWeights::scratch(in, h, rng);
  for (auto& p : w.parameters())
    for (double& v : p.data()) v = 0.0;
  return w;
}

EncoderWeights random_encoder(std::size_t in, std::size_t h, std::uint64_t seed,
                              double range = 0.5) {
  Rng rng(seed);
  EncoderWeights w = EncoderWeights::scratch(in, h, rng);
  for (auto& p : w.parameters())
    for (double& v : p.data()) v = rng.uniform(-range, range);
  return w;
}

// x [n x in] followed by `pad` zero rows.
Tensor padded(const Tensor& x, std::size_t pad) {
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  Tensor out = Tensor::zeros({n + pad, d});
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  return out;
}

}  // namespace

TEST(LstmStep, ZeroWeightsAndInputs) {
  const EncoderWeights w = zero_encoder(3, 2);
  Tape tape;
  const auto s = lstm_step(tape, Tensor::zeros({3}), Tensor::zeros({2}), Tensor::zeros({2}),
                           w.layers[0].forward);
  EXPECT_EQ(values(s.h), (std::vector<double>{0, 0}));
  EXPECT_EQ(values(s.c), (std::vector<double>{0, 0}));
}

TEST(LstmStep, ZeroCellStateDropsForgetPath) {
  const EncoderWeights w = random_encoder(3, 2, 4);
  const auto& d = w.layers[0].forward;
  const Tensor x = Tensor::from({3}, {0.3, -0.2, 0.9});
  const Tensor h = Tensor::from({2}, {0.1, -0.4});
  Tape tape;
  const auto s = lstm_step(tape, x, h, Tensor::zeros({2}), d);
  // Recompute i and g by hand; c must equal i * g whatever f is.
  for (std::size_t u = 0; u < 2; ++u) {
    auto pre = [&](std::size_t gate) {
      const std::size_t r = gate * 2 + u;
      double v = d.bias[r];
      for (std::size_t k = 0; k < 3; ++k) v += d.w_x.at(r, k) * x[k];
      for (std::size_t k = 0; k < 2; ++k) v += d.w_h.at(r, k) * h[k];
      return v;
    };
    EXPECT_NEAR(s.c[u], sig(pre(0)) * std::tanh(pre(2)), 1e-15);
  }
}

TEST(LstmStep, OneUnitHandComputedRecurrence) {
  EncoderWeights w = zero_encoder(1, 1);
  auto& d = w.layers[0].forward;
  // Gate rows i, f, g, o.
  const double wx[4] = {0.5, -0.3, 0.8, 0.1};
  const double wh[4] = {-0.2, 0.4, 0.6, -0.7};
  const double b[4] = {0.1, 0.2, -0.1, 0.05};
  for (int k = 0; k < 4; ++k) {
    d.w_x.data()[k] = wx[k];
    d.w_h.data()[k] = wh[k];
    d.bias.data()[k] = b[k];
  }
  const double xs[3] = {1.0, -0.5, 2.0};
  double h = 0.0, c = 0.0;
  Tensor th = Tensor::zeros({1}), tc = Tensor::zeros({1});
  for (double x : xs) {
    const double i = sig(wx[0] * x + wh[0] * h + b[0]);
    const double f = sig(wx[1] * x + wh[1] * h + b[1]);
    const double g = std::tanh(wx[2] * x + wh[2] * h + b[2]);
    const double o = sig(wx[3] * x + wh[3] * h + b[3]);
    c = f * c + i * g;
    h = o * std::tanh(c);
    Tape tape;
    const auto s = lstm_step(tape, Tensor::from({1}, {x}), th, tc, d);
    th = s.h;
    tc = s.c;
    EXPECT_NEAR(th[0], h, 1e-12);
    EXPECT_NEAR(tc[0], c, 1e-12);
  }
}

TEST(LstmStep, DimensionMismatchThrows) {
  const EncoderWeights w = zero_encoder(3, 2);
  Tape tape;
  EXPECT_THROW(lstm_step(tape, Tensor::zeros({4}), Tensor::zeros({2}), Tensor::zeros({2}),
                         w.layers[0].forward),
               nd::ShapeError);
}

TEST(BilstmForward, ZeroWeightsGiveZeroOutput) {
  const EncoderWeights w = zero_encoder(3, 2);
  Rng rng(1);
  Tape tape;
  const Tensor y = bilstm_forward(tape, Tensor::uniform({4, 3}, -1, 1, rng), 4, w);
  ASSERT_EQ(y.shape(), (nd::Shape{4, 4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(BilstmForward, SingleTokenDirectionsShareInput) {
  EncoderWeights w = random_encoder(3, 2, 9);
  // Same weights in both directions make the halves identical.
  for (auto& layer : w.layers) {
    layer.backward.w_x = layer.forward.w_x.clone();
    layer.backward.w_h = layer.forward.w_h.clone();
    layer.backward.bias = layer.forward.bias.clone();
  }
  Rng rng(2);
  Tape tape;
  const Tensor y = bilstm_forward(tape, Tensor::uniform({1, 3}, -1, 1, rng), 1, w);
  EXPECT_EQ(y.at(0, 0), y.at(0, 2));
  EXPECT_EQ(y.at(0, 1), y.at(0, 3));
}

TEST(BilstmForward, PadRowMatchesUnpaddedRun) {
  const EncoderWeights w = random_encoder(3, 2, 10);
  Rng rng(3);
  const Tensor x = Tensor::uniform({3, 3}, -1, 1, rng);
  Tape tape;
  const Tensor a = bilstm_forward(tape, x, 3, w);
  const Tensor b = bilstm_forward(tape, padded(x, 1), 3, w);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a.at(t, j), b.at(t, j));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(b.at(3, j), 0.0);
}

TEST(BilstmForward, BackwardDirectionReadsRightToLeft) {
  const EncoderWeights w = random_encoder(2, 2, 11);
  Rng rng(4);
  const Tensor x = Tensor::uniform({3, 2}, -1, 1, rng);
  Tensor reversed = Tensor::zeros({3, 2});
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 2; ++j) reversed.data()[t * 2 + j] = x.at(2 - t, j);
  EncoderWeights swapped = w.clone();
  for (auto& layer : swapped.layers) std::swap(layer.forward, layer.backward);
  // Layer 1 then sees [bwd; fwd] halves, so its input columns swap too.
  for (auto* d : {&swapped.layers[1].forward, &swapped.layers[1].backward}) {
    Tensor& wx = d->w_x;
    for (std::size_t r = 0; r < wx.shape()[0]; ++r)
      for (std::size_t k = 0; k < 2; ++k)
        std::swap(wx.data()[r * 4 + k], wx.data()[r * 4 + k + 2]);
  }
  Tape tape;
  const Tensor a = bilstm_forward(tape, x, 3, w);
  const Tensor b = bilstm_forward(tape, reversed, 3, swapped);
  // Reversing the input and swapping directions mirrors the output.
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NEAR(a.at(t, j), b.at(2 - t, j + 2), 1e-14);
      EXPECT_NEAR(a.at(t, j + 2), b.at(2 - t, j), 1e-14);
    }
}

TEST(BilstmForward, ZeroLengthThrows) {
  const EncoderWeights w = zero_encoder(3, 2);
  Tape tape;
  EXPECT_THROW(bilstm_forward(tape, Tensor::zeros({2, 3}), 0, w), std::out_of_range);
  EXPECT_THROW(bilstm_forward(tape, Tensor::zeros({2, 3}), 3, w), std::out_of_range);
}

TEST(Encode, BowMeanExamples) {
  Tape tape;
  EXPECT_EQ(values(encode(tape, Tensor::from({2, 2}, {1, 1, 3, 3}), 2,
                          EncoderMode::kBowMean, nullptr).s),
            (std::vector<double>{2, 2}));
  EXPECT_EQ(values(encode(tape, Tensor::from({2, 2}, {2, 0, 0, 0}), 1,
                          EncoderMode::kBowMean, nullptr).s),
            (std::vector<double>{2, 0}));
}

TEST(Encode, MaxEqualsLastForOneToken) {
  const EncoderWeights w = random_encoder(3, 2, 5);
  Rng rng(6);
  const Tensor x = Tensor::uniform({3, 3}, -1, 1, rng);
  Tape tape;
  EXPECT_EQ(values(encode(tape, x, 1, EncoderMode::kBilstmMax, &w).s),
            values(encode(tape, x, 1, EncoderMode::kBilstmLast, &w).s));
}

TEST(Encode, LastPoolTakesFinalValidRow) {
  const EncoderWeights w = random_encoder(3, 2, 5);
  Rng rng(6);
  const Tensor x = Tensor::uniform({4, 3}, -1, 1, rng);
  Tape tape;
  const Tensor h = bilstm_forward(tape, x, 3, w);
  const Tensor s = encode(tape, x, 3, EncoderMode::kBilstmLast, &w).s;
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(s[j], h.at(2, j));
}

TEST(Encode, OutputWidthFollowsMode) {
  const EncoderWeights w = random_encoder(5, 3, 5);
  Tape tape;
  const Tensor x = Tensor::zeros({2, 5});
  EXPECT_EQ(encode(tape, x, 2, EncoderMode::kBilstmMax, &w).s.size(), 6u);
  EXPECT_EQ(encode(tape, x, 2, EncoderMode::kBilstmLast, &w).s.size(), 6u);
  EXPECT_EQ(encode(tape, x, 2, EncoderMode::kBowMean, nullptr).s.size(), 5u);
}

TEST(Encode, MissingWeightsThrow) {
  Tape tape;
  EXPECT_THROW(encode(tape, Tensor::zeros({2, 3}), 2, EncoderMode::kBilstmMax, nullptr),
               std::invalid_argument);
}

TEST(Encode, PaddingInvarianceAllModes) {
  const EncoderWeights w = random_encoder(4, 3, 8);
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const Tensor x = Tensor::uniform({n, 4}, -1, 1, rng);
    for (EncoderMode m : {EncoderMode::kBilstmMax, EncoderMode::kBilstmLast,
                          EncoderMode::kBowMean}) {
      Tape tape;
      const auto a = encode(tape, x, n, m, &w).s;
      const auto b = encode(tape, padded(x, 5), n, m, &w).s;
      EXPECT_EQ(values(a), values(b));
    }
  }
}

TEST(Encode, GradientsFlowThroughEncoder) {
  EncoderWeights w = random_encoder(3, 2, 13);
  Rng rng(14);
  Tensor x = Tensor::uniform({4, 3}, -1, 1, rng, true);
  for (EncoderMode m : {EncoderMode::kBilstmMax, EncoderMode::kBilstmLast}) {
    std::vector<Tensor> params = w.parameters();
    params.push_back(x);
    const double err = nd::grad_check(
        [&](Tape& t) { return nd::sum(t, encode(t, x, 3, m, &w).s); }, params);
    EXPECT_LT(err, 1e-5) << to_string(m);
  }
}

TEST(EncoderMode, NamesRoundTrip) {
  for (EncoderMode m : {EncoderMode::kBilstmMax, EncoderMode::kBilstmLast,
                        EncoderMode::kBowMean}) {
    EXPECT_EQ(parse_encoder_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_encoder_mode("cnn"), std::invalid_argument);
}

TEST(EncoderWeights, ScratchInitRanges) {
  Rng rng(3);
  const EncoderWeights w = EncoderWeights::scratch(300, 300, rng);
  EXPECT_EQ(w.output_dim(), 600u);
  EXPECT_EQ(w.layers[1].forward.input_dim(), 600u);
  for (const auto& layer : w.layers)
    for (const auto* d : {&layer.forward, &layer.backward}) {
      for (double v : d->w_x.data()) EXPECT_LT(std::abs(v), 0.005);
      for (double v : d->bias.data()) EXPECT_EQ(v, 0.0);
    }
}
