#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "secovarc/nd.hpp"
#include "secovarc/rng.hpp"

namespace nd = secovarc::nd;
using nd::Tape;
using nd::Tensor;
using secovarc::Rng;

namespace {

Tensor param(nd::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::uniform(std::move(shape), lo, hi, rng, true);
}

std::vector<double> values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

// Values bounded away from 0 so abs stays differentiable under perturbation.
Tensor away_from_zero(nd::Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.data()) {
    v = rng.uniform(0.1, 1.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  }
  return t;
}

}  // namespace

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, SplitMixReferenceValues) {
  // First outputs of SplitMix64 seeded with 0, computed from the published
  // constants by hand-unrolled arithmetic below.
  auto reference = [](std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  std::uint64_t s = 0;
  Rng rng(0);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(rng.next_u64(), reference(s));
  Rng zero(0);
  EXPECT_EQ(zero.next_u64(), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, UniformStaysInRange) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform(-0.005, 0.005);
    EXPECT_GE(u, -0.005);
    EXPECT_LT(u, 0.005);
  }
}

TEST(Rng, BelowIsUnbiasedEnough) {
  Rng rng(11);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Affine, IdentityLeftFactor) {
  Tape tape;
  auto y = nd::affine(tape, Tensor::from({2, 2}, {1, 0, 0, 1}),
                      Tensor::from({2, 2}, {2, 3, 4, 5}), Tensor::from({2}, {0, 0}));
  EXPECT_EQ(values(y), (std::vector<double>{2, 3, 4, 5}));
}

TEST(Affine, ZeroInputGivesBias) {
  Tape tape;
  auto y = nd::affine(tape, Tensor::from({1, 2}, {0, 0}),
                      Tensor::from({2, 2}, {9, 8, 7, 6}), Tensor::from({2}, {7, -1}));
  EXPECT_EQ(values(y), (std::vector<double>{7, -1}));
  EXPECT_EQ(y.shape(), (nd::Shape{1, 2}));
}

TEST(Affine, HandComputedDotProducts) {
  Tape tape;
  auto y = nd::affine(tape, Tensor::from({1, 2}, {1, 2}),
                      Tensor::from({2, 2}, {1, 1, 1, -1}), Tensor::from({2}, {0.5, 0.5}));
  EXPECT_EQ(values(y), (std::vector<double>{3.5, -0.5}));
}

TEST(Affine, ShapeErrorNamesBothShapes) {
  Tape tape;
  try {
    nd::affine(tape, Tensor::zeros({1, 3}), Tensor::zeros({2, 2}), Tensor::zeros({2}));
    FAIL() << "expected ShapeError";
  } catch (const nd::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x2]"), std::string::npos) << msg;
  }
}

TEST(Linear, MatchesAffineWithTransposedWeight) {
  Rng rng(5);
  Tensor x = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor w = Tensor::uniform({5, 4}, -1, 1, rng);
  Tensor b = Tensor::uniform({5}, -1, 1, rng);
  Tensor wt = Tensor::zeros({4, 5});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) wt.data()[j * 5 + i] = w.at(i, j);
  Tape tape;
  auto a = nd::linear(tape, x, w, b);
  auto c = nd::affine(tape, x, wt, b);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], c[i], 1e-14);
}

TEST(Elementwise, SpecExamples) {
  Tape tape;
  EXPECT_EQ(nd::sigmoid(tape, Tensor::from({1}, {0}))[0], 0.5);
  EXPECT_EQ(values(nd::hadamard(tape, Tensor::from({3}, {1, 2, 3}),
                                Tensor::from({3}, {0, 1, -1}))),
            (std::vector<double>{0, 2, -3}));
  EXPECT_EQ(values(nd::abs(tape, nd::sub(tape, Tensor::from({2}, {3, -3}),
                                         Tensor::from({2}, {1, 1})))),
            (std::vector<double>{2, 4}));
}

TEST(Elementwise, ParseNames) {
  EXPECT_EQ(nd::parse_elementwise("tanh"), nd::Elementwise::kTanh);
  EXPECT_EQ(nd::parse_elementwise("hadamard"), nd::Elementwise::kHadamard);
  EXPECT_THROW(nd::parse_elementwise("relu"), std::invalid_argument);
}

TEST(Elementwise, BinaryShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(nd::add(tape, Tensor::zeros({2}), Tensor::zeros({3})), nd::ShapeError);
  EXPECT_THROW(nd::elementwise(tape, nd::Elementwise::kSub, Tensor::zeros({2})),
               nd::ShapeError);
}

TEST(Elementwise, SigmoidStaysFiniteAtExtremes) {
  Tape tape;
  auto y = nd::sigmoid(tape, Tensor::from({2}, {-1000, 1000}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 1.0);
  EXPECT_TRUE(std::isfinite(y[0]) && std::isfinite(y[1]));
}

TEST(Elementwise, AbsGradientIsZeroAtZero) {
  Tensor x = Tensor::from({3}, {-2, 0, 2}, true);
  Tape tape;
  tape.backward(nd::sum(tape, nd::abs(tape, x)));
  EXPECT_EQ(values(Tensor::from({3}, {x.grad()[0], x.grad()[1], x.grad()[2]})),
            (std::vector<double>{-1, 0, 1}));
}

TEST(Concat, JoinsInOrder) {
  Tape tape;
  auto y = nd::concat(tape, {Tensor::from({1}, {1}), Tensor::from({1}, {2}),
                             Tensor::from({1}, {3})});
  EXPECT_EQ(values(y), (std::vector<double>{1, 2, 3}));
}

TEST(Concat, FiveFeatureVectorsGiveWidth1500) {
  Tape tape;
  std::vector<Tensor> parts(5, Tensor::zeros({1, 300}));
  auto y = nd::concat(tape, parts);
  EXPECT_EQ(y.shape(), (nd::Shape{1, 1500}));
}

TEST(Concat, SingletonIsIdentity) {
  Rng rng(2);
  Tensor x = Tensor::uniform({4}, -1, 1, rng);
  Tape tape;
  EXPECT_EQ(values(nd::concat(tape, {x})), values(x));
}

TEST(Concat, EmptyListThrows) {
  Tape tape;
  EXPECT_THROW(nd::concat(tape, std::span<const Tensor>{}), std::invalid_argument);
}

TEST(Concat, SliceRecoversEveryPart) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor> parts;
    const std::size_t count = 1 + rng.below(6);
    for (std::size_t i = 0; i < count; ++i) {
      parts.push_back(Tensor::uniform({1 + rng.below(5)}, -3, 3, rng));
    }
    Tape tape;
    const Tensor joined = nd::concat(tape, parts);
    std::size_t offset = 0;
    for (const auto& p : parts) {
      EXPECT_EQ(values(nd::slice(tape, joined, offset, p.size())), values(p));
      offset += p.size();
    }
    EXPECT_EQ(offset, joined.size());
  }
}

TEST(Pooling, MaxPoolExamples) {
  Tape tape;
  EXPECT_EQ(values(nd::masked_max_pool(tape, Tensor::from({2, 2}, {1, -2, 3, 0}), 2)),
            (std::vector<double>{3, 0}));
  EXPECT_EQ(values(nd::masked_max_pool(tape, Tensor::from({2, 2}, {1, -2, 3, 0}), 1)),
            (std::vector<double>{1, -2}));
  EXPECT_EQ(values(nd::masked_max_pool(
                tape, Tensor::from({3, 2}, {1, 9, 5, -1, 99, 99}), 2)),
            (std::vector<double>{5, 9}));
}

TEST(Pooling, LastPoolExamples) {
  Tape tape;
  const Tensor h = Tensor::from({3, 2}, {1, 2, 3, 4, 77, 77});
  EXPECT_EQ(values(nd::last_pool(tape, h, 2)), (std::vector<double>{3, 4}));
  EXPECT_EQ(values(nd::last_pool(tape, h, 1)), (std::vector<double>{1, 2}));
}

TEST(Pooling, InvalidLengthsThrow) {
  Tape tape;
  const Tensor h = Tensor::zeros({2, 3});
  for (auto pool : {&nd::masked_max_pool, &nd::last_pool, &nd::masked_mean_pool}) {
    EXPECT_THROW(pool(tape, h, 0), std::out_of_range);
    EXPECT_THROW(pool(tape, h, 3), std::out_of_range);
  }
}

TEST(Pooling, PadRowsNeverAffectOutput) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(6);
    const std::size_t d = 1 + rng.below(4);
    const std::size_t valid = 1 + rng.below(n);
    Tensor a = Tensor::uniform({n, d}, -1, 1, rng);
    Tensor b = a.clone();
    for (std::size_t i = valid * d; i < n * d; ++i) b.data()[i] = rng.uniform(-100, 100);
    Tape tape;
    for (auto pool : {&nd::masked_max_pool, &nd::last_pool, &nd::masked_mean_pool}) {
      EXPECT_EQ(values(pool(tape, a, valid)), values(pool(tape, b, valid)));
    }
  }
}

TEST(Pooling, MaxPoolRoutesGradientToFirstArgmax) {
  Tensor h = Tensor::from({3, 2}, {4, 1, 4, 2, 0, 9}, true);
  Tape tape;
  tape.backward(nd::sum(tape, nd::masked_max_pool(tape, h, 2)));
  EXPECT_EQ(values(Tensor::from({6}, {h.grad().begin(), h.grad().end()})),
            (std::vector<double>{1, 0, 0, 1, 0, 0}));
}

TEST(Dropout, EvalModeIsIdentity) {
  Rng rng(1);
  Tensor x = Tensor::uniform({10}, -1, 1, rng);
  Tape tape;
  const Tensor y = nd::dropout(tape, x, 0.5, nd::Mode::kEval, rng);
  EXPECT_EQ(values(y), values(x));
}

TEST(Dropout, ZeroRateIsIdentityInTrainMode) {
  Rng rng(1);
  Tensor x = Tensor::uniform({10}, -1, 1, rng);
  Tape tape;
  EXPECT_EQ(values(nd::dropout(tape, x, 0.0, nd::Mode::kTrain, rng)), values(x));
}

TEST(Dropout, RejectsInvalidRates) {
  Rng rng(1);
  Tape tape;
  const Tensor x = Tensor::zeros({3});
  EXPECT_THROW(nd::dropout(tape, x, 1.0, nd::Mode::kTrain, rng), std::invalid_argument);
  EXPECT_THROW(nd::dropout(tape, x, -0.1, nd::Mode::kTrain, rng), std::invalid_argument);
}

TEST(Dropout, SurvivorsScaledAndMeanPreserved) {
  Rng rng(17);
  const Tensor x = Tensor::from({4}, {1, 1, 1, 1});
  std::vector<double> mean(4, 0.0);
  const int reps = 100000;
  Tape tape(false);
  for (int r = 0; r < reps; ++r) {
    const Tensor y = nd::dropout(tape, x, 0.5, nd::Mode::kTrain, rng);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_TRUE(y[i] == 0.0 || y[i] == 2.0);
      mean[i] += y[i] / reps;
    }
  }
  for (double m : mean) EXPECT_NEAR(m, 1.0, 0.01);
}

TEST(Dropout, SameSeedSameMask) {
  Rng a(4), b(4);
  Tensor x = Tensor::from({50}, std::vector<double>(50, 1.0));
  Tape tape;
  EXPECT_EQ(values(nd::dropout(tape, x, 0.3, nd::Mode::kTrain, a)),
            values(nd::dropout(tape, x, 0.3, nd::Mode::kTrain, b)));
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::zeros({2, 3}, true);
  Tape tape;
  tape.backward(nd::sum(tape, x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SigmoidAtZeroGivesQuarterX) {
  Tensor w = Tensor::zeros({1, 3}, true);
  const Tensor x = Tensor::from({3}, {1, -2, 4});
  Tape tape;
  tape.backward(nd::sum(tape, nd::sigmoid(tape, nd::linear(tape, x, w, {}))));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 0.25 * x[i]);
}

TEST(Backward, UnusedInputGetsZeroGradient) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y = Tensor::from({2}, {3, 4}, true);
  Tape tape;
  tape.backward(nd::sum(tape, y));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossThrows) {
  Tensor x = Tensor::zeros({2}, true);
  Tape tape;
  const Tensor y = nd::tanh(tape, x);
  EXPECT_THROW(tape.backward(y), nd::ShapeError);
}

TEST(Backward, DisabledTapeRecordsNothing) {
  Tensor x = Tensor::zeros({2}, true);
  Tape tape(false);
  const Tensor y = nd::tanh(tape, x);
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

TEST(BinaryCrossEntropy, ClampKeepsLossFinite) {
  Tape tape;
  const std::vector<double> t{1.0, 0.0};
  const Tensor l = nd::binary_cross_entropy(tape, Tensor::from({2}, {0.0, 1.0}), t);
  // 1 - (1 - 1e-12) is not exactly 1e-12 in binary floating point.
  EXPECT_NEAR(l.item(), -std::log(1e-12), 1e-3);
}

TEST(BinaryCrossEntropy, MatchesHandValue) {
  Tape tape;
  const std::vector<double> t{1.0, 0.0};
  const Tensor l = nd::binary_cross_entropy(tape, Tensor::from({2}, {0.8, 0.3}), t);
  EXPECT_NEAR(l.item(), -(std::log(0.8) + std::log(0.7)) / 2, 1e-15);
}

TEST(GradCheck, QuadraticIsExact) {
  Rng rng(8);
  Tensor x = param({5}, rng);
  const double err = nd::grad_check(
      [&](Tape& t) { return nd::squared_norm(t, x); }, std::vector<Tensor>{x});
  EXPECT_LT(err, 1e-9);
}

TEST(GradCheck, RejectsOutOfRangeEpsilon) {
  Tensor x = Tensor::zeros({1}, true);
  auto f = [&](Tape& t) { return nd::sum(t, x); };
  EXPECT_THROW(nd::grad_check(f, std::vector<Tensor>{x}, 1e-2), std::invalid_argument);
  EXPECT_THROW(nd::grad_check(f, std::vector<Tensor>{x}, 1e-9), std::invalid_argument);
}

TEST(GradCheck, DetectsWrongBackwardRule) {
  Rng rng(8);
  Tensor x = param({4}, rng, 0.5, 1.0);
  // Cube with a sign-flipped derivative.
  auto f = [&](Tape& t) {
    const bool track = t.tracks({&x});
    Tensor y = Tensor::zeros({4}, track);
    for (std::size_t i = 0; i < 4; ++i) y.data()[i] = x[i] * x[i] * x[i];
    if (track) {
      t.record("bad_cube", {x}, y, [x](std::span<const double> dy) {
        auto g = x.grad();
        for (std::size_t i = 0; i < 4; ++i) g[i] -= 3 * x[i] * x[i] * dy[i];
      });
    }
    return nd::sum(t, y);
  };
  EXPECT_GT(nd::grad_check(f, std::vector<Tensor>{x}), 1e-2);
}

TEST(GradCheck, ReportsNanAsInfinity) {
  Tensor x = Tensor::from({1}, {1.0}, true);
  auto f = [&](Tape& t) {
    const bool track = t.tracks({&x});
    Tensor y = Tensor::from({}, {x[0]}, track);
    if (track) {
      t.record("nan", {x}, y, [x](std::span<const double>) {
        x.grad()[0] += std::numeric_limits<double>::quiet_NaN();
      });
    }
    return y;
  };
  EXPECT_EQ(nd::grad_check(f, std::vector<Tensor>{x}),
            std::numeric_limits<double>::infinity());
}

struct OpCase {
  const char* name;
  std::function<Tensor(Tape&, const std::vector<Tensor>&)> build;
  std::vector<nd::Shape> shapes;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const OpCase& c = GetParam();
  Rng rng(123);
  std::vector<Tensor> params;
  for (const auto& s : c.shapes) params.push_back(away_from_zero(s, rng));
  // A fixed random projection turns any output into a scalar with
  // non-uniform upstream gradients.
  Tensor probe;
  auto f = [&](Tape& t) {
    const Tensor y = c.build(t, params);
    if (!probe.defined()) probe = Tensor::uniform(y.shape(), -1, 1, rng);
    return nd::sum(t, nd::hadamard(t, y, probe));
  };
  EXPECT_LT(nd::grad_check(f, params), 1e-5) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradient,
    ::testing::Values(
        OpCase{"affine", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::affine(t, p[0], p[1], p[2]);
               }, {{3, 4}, {4, 2}, {2}}},
        OpCase{"linear", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::linear(t, p[0], p[1], p[2]);
               }, {{3, 4}, {2, 4}, {2}}},
        OpCase{"tanh", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::tanh(t, p[0]);
               }, {{5}}},
        OpCase{"sigmoid", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::sigmoid(t, p[0]);
               }, {{5}}},
        OpCase{"abs", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::abs(t, p[0]);
               }, {{5}}},
        OpCase{"hadamard", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::hadamard(t, p[0], p[1]);
               }, {{5}, {5}}},
        OpCase{"sub", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::sub(t, p[0], p[1]);
               }, {{2, 3}, {2, 3}}},
        OpCase{"scale", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::scale(t, p[0], -2.5);
               }, {{4}}},
        OpCase{"concat", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::concat(t, {p[0], p[1], p[2]});
               }, {{1, 2}, {1, 3}, {1, 1}}},
        OpCase{"slice", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::slice(t, p[0], 2, 3);
               }, {{6}}},
        OpCase{"row", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::row(t, p[0], 1);
               }, {{3, 4}}},
        OpCase{"head_rows", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::head_rows(t, p[0], 2);
               }, {{3, 4}}},
        OpCase{"reshape", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::reshape(t, p[0], {6});
               }, {{2, 3}}},
        OpCase{"stack_rows", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::stack_rows(t, p, 4);
               }, {{3}, {3}}},
        OpCase{"gather_rows", [](Tape& t, const std::vector<Tensor>& p) {
                 static const std::vector<int> ids{2, 0, 2};
                 return nd::gather_rows(t, p[0], ids);
               }, {{4, 3}}},
        OpCase{"max_pool", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::masked_max_pool(t, p[0], 3);
               }, {{4, 3}}},
        OpCase{"last_pool", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::last_pool(t, p[0], 2);
               }, {{4, 3}}},
        OpCase{"mean_pool", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::masked_mean_pool(t, p[0], 3);
               }, {{4, 3}}},
        OpCase{"squared_norm", [](Tape& t, const std::vector<Tensor>& p) {
                 return nd::squared_norm(t, p[0]);
               }, {{2, 2}}},
        OpCase{"bce", [](Tape& t, const std::vector<Tensor>& p) {
                 static const std::vector<double> y{1, 0, 1};
                 return nd::binary_cross_entropy(t, nd::sigmoid(t, p[0]), y);
               }, {{3}}}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

TEST(GradCheck, CompositeOfEveryOp) {
  Rng rng(77);
  Tensor table = param({6, 3}, rng);
  Tensor w = param({3, 3}, rng);
  Tensor b = param({3}, rng);
  const std::vector<int> ids{1, 4, 2, 0};
  auto f = [&](Tape& t) {
    Tensor x = nd::gather_rows(t, table, ids);
    Tensor h = nd::tanh(t, nd::affine(t, x, w, b));
    Tensor m = nd::masked_max_pool(t, h, 3);
    Tensor l = nd::last_pool(t, h, 3);
    Tensor feat = nd::concat(t, {nd::abs(t, nd::sub(t, m, l)), nd::hadamard(t, m, l)});
    Tensor p = nd::sigmoid(t, nd::reshape(t, nd::scale(t, nd::sum(t, feat), 0.5), {1}));
    const std::vector<double> y{1.0};
    return nd::add(t, nd::binary_cross_entropy(t, p, y),
                   nd::scale(t, nd::squared_norm(t, w), 1e-3));
  };
  EXPECT_LT(nd::grad_check(f, std::vector<Tensor>{table, w, b}), 1e-5);
}
