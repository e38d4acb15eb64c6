// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "fedseq/error.hpp"
#include "fedseq/recurrent.hpp"
#include "fedseq/rng.hpp"

using namespace fedseq;

namespace {

NetworkConfig small(CellVariant v, bool bi, std::size_t layers) {
  NetworkConfig c;
  c.cell = {v, bi};
  c.input_size = 5;
  c.hidden_size = 4;
  c.num_layers = layers;
  c.fc_hidden = 3;
  c.sequence_length = 3;
  return c;
}

void zero(ParameterSet& p) {
  for (std::size_t e = 0; e < p.size(); ++e)
    for (double& v : p.values(e)) v = 0.0;
}

}  // namespace

TEST(InitNetwork, SimpleRnnShapes) {
  NetworkConfig c;
  c.cell = {CellVariant::SimpleRnn, false};
  c.input_size = 40;
  c.hidden_size = 8;
  Rng rng(1);
  const ParameterSet p = init_network(c, rng);
  EXPECT_EQ(p["rnn.l0.fwd.w_ih"].shape(), (Shape{8, 40}));
  EXPECT_EQ(p["rnn.l0.fwd.w_hh"].shape(), (Shape{8, 8}));
  EXPECT_EQ(p["rnn.l0.fwd.b"].shape(), (Shape{8}));
  EXPECT_EQ(p["head.fc.w"].shape(), (Shape{10, 8}));
  EXPECT_EQ(p["head.out.w"].shape(), (Shape{2, 10}));
}

TEST(InitNetwork, LstmStacksFourGates) {
  NetworkConfig c;
  c.cell = {CellVariant::Lstm, true};
  c.hidden_size = 6;
  c.num_layers = 2;
  Rng rng(1);
  const ParameterSet p = init_network(c, rng);
  EXPECT_EQ(p["rnn.l0.bwd.w_ih"].shape(), (Shape{24, 40}));
  EXPECT_EQ(p["rnn.l1.fwd.w_ih"].shape(), (Shape{24, 12}));
  EXPECT_EQ(p["head.fc.w"].shape(), (Shape{10, 12}));
  // i, f, g, o: only the forget block starts at one.
  const Tensor& b = p["rnn.l0.fwd.b"];
  for (std::size_t i = 0; i < 24; ++i) EXPECT_EQ(b[i], (i >= 6 && i < 12) ? 1.0 : 0.0);
}

TEST(InitNetwork, GruHasSeparateBiases) {
  NetworkConfig c;
  c.cell = {CellVariant::Gru, false};
  c.hidden_size = 5;
  Rng rng(1);
  const ParameterSet p = init_network(c, rng);
  EXPECT_EQ(p["rnn.l0.fwd.w_hh"].shape(), (Shape{15, 5}));
  EXPECT_EQ(p["rnn.l0.fwd.b_ih"].shape(), (Shape{15}));
  EXPECT_EQ(p["rnn.l0.fwd.b_hh"].shape(), (Shape{15}));
}

TEST(InitNetwork, RecurrentWeightsWithinBound) {
  NetworkConfig c;
  c.cell = {CellVariant::Gru, true};
  c.hidden_size = 16;
  Rng rng(7);
  const ParameterSet p = init_network(c, rng);
  const double bound = 1.0 / std::sqrt(16.0);
  for (double v : p["rnn.l0.fwd.w_hh"].data()) EXPECT_LE(std::abs(v), bound);
  for (double v : p["rnn.l0.fwd.b_ih"].data()) EXPECT_EQ(v, 0.0);
}

TEST(InitNetwork, SameSeedIsBitwiseIdentical) {
  const NetworkConfig c = small(CellVariant::Lstm, true, 2);
  Rng a(3), b(3);
  EXPECT_TRUE(bitwise_equal(init_network(c, a), init_network(c, b)));
}

TEST(InitNetwork, InferConfigRoundTrip) {
  for (auto v : {CellVariant::SimpleRnn, CellVariant::Gru, CellVariant::Lstm}) {
    NetworkConfig c = small(v, v != CellVariant::SimpleRnn, 2);
    Rng rng(1);
    const NetworkConfig inferred = infer_network_config(init_network(c, rng));
    EXPECT_EQ(inferred.cell.variant, c.cell.variant);
    EXPECT_EQ(inferred.cell.bidirectional, c.cell.bidirectional);
    EXPECT_EQ(inferred.input_size, c.input_size);
    EXPECT_EQ(inferred.hidden_size, c.hidden_size);
    EXPECT_EQ(inferred.num_layers, c.num_layers);
    EXPECT_EQ(inferred.fc_hidden, c.fc_hidden);
    EXPECT_EQ(inferred.outputs, c.outputs);
  }
}

TEST(Forward, ZeroWeightsAndInputGiveZeros) {
  for (auto v : {CellVariant::SimpleRnn, CellVariant::Gru, CellVariant::Lstm}) {
    const NetworkConfig c = small(v, true, 2);
    Rng rng(1);
    ParameterSet p = init_network(c, rng);
    zero(p);
    const Tensor y = forward(p, c, Tensor({3, 5})).prediction;
    ASSERT_EQ(y.shape(), (Shape{3, 2}));
    for (double value : y.data()) EXPECT_EQ(value, 0.0);
  }
}

TEST(Forward, OutputIsTByTwoForEveryCell) {
  for (auto v : {CellVariant::SimpleRnn, CellVariant::Gru, CellVariant::Lstm})
    for (bool bi : {false, true})
      for (std::size_t layers : {1u, 3u}) {
        NetworkConfig c = small(v, bi, layers);
        c.sequence_length = 7;
        Rng rng(2);
        const ParameterSet p = init_network(c, rng);
        EXPECT_EQ(forward(p, c, uniform_init(rng, {7, 5}, -1, 1)).prediction.shape(), (Shape{7, 2}));
      }
}

TEST(Forward, BidirectionalHeadSeesTwiceTheHiddenWidth) {
  const NetworkConfig c = small(CellVariant::Gru, true, 1);
  Rng rng(1);
  const ParameterSet p = init_network(c, rng);
  EXPECT_EQ(p["head.fc.w"].cols(), 8u);
  EXPECT_EQ(last_layer_states(p, c, Tensor({3, 5})).shape(), (Shape{3, 8}));
}

TEST(Forward, TwoStepScalarRnnMatchesClosedForm) {
  NetworkConfig c;
  c.cell = {CellVariant::SimpleRnn, false};
  c.input_size = 1;
  c.hidden_size = 1;
  c.fc_hidden = 1;
  c.sequence_length = 2;
  Rng rng(1);
  ParameterSet p = init_network(c, rng);
  const double wih = 0.7, whh = -0.4, b = 0.1, wfc = 1.3, bfc = -0.2, wo0 = 0.5, wo1 = -1.1, bo0 = 0.05,
               bo1 = 0.3;
  p.values("rnn.l0.fwd.w_ih")[0] = wih;
  p.values("rnn.l0.fwd.w_hh")[0] = whh;
  p.values("rnn.l0.fwd.b")[0] = b;
  p.values("head.fc.w")[0] = wfc;
  p.values("head.fc.b")[0] = bfc;
  p.values("head.out.w")[0] = wo0;
  p.values("head.out.w")[1] = wo1;
  p.values("head.out.b")[0] = bo0;
  p.values("head.out.b")[1] = bo1;
  const double x1 = 0.9, x2 = -0.6;
  const double h1 = std::tanh(wih * x1 + b);
  const double h2 = std::tanh(wih * x2 + whh * h1 + b);
  const double f1 = std::tanh(wfc * h1 + bfc), f2 = std::tanh(wfc * h2 + bfc);
  const Tensor y = forward(p, c, Tensor({2, 1}, {x1, x2})).prediction;
  EXPECT_NEAR(y.at(0, 0), wo0 * f1 + bo0, 1e-12);
  EXPECT_NEAR(y.at(0, 1), wo1 * f1 + bo1, 1e-12);
  EXPECT_NEAR(y.at(1, 0), wo0 * f2 + bo0, 1e-12);
  EXPECT_NEAR(y.at(1, 1), wo1 * f2 + bo1, 1e-12);
}

TEST(Forward, TiedBidirectionalWeightsMirrorAPalindrome) {
  for (auto v : {CellVariant::SimpleRnn, CellVariant::Gru, CellVariant::Lstm}) {
    NetworkConfig c = small(v, true, 1);
    c.sequence_length = 5;
    Rng rng(8);
    ParameterSet p = init_network(c, rng);
    for (std::size_t e = 0; e < p.size(); ++e) {
      const std::string& name = p.name(e);
      const auto pos = name.find(".bwd.");
      if (pos == std::string::npos) continue;
      std::string fwd = name;
      fwd.replace(pos, 5, ".fwd.");
      const Tensor src = p[fwd];
      std::copy(src.data().begin(), src.data().end(), p.values(e).begin());
    }
    Tensor x({5, 5});
    Rng data(9);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t f = 0; f < 5; ++f) x.at(t, f) = x.at(4 - t, f) = data.uniform(-1, 1);
    const Tensor h = last_layer_states(p, c, x);
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(h.at(t, j), h.at(4 - t, 4 + j));
  }
}

TEST(Forward, IsDeterministic) {
  const NetworkConfig c = small(CellVariant::Lstm, true, 2);
  Rng rng(4);
  const ParameterSet p = init_network(c, rng);
  const Tensor x = uniform_init(rng, {3, 5}, -1, 1);
  EXPECT_EQ(forward(p, c, x).prediction, forward(p, c, x).prediction);
}

TEST(Forward, RejectsBadInput) {
  const NetworkConfig c = small(CellVariant::Gru, false, 1);
  Rng rng(1);
  const ParameterSet p = init_network(c, rng);
  EXPECT_THROW(forward(p, c, Tensor({3, 4})), Error);
  EXPECT_THROW(forward(p, c, Tensor({4, 5})), Error);  // longer than sequence_length
  EXPECT_NO_THROW(predict(p, c, Tensor({9, 5})));
}

TEST(Backward, FiniteDifferencesAgree) {
  for (auto v : {CellVariant::SimpleRnn, CellVariant::Gru, CellVariant::Lstm})
    for (bool bi : {false, true})
      for (std::size_t layers : {1u, 2u}) {
        const NetworkConfig c = small(v, bi, layers);
        Rng rng(derive_seed(17, to_string(v), layers * 2 + bi));
        const ParameterSet p = init_network(c, rng);
        const Tensor x = uniform_init(rng, {3, 5}, -1, 1);
        const Tensor y = uniform_init(rng, {3, 2}, -1, 1);
        const auto check = oracle::finite_difference_check(p, c, x, y);
        EXPECT_LT(check.max_rel_error, 1e-4) << to_string(v) << " bi=" << bi << " layers=" << layers;
        EXPECT_EQ(check.checked, p.element_count());
      }
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
  const NetworkConfig c = small(CellVariant::Lstm, true, 2);
  Rng rng(1);
  const ParameterSet p = init_network(c, rng);
  auto f = forward(p, c, uniform_init(rng, {3, 5}, -1, 1));
  const ParameterSet g = backward(p, c, std::move(f.tape), Tensor({3, 2}));
  EXPECT_EQ(global_norm(g), 0.0);
  EXPECT_EQ(g.layout_id(), p.layout_id());
}

TEST(Backward, LinearInUpstreamGradient) {
  const NetworkConfig c = small(CellVariant::Gru, true, 2);
  Rng rng(1);
  const ParameterSet p = init_network(c, rng);
  const Tensor x = uniform_init(rng, {3, 5}, -1, 1);
  const Tensor gy = uniform_init(rng, {3, 2}, -1, 1);
  auto f1 = forward(p, c, x);
  auto f2 = forward(p, c, x);
  const ParameterSet g1 = backward(p, c, std::move(f1.tape), gy);
  const ParameterSet g2 = backward(p, c, std::move(f2.tape), scale(gy, 2.0));
  for (std::size_t e = 0; e < g1.size(); ++e)
    for (std::size_t j = 0; j < g1.values(e).size(); ++j)
      EXPECT_NEAR(g2.values(e)[j], 2.0 * g1.values(e)[j], 1e-12 * (1 + std::abs(g1.values(e)[j])));
}

TEST(Backward, TapeIsConsumedOnce) {
  const NetworkConfig c = small(CellVariant::SimpleRnn, false, 1);
  Rng rng(1);
  const ParameterSet p = init_network(c, rng);
  auto f = forward(p, c, Tensor({3, 5}));
  ForwardTape tape = std::move(f.tape);
  backward(p, c, std::move(tape), Tensor({3, 2}));
  EXPECT_THROW(backward(p, c, std::move(tape), Tensor({3, 2})), Error);
}

TEST(Backward, RejectsMismatchedParams) {
  const NetworkConfig c = small(CellVariant::Gru, false, 1);
  NetworkConfig other = c;
  other.hidden_size = 6;
  Rng rng(1);
  const ParameterSet p = init_network(c, rng);
  const ParameterSet q = init_network(other, rng);
  auto f = forward(p, c, Tensor({3, 5}));
  EXPECT_THROW(backward(q, other, std::move(f.tape), Tensor({3, 2})), Error);
}
