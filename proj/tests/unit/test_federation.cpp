// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fedseq/dataset.hpp"
#include "fedseq/error.hpp"
#include "fedseq/federation.hpp"
#include "fedseq/harness.hpp"
#include "fedseq/rng.hpp"
#include "fedseq/transport.hpp"

using namespace fedseq;

namespace {

ParameterSet scalars(std::initializer_list<double> v) {
  ParameterSet p;
  p.add("w", Tensor::vector(v));
  return p;
}

ParameterSet random_params(Rng& rng) {
  ParameterSet p;
  p.add("a", uniform_init(rng, {3, 4}, -1, 1));
  p.add("b", uniform_init(rng, {5}, -1, 1));
  return p;
}

NetworkConfig tiny_network() {
  NetworkConfig c;
  c.cell = {CellVariant::Gru, true};
  c.input_size = 6;
  c.hidden_size = 4;
  c.fc_hidden = 3;
  c.sequence_length = 10;
  c.learning_rate = 1e-3;
  return c;
}

std::vector<Window> windows_for(const FeatureSequence& s, std::size_t len) { return window(s, len, len); }

ErrorCode protocol_error(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(0);
}

}  // namespace

TEST(Aggregate, TwoClientMean) {
  const std::vector<ClientUpdate> u{{"A", scalars({1, 3}), 1}, {"B", scalars({3, 5}), 1}};
  EXPECT_EQ(aggregate(u, AggregationRule::Mean), scalars({2, 4}));
}

TEST(Aggregate, WeightedMean) {
  const std::vector<ClientUpdate> u{{"A", scalars({0}), 1}, {"B", scalars({4}), 3}};
  EXPECT_EQ(aggregate(u, AggregationRule::WeightedMean).values(0)[0], 3.0);
}

TEST(Aggregate, SingleClientIsBitwiseIdentity) {
  Rng rng(1);
  const ParameterSet p = random_params(rng);
  for (auto rule : {AggregationRule::Mean, AggregationRule::WeightedMean}) {
    const std::vector<ClientUpdate> u{{"A", p, 7}};
    EXPECT_TRUE(bitwise_equal(aggregate(u, rule), p));
  }
}

TEST(Aggregate, MatchesNaiveOracleAndIsPermutationInvariant) {
  Rng rng(2);
  std::vector<ClientUpdate> u;
  for (int i = 0; i < 5; ++i) u.push_back({"C" + std::to_string(i), random_params(rng), 1 + rng.below(50)});
  for (auto rule : {AggregationRule::Mean, AggregationRule::WeightedMean}) {
    const ParameterSet got = aggregate(u, rule);
    for (std::size_t e = 0; e < got.size(); ++e)
      for (std::size_t j = 0; j < got.values(e).size(); ++j) {
        double num = 0, den = 0;
        for (const auto& x : u) {
          const double w = rule == AggregationRule::Mean ? 1.0 : static_cast<double>(x.n_samples);
          num += w * x.params.values(e)[j];
          den += w;
        }
        EXPECT_NEAR(got.values(e)[j], num / den, 1e-12);
      }
    std::vector<ClientUpdate> shuffled = u;
    for (int trial = 0; trial < 10; ++trial) {
      for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
      EXPECT_TRUE(bitwise_equal(aggregate(shuffled, rule), got));
    }
  }
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(aggregate(std::vector<ClientUpdate>{}, AggregationRule::Mean), Error);
  std::vector<ClientUpdate> mismatch{{"A", scalars({1}), 1}, {"B", scalars({1, 2}), 1}};
  EXPECT_THROW(aggregate(mismatch, AggregationRule::Mean), Error);
  std::vector<ClientUpdate> zero{{"A", scalars({1}), 0}, {"B", scalars({2}), 1}};
  EXPECT_THROW(aggregate(zero, AggregationRule::WeightedMean), Error);
}

TEST(Server, PhasesAndBarrier) {
  FederationServer s(scalars({0}), {"A", "B"}, 2, AggregationRule::Mean);
  EXPECT_EQ(s.phase(), ServerPhase::WaitRegister);
  EXPECT_EQ(protocol_error([&] { s.begin_round(); }), ErrorCode::Protocol);
  s.on_register(RoundMessage::make_register("A"));
  EXPECT_EQ(protocol_error([&] { s.on_register(RoundMessage::make_register("Z")); }), ErrorCode::Protocol);
  s.on_register(RoundMessage::make_register("B"));
  EXPECT_EQ(s.phase(), ServerPhase::Broadcast);

  const RoundMessage g = s.begin_round();
  EXPECT_EQ(g.tag, MessageTag::Global);
  EXPECT_EQ(s.phase(), ServerPhase::Collect);
  s.on_update(RoundMessage::make_update(0, "A", scalars({2}), 1));
  // Barrier: one of two updates is not enough.
  EXPECT_EQ(protocol_error([&] { s.aggregate_round(); }), ErrorCode::Protocol);
  EXPECT_EQ(protocol_error([&] { s.on_update(RoundMessage::make_update(0, "A", scalars({2}), 1)); }),
            ErrorCode::Protocol);
  EXPECT_EQ(protocol_error([&] { s.on_update(RoundMessage::make_update(1, "B", scalars({2}), 1)); }),
            ErrorCode::Protocol);
  s.on_update(RoundMessage::make_update(0, "B", scalars({4}), 1));
  EXPECT_EQ(s.phase(), ServerPhase::Aggregate);
  s.aggregate_round();
  EXPECT_EQ(s.round(), 1u);
  EXPECT_EQ(s.global(), scalars({3}));

  s.begin_round();
  EXPECT_EQ(protocol_error([&] { s.on_update(RoundMessage::make_update(0, "A", scalars({2}), 1)); }),
            ErrorCode::Protocol);  // stale round
  s.on_update(RoundMessage::make_update(1, "A", scalars({2}), 1));
  s.on_update(RoundMessage::make_update(1, "B", scalars({2}), 1));
  s.aggregate_round();
  EXPECT_EQ(s.phase(), ServerPhase::Finished);
  EXPECT_EQ(s.done_message().tag, MessageTag::Done);
}

TEST(Server, OpenServerAcceptsFirstClients) {
  FederationServer s = FederationServer::open(scalars({0}), 2, 1, AggregationRule::Mean);
  s.on_register(RoundMessage::make_register("X"));
  s.on_register(RoundMessage::make_register("Y"));
  EXPECT_EQ(s.expected_clients(), (std::set<std::string>{"X", "Y"}));
  EXPECT_EQ(s.phase(), ServerPhase::Broadcast);
}

TEST(Server, UpdateWithWrongLayoutIsRejected) {
  FederationServer s(scalars({0}), {"A"}, 1, AggregationRule::Mean);
  s.on_register(RoundMessage::make_register("A"));
  s.begin_round();
  EXPECT_THROW(s.on_update(RoundMessage::make_update(0, "A", scalars({1, 2}), 1)), Error);
}

TEST(Client, ZeroEpochsReturnsGlobal) {
  const auto data = generate_synthetic(1, 40, 3, 6);
  LocalTrainingOptions opt;
  opt.epochs_per_round = 0;
  FederationClient c("P01", tiny_network(), windows_for(data[0], 10), opt);
  Rng rng(1);
  const ParameterSet g = init_network(tiny_network(), rng);
  auto [w, n] = c.local_train(g);
  EXPECT_TRUE(bitwise_equal(w, g));
  EXPECT_EQ(n, 4u);
}

TEST(Client, EmptyDataIsAConfigurationError) {
  EXPECT_THROW(FederationClient("P01", tiny_network(), {}, {}), Error);
}

TEST(Client, LocalTrainingIsDeterministic) {
  const auto data = generate_synthetic(1, 60, 3, 6);
  Rng rng(1);
  const ParameterSet g = init_network(tiny_network(), rng);
  FederationClient a("P01", tiny_network(), windows_for(data[0], 10), {});
  FederationClient b("P01", tiny_network(), windows_for(data[0], 10), {});
  EXPECT_TRUE(bitwise_equal(a.local_train(g).first, b.local_train(g).first));
}

TEST(Client, OneRoundUsuallyLowersTheLoss) {
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    // Noise-free-ish client data: the synthetic functional with small lr.
    auto data = generate_synthetic(1, 200, seed, 6);
    NetworkConfig net = tiny_network();
    net.learning_rate = 1e-3;
    const auto w = windows_for(data[0], 10);
    Rng rng(seed);
    const ParameterSet g = init_network(net, rng);
    FederationClient c("P01", net, w, {});
    const double before = evaluate_loss(g, net, w);
    const double after = evaluate_loss(c.local_train(g).first, net, w);
    decreased += after < before;
  }
  EXPECT_GE(decreased, 18);
}

TEST(Client, MessageHandling) {
  const auto data = generate_synthetic(1, 40, 3, 6);
  FederationClient c("P01", tiny_network(), windows_for(data[0], 10), {});
  EXPECT_EQ(c.register_message().tag, MessageTag::Register);
  Rng rng(1);
  const auto reply = c.on_message(RoundMessage::make_global(5, init_network(tiny_network(), rng)));
  ASSERT_TRUE(reply.has_value());
  EXPECT_EQ(reply->tag, MessageTag::Update);
  EXPECT_EQ(reply->round, 5u);
  EXPECT_EQ(reply->n_samples, 4u);
  EXPECT_FALSE(c.on_message(RoundMessage::make_done(6)).has_value());
  EXPECT_EQ(c.phase(), ClientPhase::Stopped);
}

TEST(Client, AdoptsArchitectureFromGlobal) {
  const auto data = generate_synthetic(1, 40, 3, 6);
  NetworkConfig placeholder;
  placeholder.input_size = 6;
  placeholder.sequence_length = 10;
  LocalTrainingOptions opt;
  opt.adopt_architecture = true;
  FederationClient c("P01", placeholder, windows_for(data[0], 10), opt);
  Rng rng(1);
  const ParameterSet g = init_network(tiny_network(), rng);
  const ParameterSet w = c.local_train(g).first;
  EXPECT_TRUE(w.same_layout(g));
  EXPECT_EQ(c.network().hidden_size, 4u);
}

namespace {

struct Cohort {
  std::vector<std::unique_ptr<FederationClient>> clients;
  std::vector<FederationClient*> pointers() const {
    std::vector<FederationClient*> out;
    for (const auto& c : clients) out.push_back(c.get());
    return out;
  }
  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& c : clients) out.push_back(c->id());
    return out;
  }
};

Cohort cohort(const std::vector<FeatureSequence>& data) {
  Cohort c;
  for (const auto& s : data)
    c.clients.push_back(std::make_unique<FederationClient>(s.participant_id, tiny_network(), windows_for(s, 10),
                                                           LocalTrainingOptions{}));
  return c;
}

ParameterSet run_sim(const std::vector<FeatureSequence>& data, std::uint32_t rounds,
                     SimulatedTransport::Execution exec, MessageObserver observer = {}) {
  Cohort c = cohort(data);
  Rng rng(99);
  FederationServer server(init_network(tiny_network(), rng), c.ids(), rounds, AggregationRule::Mean);
  SimulatedTransport t(c.pointers(), exec, std::move(observer));
  t.connect();
  return run_federation(server, t, std::chrono::seconds(30));
}

}  // namespace

TEST(Simulated, ThreeClientsTwoRoundsAreReproducible) {
  const auto data = generate_synthetic(3, 60, 4, 6);
  const ParameterSet a = run_sim(data, 2, SimulatedTransport::Execution::Sequential);
  const ParameterSet b = run_sim(data, 2, SimulatedTransport::Execution::Sequential);
  const ParameterSet c = run_sim(data, 2, SimulatedTransport::Execution::Threaded);
  EXPECT_TRUE(bitwise_equal(a, b));
  EXPECT_TRUE(bitwise_equal(a, c));
}

TEST(Simulated, OneClientRoundEqualsItsLocalTraining) {
  const auto data = generate_synthetic(1, 60, 4, 6);
  Rng rng(99);
  const ParameterSet init = init_network(tiny_network(), rng);
  FederationClient solo("P01", tiny_network(), windows_for(data[0], 10), {});
  const ParameterSet expected = solo.local_train(init).first;
  EXPECT_TRUE(bitwise_equal(run_sim(data, 1, SimulatedTransport::Execution::Sequential), expected));
}

TEST(Simulated, OnlyWeightsCrossTheTransport) {
  const auto data = generate_synthetic(2, 60, 4, 6);
  Rng rng(99);
  const ParameterSet layout = init_network(tiny_network(), rng);
  std::size_t payloads = 0;
  run_sim(data, 2, SimulatedTransport::Execution::Sequential,
          [&](MessageDirection, const std::string&, const RoundMessage& m) {
            if (!m.payload) return;
            ++payloads;
            // Exactly the model's tensors, nothing shaped by the local data.
            ASSERT_TRUE(m.payload->same_layout(layout));
            EXPECT_EQ(m.payload->element_count(), layout.element_count());
          });
  EXPECT_EQ(payloads, 2u * (2 + 2));  // per round: one GLOBAL and one UPDATE per client
}

TEST(Simulated, SilentClientTimesOut) {
  const auto data = generate_synthetic(2, 60, 4, 6);
  Cohort c = cohort(data);
  Rng rng(1);
  FederationServer server(init_network(tiny_network(), rng), c.ids(), 1, AggregationRule::Mean);
  SimulatedTransport t(c.pointers());
  t.set_unresponsive("P02");
  t.connect();
  try {
    run_federation(server, t, std::chrono::milliseconds(200));
    FAIL() << "expected a timeout";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Timeout);
  }
  EXPECT_EQ(server.round(), 0u);  // no partial aggregation
}
