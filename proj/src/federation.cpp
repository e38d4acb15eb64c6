// SPDX-License-Identifier: Apache-2.0
#include "fedseq/federation.hpp"

#include <algorithm>
#include <chrono>

#include "fedseq/error.hpp"

namespace fedseq {

std::string to_string(AggregationRule rule) {
  return rule == AggregationRule::Mean ? "mean" : "weighted_mean";
}

AggregationRule parse_aggregation_rule(const std::string& text) {
  if (text == "mean") return AggregationRule::Mean;
  if (text == "weighted_mean" || text == "weighted") return AggregationRule::WeightedMean;
  fail(ErrorCode::InvalidArgument, "unknown aggregation rule '" + text + "' (expected mean or weighted_mean)");
}

ParameterSet aggregate(std::span<const ClientUpdate> updates, AggregationRule rule) {
  require(!updates.empty(), ErrorCode::InvalidArgument, "aggregate: no updates");
  std::vector<const ClientUpdate*> order;
  order.reserve(updates.size());
  for (const auto& u : updates) order.push_back(&u);
  std::sort(order.begin(), order.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    require(order[i]->client_id != order[i - 1]->client_id, ErrorCode::InvalidArgument,
            "aggregate: duplicate update from client " + order[i]->client_id);
  }

  const ParameterSet& ref = order.front()->params;
  std::vector<double> weights(order.size(), 1.0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    require_same_layout(ref, order[i]->params, "aggregate");
    if (rule == AggregationRule::WeightedMean) {
      require(order[i]->n_samples > 0, ErrorCode::InvalidArgument,
              "aggregate: client " + order[i]->client_id + " has a non-positive weight");
      weights[i] = static_cast<double>(order[i]->n_samples);
    }
  }
  double total = 0.0;
  for (double w : weights) total += w;

  ParameterSet out = ref;
  if (order.size() == 1) return out;
  for (std::size_t e = 0; e < out.size(); ++e) {
    auto dst = out.values(e);
    auto base = ref.values(e);
    std::vector<double> acc(dst.size(), 0.0);
    for (std::size_t i = 1; i < order.size(); ++i) {
      auto src = order[i]->params.values(e);
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += weights[i] * (src[j] - base[j]);
    }
    for (std::size_t j = 0; j < acc.size(); ++j) dst[j] = base[j] + acc[j] / total;
  }
  require(out.all_finite(), ErrorCode::NonFinite, "aggregate produced non-finite weights");
  return out;
}

const char* to_string(ServerPhase phase) {
  switch (phase) {
    case ServerPhase::WaitRegister: return "WAIT_REGISTER";
    case ServerPhase::Broadcast: return "BROADCAST";
    case ServerPhase::Collect: return "COLLECT";
    case ServerPhase::Aggregate: return "AGGREGATE";
    case ServerPhase::Finished: return "FINISHED";
  }
  return "?";
}

const char* to_string(ClientPhase phase) {
  switch (phase) {
    case ClientPhase::Registering: return "REGISTERING";
    case ClientPhase::Training: return "TRAINING";
    case ClientPhase::Reporting: return "REPORTING";
    case ClientPhase::Stopped: return "STOPPED";
  }
  return "?";
}

namespace {

void require_phase(ServerPhase actual, ServerPhase wanted, const char* action) {
  if (actual != wanted) {
    fail(ErrorCode::Protocol, std::string(action) + " in phase " + to_string(actual) + " (expected " +
                                  to_string(wanted) + ")");
  }
}

}  // namespace

FederationServer::FederationServer(ParameterSet initial, std::vector<std::string> expected_clients,
                                   std::uint32_t total_rounds, AggregationRule rule)
    : expected_(expected_clients.begin(), expected_clients.end()),
      capacity_(expected_clients.size()),
      global_(std::move(initial)),
      total_rounds_(total_rounds),
      rule_(rule) {
  require(!expected_.empty(), ErrorCode::InvalidArgument, "federation needs at least one client");
  require(expected_.size() == expected_clients.size(), ErrorCode::InvalidArgument, "client ids must be unique");
  require(!global_.empty(), ErrorCode::InvalidArgument, "initial global weights are empty");
}

FederationServer FederationServer::open(ParameterSet initial, std::size_t capacity, std::uint32_t total_rounds,
                                        AggregationRule rule) {
  require(capacity > 0, ErrorCode::InvalidArgument, "federation needs at least one client");
  require(!initial.empty(), ErrorCode::InvalidArgument, "initial global weights are empty");
  FederationServer s;
  s.capacity_ = capacity;
  s.global_ = std::move(initial);
  s.total_rounds_ = total_rounds;
  s.rule_ = rule;
  return s;
}

void FederationServer::on_register(const RoundMessage& message) {
  require_phase(phase_, ServerPhase::WaitRegister, "REGISTER");
  require(message.tag == MessageTag::Register, ErrorCode::Protocol,
          std::string("expected REGISTER, got ") + to_string(message.tag));
  const std::string& id = message.client_id;
  require(!registered_.contains(id), ErrorCode::Protocol, "client " + id + " registered twice");
  if (expected_.size() < capacity_ && !expected_.contains(id)) expected_.insert(id);
  require(expected_.contains(id), ErrorCode::Protocol, "unexpected client " + id);
  registered_.insert(id);
  if (registered_.size() == capacity_) {
    phase_ = total_rounds_ == 0 ? ServerPhase::Finished : ServerPhase::Broadcast;
  }
}

RoundMessage FederationServer::begin_round() {
  require_phase(phase_, ServerPhase::Broadcast, "begin_round");
  received_.clear();
  phase_ = ServerPhase::Collect;
  return RoundMessage::make_global(round_, global_);
}

void FederationServer::on_update(const RoundMessage& message) {
  require_phase(phase_, ServerPhase::Collect, "UPDATE");
  require(message.tag == MessageTag::Update, ErrorCode::Protocol,
          std::string("expected UPDATE, got ") + to_string(message.tag));
  const std::string& id = message.client_id;
  require(expected_.contains(id), ErrorCode::Protocol, "update from unknown client " + id);
  if (message.round != round_) {
    fail(ErrorCode::Protocol, "stale update from " + id + ": round " + std::to_string(message.round) +
                                  ", server is in round " + std::to_string(round_));
  }
  require(!received_.contains(id), ErrorCode::Protocol, "duplicate update from " + id + " in round " +
                                                            std::to_string(round_));
  require(message.payload.has_value(), ErrorCode::Protocol, "update without payload");
  require_same_layout(global_, *message.payload, "update from " + id);
  if (rule_ == AggregationRule::WeightedMean) {
    require(message.n_samples > 0, ErrorCode::InvalidArgument, "update from " + id + " has zero samples");
  }
  received_.emplace(id, ClientUpdate{id, *message.payload, message.n_samples});
  if (received_.size() == expected_.size()) phase_ = ServerPhase::Aggregate;
}

void FederationServer::aggregate_round() {
  require_phase(phase_, ServerPhase::Aggregate, "aggregate");
  // Barrier: every expected client, and nobody else.
  require(received_.size() == expected_.size(), ErrorCode::Internal, "aggregation before the round barrier");
  std::vector<ClientUpdate> updates;
  updates.reserve(received_.size());
  for (auto& [id, update] : received_) {
    require(expected_.contains(id), ErrorCode::Internal, "aggregation with an unexpected client");
    updates.push_back(std::move(update));
  }
  received_.clear();
  global_ = aggregate(updates, rule_);
  ++round_;
  phase_ = round_ >= total_rounds_ ? ServerPhase::Finished : ServerPhase::Broadcast;
}

RoundMessage FederationServer::done_message() const { return RoundMessage::make_done(round_); }

FederationClient::FederationClient(std::string client_id, NetworkConfig network, std::vector<Window> local_data,
                                   LocalTrainingOptions options)
    : id_(std::move(client_id)), network_(network), data_(std::move(local_data)), options_(options) {
  require(!id_.empty(), ErrorCode::InvalidArgument, "client id must not be empty");
  require(!data_.empty(), ErrorCode::InvalidArgument,
          "client " + id_ + " has no training windows (sequence longer than the recording?)");
  network_.validate();
}

RoundMessage FederationClient::register_message() {
  require(phase_ == ClientPhase::Registering, ErrorCode::Protocol, "client " + id_ + " already registered");
  phase_ = ClientPhase::Training;
  return RoundMessage::make_register(id_);
}

std::pair<ParameterSet, std::uint64_t> FederationClient::local_train(const ParameterSet& global) {
  if (!local_params_.empty()) {
    require_same_layout(local_params_, global, "client " + id_ + " global weights");
  } else if (options_.adopt_architecture) {
    NetworkConfig adopted = infer_network_config(global);
    adopted.sequence_length = network_.sequence_length;
    adopted.learning_rate = network_.learning_rate;
    network_ = adopted;
  }
  const auto start = std::chrono::steady_clock::now();
  local_params_ = global;
  if (!optimizer_ || options_.optimizer_state == OptimizerStatePolicy::ResetEachRound) {
    optimizer_ = AdamState::for_params(global, network_.learning_rate);
  }
  for (std::size_t epoch = 0; epoch < options_.epochs_per_round; ++epoch) {
    train_epoch(local_params_, network_, *optimizer_, data_, options_.train);
  }
  training_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {local_params_, static_cast<std::uint64_t>(data_.size())};
}

std::optional<RoundMessage> FederationClient::on_message(const RoundMessage& message) {
  switch (message.tag) {
    case MessageTag::Global: {
      require(phase_ == ClientPhase::Training, ErrorCode::Protocol,
              "client " + id_ + " received GLOBAL in phase " + to_string(phase_));
      round_ = message.round;
      auto [weights, n] = local_train(*message.payload);
      phase_ = ClientPhase::Reporting;
      RoundMessage reply = RoundMessage::make_update(round_, id_, std::move(weights), n);
      phase_ = ClientPhase::Training;
      return reply;
    }
    case MessageTag::Done:
      phase_ = ClientPhase::Stopped;
      return std::nullopt;
    default:
      fail(ErrorCode::Protocol, "client " + id_ + " cannot handle " + to_string(message.tag));
  }
}

std::pair<ParameterSet, std::uint64_t> local_train(FederationClient& client, const ParameterSet& global) {
  return client.local_train(global);
}

void run_registration(FederationServer& server, ServerTransport& transport, std::chrono::milliseconds timeout) {
  while (server.phase() == ServerPhase::WaitRegister) server.on_register(transport.receive(timeout));
}

void run_round(FederationServer& server, ServerTransport& transport, std::chrono::milliseconds timeout) {
  require(server.phase() == ServerPhase::Broadcast, ErrorCode::Protocol,
          std::string("run_round in phase ") + to_string(server.phase()));
  const RoundMessage global = server.begin_round();
  for (const auto& id : server.expected_clients()) transport.send(id, global);
  while (server.phase() == ServerPhase::Collect) server.on_update(transport.receive(timeout));
  server.aggregate_round();
}

ParameterSet run_federation(FederationServer& server, ServerTransport& transport, std::chrono::milliseconds timeout,
                            const RoundObserver& on_round) {
  run_registration(server, transport, timeout);
  while (server.phase() == ServerPhase::Broadcast) {
    run_round(server, transport, timeout);
    if (on_round) on_round(server.round(), server.global());
  }
  const RoundMessage done = server.done_message();
  for (const auto& id : server.expected_clients()) transport.send(id, done);
  return server.global();
}

}  // namespace fedseq
