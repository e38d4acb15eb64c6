// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedseq/optim.hpp"
#include "fedseq/parameter_set.hpp"
#include "fedseq/recurrent.hpp"
#include "fedseq/wire.hpp"

namespace fedseq {

enum class AggregationRule { Mean, WeightedMean };

std::string to_string(AggregationRule rule);
AggregationRule parse_aggregation_rule(const std::string& text);

struct ClientUpdate {
  std::string client_id;
  ParameterSet params;
  std::uint64_t n_samples = 0;
};

/// Element-wise (optionally n_samples-weighted) mean of client weights.
///
/// Updates are combined in client_id order, so the result does not depend on
/// the order of the input. The mean is accumulated as
///   ref + sum_i w_i (x_i - ref) / sum_i w_i
/// with ref the first update, which returns ref bit-for-bit whenever every
/// update equals it (in particular for a single client).
ParameterSet aggregate(std::span<const ClientUpdate> updates, AggregationRule rule);

enum class ServerPhase { WaitRegister, Broadcast, Collect, Aggregate, Finished };
const char* to_string(ServerPhase phase);

/// Synchronous parameter server:
///   WAIT_REGISTER -> (BROADCAST -> COLLECT -> AGGREGATE)* -> FINISHED.
/// Aggregation happens only once an update from every expected client has
/// arrived for the current round.
class FederationServer {
 public:
  FederationServer(ParameterSet initial, std::vector<std::string> expected_clients, std::uint32_t total_rounds,
                   AggregationRule rule);

  /// Unknown clients are rejected; with an empty expected set, the first
  /// `capacity` distinct ids that register become the expected set.
  static FederationServer open(ParameterSet initial, std::size_t capacity, std::uint32_t total_rounds,
                               AggregationRule rule);

  void on_register(const RoundMessage& message);
  /// BROADCAST -> COLLECT. The returned message goes to every client.
  RoundMessage begin_round();
  void on_update(const RoundMessage& message);
  /// AGGREGATE -> BROADCAST (or FINISHED after the last round).
  void aggregate_round();
  RoundMessage done_message() const;

  ServerPhase phase() const noexcept { return phase_; }
  std::uint32_t round() const noexcept { return round_; }
  std::uint32_t total_rounds() const noexcept { return total_rounds_; }
  const ParameterSet& global() const noexcept { return global_; }
  const std::set<std::string>& expected_clients() const noexcept { return expected_; }
  const std::set<std::string>& registered_clients() const noexcept { return registered_; }
  std::size_t received_count() const noexcept { return received_.size(); }

 private:
  FederationServer() = default;

  ServerPhase phase_ = ServerPhase::WaitRegister;
  std::set<std::string> expected_;
  std::set<std::string> registered_;
  std::size_t capacity_ = 0;
  std::map<std::string, ClientUpdate> received_;
  ParameterSet global_;
  std::uint32_t round_ = 0;
  std::uint32_t total_rounds_ = 0;
  AggregationRule rule_ = AggregationRule::Mean;
};

enum class ClientPhase { Registering, Training, Reporting, Stopped };
const char* to_string(ClientPhase phase);

enum class OptimizerStatePolicy {
  Persistent,      // Adam moments carry over between rounds
  ResetEachRound,  // fresh Adam state every round
};

struct LocalTrainingOptions {
  std::size_t epochs_per_round = 1;
  OptimizerStatePolicy optimizer_state = OptimizerStatePolicy::Persistent;
  TrainOptions train;
  /// Take the architecture from the first GLOBAL payload instead of the
  /// constructor's config (sequence length and learning rate are kept).
  bool adopt_architecture = false;
};

/// A participant's local trainer. It holds its windows and optimizer state;
/// only weights ever leave it.
class FederationClient {
 public:
  FederationClient(std::string client_id, NetworkConfig network, std::vector<Window> local_data,
                   LocalTrainingOptions options);

  RoundMessage register_message();
  /// GLOBAL -> local training -> UPDATE; DONE -> stopped (no reply).
  std::optional<RoundMessage> on_message(const RoundMessage& message);

  /// Starts from the given global weights, runs epochs_per_round passes over
  /// the local windows in order and returns (weights, window count).
  std::pair<ParameterSet, std::uint64_t> local_train(const ParameterSet& global);

  const std::string& id() const noexcept { return id_; }
  ClientPhase phase() const noexcept { return phase_; }
  std::uint32_t round() const noexcept { return round_; }
  const ParameterSet& local_params() const noexcept { return local_params_; }
  const NetworkConfig& network() const noexcept { return network_; }
  std::size_t window_count() const noexcept { return data_.size(); }
  /// Seconds spent inside local_train, summed over rounds.
  double training_seconds() const noexcept { return training_seconds_; }

 private:
  std::string id_;
  NetworkConfig network_;
  std::vector<Window> data_;
  LocalTrainingOptions options_;
  ClientPhase phase_ = ClientPhase::Registering;
  ParameterSet local_params_;
  std::optional<AdamState> optimizer_;
  std::uint32_t round_ = 0;
  double training_seconds_ = 0.0;
};

/// Free-function form of FederationClient::local_train.
std::pair<ParameterSet, std::uint64_t> local_train(FederationClient& client, const ParameterSet& global);

/// Server side of a message transport.
class ServerTransport {
 public:
  virtual ~ServerTransport() = default;
  virtual void send(const std::string& client_id, const RoundMessage& message) = 0;
  /// Next message from any client. Throws ErrorCode::Timeout if none arrives
  /// in time.
  virtual RoundMessage receive(std::chrono::milliseconds timeout) = 0;
};

/// Receives REGISTER messages until every expected client is present.
void run_registration(FederationServer& server, ServerTransport& transport, std::chrono::milliseconds timeout);

/// One synchronous round: broadcast GLOBAL, collect one UPDATE per client,
/// aggregate. A client that stays silent past the timeout aborts the run.
void run_round(FederationServer& server, ServerTransport& transport, std::chrono::milliseconds timeout);

using RoundObserver = std::function<void(std::uint32_t round, const ParameterSet& global)>;

/// Registration, every round, then DONE to all clients. Returns the final
/// global weights.
ParameterSet run_federation(FederationServer& server, ServerTransport& transport, std::chrono::milliseconds timeout,
                            const RoundObserver& on_round = {});

}  // namespace fedseq
