// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fedseq/parameter_set.hpp"
#include "fedseq/tensor.hpp"

namespace fedseq {

class Rng;

enum class CellVariant { SimpleRnn, Gru, Lstm };

struct CellKind {
  CellVariant variant = CellVariant::Gru;
  bool bidirectional = true;
  friend bool operator==(const CellKind&, const CellKind&) = default;
};

std::string to_string(CellVariant variant);
CellVariant parse_cell_variant(const std::string& text);

/// "RNN", "BiGRU", "BiLSTM", ...
std::string network_label(const CellKind& cell);

/// Number of stacked gate blocks in the cell's weight matrices.
std::size_t gate_count(CellVariant variant);

struct NetworkConfig {
  CellKind cell;
  std::size_t input_size = 40;
  std::size_t hidden_size = 64;
  std::size_t num_layers = 1;
  std::size_t fc_hidden = 10;
  std::size_t outputs = 2;
  std::size_t sequence_length = 100;
  double learning_rate = 1e-4;

  void validate() const;
  std::size_t directions() const { return cell.bidirectional ? 2 : 1; }
  /// Width of each layer's per-timestep output (2h when bidirectional).
  std::size_t layer_output_width() const { return hidden_size * directions(); }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Parameter names, in canonical order:
///   rnn.l<layer>.<fwd|bwd>.w_ih   [G*h, in]
///   rnn.l<layer>.<fwd|bwd>.w_hh   [G*h, h]
///   rnn.l<layer>.<fwd|bwd>.b      [G*h]        (SimpleRNN, LSTM)
///   rnn.l<layer>.<fwd|bwd>.b_ih / .b_hh        (GRU)
///   head.fc.w [fc_hidden, D]  head.fc.b  head.out.w [outputs, fc_hidden]  head.out.b
/// Gate blocks are stacked in the order GRU (r, z, n) and LSTM (i, f, g, o).
ParameterSet init_network(const NetworkConfig& config, Rng& rng);

/// Zero-valued parameters with the layout init_network would produce.
ParameterSet network_layout(const NetworkConfig& config);

/// Reconstructs the architecture from a parameter layout, for peers that only
/// receive weights. Training hyper-parameters are left at their defaults.
NetworkConfig infer_network_config(const ParameterSet& params);

/// Activations cached by forward for a single backward pass. backward
/// consumes it; a consumed (or default-constructed) tape has steps == 0.
struct ForwardTape {
  struct Direction {
    Tensor gates;    // [T, G*h] post-activation gate values, time-indexed
    Tensor hidden;   // [T, h]
    Tensor cell;     // [T, h] LSTM only
    Tensor recur_n;  // [T, h] GRU only: W_hn h_prev + b_hn
  };
  struct Layer {
    Tensor input;  // [T, in]
    std::vector<Direction> directions;
  };

  std::size_t steps = 0;
  std::uint64_t layout_id = 0;
  std::vector<Layer> layers;
  Tensor head_input;   // [T, D]
  Tensor head_hidden;  // [T, fc_hidden] after tanh

  ForwardTape() = default;
  ForwardTape(ForwardTape&& other) noexcept;
  ForwardTape& operator=(ForwardTape&& other) noexcept;
  ForwardTape(const ForwardTape&) = delete;
  ForwardTape& operator=(const ForwardTape&) = delete;
};

struct ForwardResult {
  Tensor prediction;  // [T, outputs]
  ForwardTape tape;
};

/// Many-to-many forward pass: one (valence, arousal) prediction per frame.
/// Accepts 1 <= T <= sequence_length.
ForwardResult forward(const ParameterSet& params, const NetworkConfig& config, const Tensor& x);

/// Forward pass without keeping the tape; any T >= 1.
Tensor predict(const ParameterSet& params, const NetworkConfig& config, const Tensor& x);

/// BPTT. Consumes the tape. Returns gradients in the layout of params.
ParameterSet backward(const ParameterSet& params, const NetworkConfig& config, ForwardTape&& tape,
                      const Tensor& grad_y);

/// Per-timestep hidden states of the last recurrent layer, [T, D]. Exposed
/// for inspection and tests.
Tensor last_layer_states(const ParameterSet& params, const NetworkConfig& config, const Tensor& x);

}  // namespace fedseq
