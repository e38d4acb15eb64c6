// SPDX-License-Identifier: Apache-2.0
#include "fedseq/recurrent.hpp"

#include <algorithm>
#include <cmath>

#include "fedseq/error.hpp"
#include "fedseq/rng.hpp"

namespace fedseq {
namespace {

std::string direction_prefix(std::size_t layer, std::size_t dir) {
  return "rnn.l" + std::to_string(layer) + (dir == 0 ? ".fwd" : ".bwd");
}

std::size_t layer_input_width(const NetworkConfig& config, std::size_t layer) {
  return layer == 0 ? config.input_size : config.layer_output_width();
}

// Read-only view of one direction's weights.
struct CellWeights {
  std::size_t hidden = 0;
  std::size_t in = 0;
  std::size_t rows = 0;  // gates * hidden
  const double* w_ih = nullptr;
  const double* w_hh = nullptr;
  const double* b_in = nullptr;   // b (RNN, LSTM) or b_ih (GRU)
  const double* b_rec = nullptr;  // b_hh (GRU), else null
};

struct CellIndices {
  std::size_t w_ih, w_hh, b_in, b_rec;
  bool has_rec_bias;
};

CellIndices cell_indices(const ParameterSet& params, CellVariant variant, std::size_t layer, std::size_t dir) {
  const std::string p = direction_prefix(layer, dir);
  CellIndices idx{};
  idx.w_ih = params.index_of(p + ".w_ih");
  idx.w_hh = params.index_of(p + ".w_hh");
  if (variant == CellVariant::Gru) {
    idx.b_in = params.index_of(p + ".b_ih");
    idx.b_rec = params.index_of(p + ".b_hh");
    idx.has_rec_bias = true;
  } else {
    idx.b_in = params.index_of(p + ".b");
    idx.b_rec = 0;
    idx.has_rec_bias = false;
  }
  return idx;
}

CellWeights cell_weights(const ParameterSet& params, const NetworkConfig& config, std::size_t layer,
                         std::size_t dir) {
  const CellIndices idx = cell_indices(params, config.cell.variant, layer, dir);
  CellWeights w;
  w.hidden = config.hidden_size;
  w.in = layer_input_width(config, layer);
  w.rows = gate_count(config.cell.variant) * w.hidden;
  w.w_ih = params.values(idx.w_ih).data();
  w.w_hh = params.values(idx.w_hh).data();
  w.b_in = params.values(idx.b_in).data();
  w.b_rec = idx.has_rec_bias ? params.values(idx.b_rec).data() : nullptr;
  return w;
}

// out[cols] += scale * row[cols]
inline void axpy(double* out, const double* row, double scale, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += scale * row[i];
}

std::vector<double> transposed(const double* m, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = m[r * cols + c];
  return out;
}

void run_direction(CellVariant variant, const CellWeights& w, const Tensor& input, bool reverse,
                   ForwardTape::Direction& out) {
  const std::size_t steps = input.rows();
  const std::size_t h = w.hidden;
  const std::size_t g = w.rows;

  const std::vector<double> wih_t = transposed(w.w_ih, g, w.in);
  const std::vector<double> whh_t = transposed(w.w_hh, g, h);

  out.gates = Tensor({steps, g});
  out.hidden = Tensor({steps, h});
  if (variant == CellVariant::Lstm) out.cell = Tensor({steps, h});
  if (variant == CellVariant::Gru) out.recur_n = Tensor({steps, h});

  std::vector<double> proj(g);
  std::vector<double> rec(g);
  std::vector<double> zeros(h, 0.0);

  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    const std::size_t t_prev = reverse ? t + 1 : t - 1;
    const double* h_prev = s == 0 ? zeros.data() : out.hidden.row(t_prev).data();

    std::copy(w.b_in, w.b_in + g, proj.begin());
    const double* x = input.row(t).data();
    for (std::size_t d = 0; d < w.in; ++d) axpy(proj.data(), wih_t.data() + d * g, x[d], g);

    if (w.b_rec != nullptr) {
      std::copy(w.b_rec, w.b_rec + g, rec.begin());
    } else {
      std::fill(rec.begin(), rec.end(), 0.0);
    }
    if (s > 0) {
      for (std::size_t j = 0; j < h; ++j) axpy(rec.data(), whh_t.data() + j * g, h_prev[j], g);
    }

    double* gates = out.gates.row(t).data();
    double* hidden = out.hidden.row(t).data();
    switch (variant) {
      case CellVariant::SimpleRnn:
        for (std::size_t i = 0; i < h; ++i) {
          gates[i] = std::tanh(proj[i] + rec[i]);
          hidden[i] = gates[i];
        }
        break;
      case CellVariant::Gru: {
        double* recur_n = out.recur_n.row(t).data();
        for (std::size_t i = 0; i < h; ++i) {
          const double r = sigmoid(proj[i] + rec[i]);
          const double z = sigmoid(proj[h + i] + rec[h + i]);
          const double n = std::tanh(proj[2 * h + i] + r * rec[2 * h + i]);
          gates[i] = r;
          gates[h + i] = z;
          gates[2 * h + i] = n;
          recur_n[i] = rec[2 * h + i];
          hidden[i] = (1.0 - z) * n + z * h_prev[i];
        }
        break;
      }
      case CellVariant::Lstm: {
        const double* c_prev = s == 0 ? zeros.data() : out.cell.row(t_prev).data();
        double* cell = out.cell.row(t).data();
        for (std::size_t k = 0; k < h; ++k) {
          const double ig = sigmoid(proj[k] + rec[k]);
          const double fg = sigmoid(proj[h + k] + rec[h + k]);
          const double gg = std::tanh(proj[2 * h + k] + rec[2 * h + k]);
          const double og = sigmoid(proj[3 * h + k] + rec[3 * h + k]);
          gates[k] = ig;
          gates[h + k] = fg;
          gates[2 * h + k] = gg;
          gates[3 * h + k] = og;
          cell[k] = fg * c_prev[k] + ig * gg;
          hidden[k] = og * std::tanh(cell[k]);
        }
        break;
      }
    }
  }
}

struct CellGrads {
  double* w_ih;
  double* w_hh;
  double* b_in;
  double* b_rec;  // GRU only
};

// d_hidden: [T, h] gradient flowing into this direction's outputs.
// d_input: [T, in] accumulated input gradient (added to); null for the first
// layer, whose input gradient is never needed.
void backprop_direction(CellVariant variant, const CellWeights& w, const Tensor& input,
                        const ForwardTape::Direction& tape, bool reverse, const Tensor& d_hidden,
                        const CellGrads& grads, Tensor* d_input) {
  const std::size_t steps = input.rows();
  const std::size_t h = w.hidden;
  const std::size_t g = w.rows;

  Tensor d_proj({steps, g});  // gradient wrt input projection (incl. input bias)
  std::vector<double> d_rec(g);
  std::vector<double> dh(h);
  std::vector<double> dh_carry(h, 0.0);
  std::vector<double> dc_carry(h, 0.0);
  std::vector<double> zeros(h, 0.0);

  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    const std::size_t t_prev = reverse ? t + 1 : t - 1;
    const double* h_prev = s == 0 ? zeros.data() : tape.hidden.row(t_prev).data();
    const double* gates = tape.gates.row(t).data();
    const double* dh_out = d_hidden.row(t).data();
    double* dp = d_proj.row(t).data();

    for (std::size_t i = 0; i < h; ++i) dh[i] = dh_out[i] + dh_carry[i];

    switch (variant) {
      case CellVariant::SimpleRnn:
        for (std::size_t i = 0; i < h; ++i) {
          const double hv = gates[i];
          dp[i] = dh[i] * (1.0 - hv * hv);
          d_rec[i] = dp[i];
        }
        std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
        break;
      case CellVariant::Gru: {
        const double* recur_n = tape.recur_n.row(t).data();
        for (std::size_t i = 0; i < h; ++i) {
          const double r = gates[i];
          const double z = gates[h + i];
          const double n = gates[2 * h + i];
          const double dn = dh[i] * (1.0 - z);
          const double dz = dh[i] * (h_prev[i] - n);
          const double dn_pre = dn * (1.0 - n * n);
          const double dr = dn_pre * recur_n[i];
          const double dr_pre = dr * r * (1.0 - r);
          const double dz_pre = dz * z * (1.0 - z);
          dp[i] = dr_pre;
          dp[h + i] = dz_pre;
          dp[2 * h + i] = dn_pre;
          d_rec[i] = dr_pre;
          d_rec[h + i] = dz_pre;
          d_rec[2 * h + i] = dn_pre * r;
          dh_carry[i] = dh[i] * z;
        }
        break;
      }
      case CellVariant::Lstm: {
        const double* cell = tape.cell.row(t).data();
        const double* c_prev = s == 0 ? zeros.data() : tape.cell.row(t_prev).data();
        for (std::size_t k = 0; k < h; ++k) {
          const double ig = gates[k];
          const double fg = gates[h + k];
          const double gg = gates[2 * h + k];
          const double og = gates[3 * h + k];
          const double tc = std::tanh(cell[k]);
          const double d_o = dh[k] * tc;
          const double dc = dc_carry[k] + dh[k] * og * (1.0 - tc * tc);
          dp[k] = dc * gg * ig * (1.0 - ig);
          dp[h + k] = dc * c_prev[k] * fg * (1.0 - fg);
          dp[2 * h + k] = dc * ig * (1.0 - gg * gg);
          dp[3 * h + k] = d_o * og * (1.0 - og);
          dc_carry[k] = dc * fg;
        }
        std::copy(dp, dp + g, d_rec.begin());
        std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
        break;
      }
    }

    if (grads.b_rec != nullptr) {
      for (std::size_t i = 0; i < g; ++i) grads.b_rec[i] += d_rec[i];
    }
    if (s > 0) {
      for (std::size_t i = 0; i < g; ++i) {
        axpy(grads.w_hh + i * h, h_prev, d_rec[i], h);
        axpy(dh_carry.data(), w.w_hh + i * h, d_rec[i], h);
      }
    }
  }

  for (std::size_t t = 0; t < steps; ++t) {
    const double* dp = d_proj.row(t).data();
    const double* x = input.row(t).data();
    double* dx = d_input != nullptr ? d_input->row(t).data() : nullptr;
    for (std::size_t i = 0; i < g; ++i) {
      grads.b_in[i] += dp[i];
      axpy(grads.w_ih + i * w.in, x, dp[i], w.in);
      if (dx != nullptr) axpy(dx, w.w_ih + i * w.in, dp[i], w.in);
    }
  }
}

ForwardResult run_forward(const ParameterSet& params, const NetworkConfig& config, const Tensor& x) {
  config.validate();
  require(x.rank() == 2, ErrorCode::ShapeMismatch, "input must be a [T, features] matrix");
  require(x.cols() == config.input_size, ErrorCode::ShapeMismatch,
          "input width " + std::to_string(x.cols()) + " does not match input_size " +
              std::to_string(config.input_size));
  require(x.all_finite(), ErrorCode::NonFinite, "input contains non-finite values");

  const std::size_t steps = x.rows();
  const std::size_t dirs = config.directions();
  const std::size_t h = config.hidden_size;

  ForwardResult result;
  ForwardTape& tape = result.tape;
  tape.steps = steps;
  tape.layout_id = params.layout_id();
  tape.layers.resize(config.num_layers);

  Tensor layer_input = x;
  for (std::size_t layer = 0; layer < config.num_layers; ++layer) {
    auto& lt = tape.layers[layer];
    lt.directions.resize(dirs);
    for (std::size_t dir = 0; dir < dirs; ++dir) {
      run_direction(config.cell.variant, cell_weights(params, config, layer, dir), layer_input, dir == 1,
                    lt.directions[dir]);
    }
    Tensor output({steps, h * dirs});
    for (std::size_t t = 0; t < steps; ++t) {
      double* dst = output.row(t).data();
      for (std::size_t dir = 0; dir < dirs; ++dir) {
        auto src = lt.directions[dir].hidden.row(t);
        std::copy(src.begin(), src.end(), dst + dir * h);
      }
    }
    lt.input = std::move(layer_input);
    layer_input = std::move(output);
  }

  const std::size_t width = config.layer_output_width();
  const auto fc_w = params.values(params.index_of("head.fc.w"));
  const auto fc_b = params.values(params.index_of("head.fc.b"));
  const auto out_w = params.values(params.index_of("head.out.w"));
  const auto out_b = params.values(params.index_of("head.out.b"));

  tape.head_hidden = Tensor({steps, config.fc_hidden});
  Tensor prediction({steps, config.outputs});
  for (std::size_t t = 0; t < steps; ++t) {
    const double* o = layer_input.row(t).data();
    double* a = tape.head_hidden.row(t).data();
    for (std::size_t j = 0; j < config.fc_hidden; ++j) {
      double acc = fc_b[j];
      const double* wr = fc_w.data() + j * width;
      for (std::size_t d = 0; d < width; ++d) acc += wr[d] * o[d];
      a[j] = std::tanh(acc);
    }
    double* y = prediction.row(t).data();
    for (std::size_t k = 0; k < config.outputs; ++k) {
      double acc = out_b[k];
      const double* wr = out_w.data() + k * config.fc_hidden;
      for (std::size_t j = 0; j < config.fc_hidden; ++j) acc += wr[j] * a[j];
      y[k] = acc;
    }
  }
  tape.head_input = std::move(layer_input);
  require(prediction.all_finite(), ErrorCode::NonFinite, "forward produced a non-finite prediction");
  result.prediction = std::move(prediction);
  return result;
}

}  // namespace

ForwardTape::ForwardTape(ForwardTape&& other) noexcept
    : steps(other.steps),
      layout_id(other.layout_id),
      layers(std::move(other.layers)),
      head_input(std::move(other.head_input)),
      head_hidden(std::move(other.head_hidden)) {
  other.steps = 0;
}

ForwardTape& ForwardTape::operator=(ForwardTape&& other) noexcept {
  steps = other.steps;
  layout_id = other.layout_id;
  layers = std::move(other.layers);
  head_input = std::move(other.head_input);
  head_hidden = std::move(other.head_hidden);
  other.steps = 0;
  return *this;
}

std::string to_string(CellVariant variant) {
  switch (variant) {
    case CellVariant::SimpleRnn: return "rnn";
    case CellVariant::Gru: return "gru";
    case CellVariant::Lstm: return "lstm";
  }
  return "?";
}

CellVariant parse_cell_variant(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "rnn" || t == "simplernn" || t == "simple_rnn") return CellVariant::SimpleRnn;
  if (t == "gru") return CellVariant::Gru;
  if (t == "lstm") return CellVariant::Lstm;
  fail(ErrorCode::InvalidArgument, "unknown cell kind '" + text + "' (expected rnn, gru or lstm)");
}

std::string network_label(const CellKind& cell) {
  std::string base;
  switch (cell.variant) {
    case CellVariant::SimpleRnn: base = "RNN"; break;
    case CellVariant::Gru: base = "GRU"; break;
    case CellVariant::Lstm: base = "LSTM"; break;
  }
  return cell.bidirectional ? "Bi" + base : base;
}

std::size_t gate_count(CellVariant variant) {
  switch (variant) {
    case CellVariant::SimpleRnn: return 1;
    case CellVariant::Gru: return 3;
    case CellVariant::Lstm: return 4;
  }
  return 0;
}

void NetworkConfig::validate() const {
  require(input_size > 0, ErrorCode::InvalidArgument, "input_size must be positive");
  require(hidden_size > 0, ErrorCode::InvalidArgument, "hidden_size must be positive");
  require(num_layers > 0, ErrorCode::InvalidArgument, "num_layers must be positive");
  require(fc_hidden > 0, ErrorCode::InvalidArgument, "fc_hidden must be positive");
  require(outputs > 0, ErrorCode::InvalidArgument, "outputs must be positive");
  require(sequence_length > 0, ErrorCode::InvalidArgument, "sequence_length must be positive");
  require(std::isfinite(learning_rate) && learning_rate > 0.0, ErrorCode::InvalidArgument,
          "learning_rate must be positive");
}

ParameterSet network_layout(const NetworkConfig& config) {
  config.validate();
  const std::size_t h = config.hidden_size;
  const std::size_t rows = gate_count(config.cell.variant) * h;
  ParameterSet p;
  for (std::size_t layer = 0; layer < config.num_layers; ++layer) {
    for (std::size_t dir = 0; dir < config.directions(); ++dir) {
      const std::string prefix = direction_prefix(layer, dir);
      p.add(prefix + ".w_ih", Tensor({rows, layer_input_width(config, layer)}));
      p.add(prefix + ".w_hh", Tensor({rows, h}));
      if (config.cell.variant == CellVariant::Gru) {
        p.add(prefix + ".b_ih", Tensor({rows}));
        p.add(prefix + ".b_hh", Tensor({rows}));
      } else {
        p.add(prefix + ".b", Tensor({rows}));
      }
    }
  }
  p.add("head.fc.w", Tensor({config.fc_hidden, config.layer_output_width()}));
  p.add("head.fc.b", Tensor({config.fc_hidden}));
  p.add("head.out.w", Tensor({config.outputs, config.fc_hidden}));
  p.add("head.out.b", Tensor({config.outputs}));
  return p;
}

ParameterSet init_network(const NetworkConfig& config, Rng& rng) {
  ParameterSet p = network_layout(config);
  const double rec_bound = 1.0 / std::sqrt(static_cast<double>(config.hidden_size));
  const std::size_t h = config.hidden_size;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string& name = p.name(i);
    auto values = p.values(i);
    const bool is_weight = name.ends_with(".w_ih") || name.ends_with(".w_hh") || name.ends_with(".w");
    if (is_weight) {
      double bound = rec_bound;
      if (name.starts_with("head.")) bound = 1.0 / std::sqrt(static_cast<double>(p.tensor(i).cols()));
      for (double& v : values) v = rng.uniform(-bound, bound);
    } else if (config.cell.variant == CellVariant::Lstm && name.ends_with(".b") && name.starts_with("rnn.")) {
      std::fill(values.begin() + h, values.begin() + 2 * h, 1.0);  // forget gate
    }
  }
  return p;
}

NetworkConfig infer_network_config(const ParameterSet& params) {
  NetworkConfig config;
  const Tensor& w_ih = params["rnn.l0.fwd.w_ih"];
  const Tensor& w_hh = params["rnn.l0.fwd.w_hh"];
  config.hidden_size = w_hh.cols();
  config.input_size = w_ih.cols();
  bool has_bwd = false;
  std::size_t layers = 0;
  bool has_gru_bias = false;
  for (const auto& e : params.entries()) {
    if (e.name.find(".bwd.") != std::string::npos) has_bwd = true;
    if (e.name.ends_with(".b_ih")) has_gru_bias = true;
    if (e.name.starts_with("rnn.l")) {
      const std::size_t end = e.name.find('.', 5);
      layers = std::max(layers, static_cast<std::size_t>(std::stoul(e.name.substr(5, end - 5))) + 1);
    }
  }
  const std::size_t gates = w_hh.rows() / config.hidden_size;
  if (has_gru_bias) {
    config.cell.variant = CellVariant::Gru;
  } else if (gates == 4) {
    config.cell.variant = CellVariant::Lstm;
  } else if (gates == 1) {
    config.cell.variant = CellVariant::SimpleRnn;
  } else {
    fail(ErrorCode::LayoutMismatch, "cannot infer cell kind from parameter layout");
  }
  config.cell.bidirectional = has_bwd;
  config.num_layers = layers;
  config.fc_hidden = params["head.fc.w"].rows();
  config.outputs = params["head.out.w"].rows();
  require(network_layout(config).same_layout(params), ErrorCode::LayoutMismatch,
          "parameter layout is not a recognised network");
  return config;
}

ForwardResult forward(const ParameterSet& params, const NetworkConfig& config, const Tensor& x) {
  require(x.rank() == 2 && x.rows() <= config.sequence_length, ErrorCode::ShapeMismatch,
          "sequence longer than sequence_length " + std::to_string(config.sequence_length));
  return run_forward(params, config, x);
}

Tensor predict(const ParameterSet& params, const NetworkConfig& config, const Tensor& x) {
  return run_forward(params, config, x).prediction;
}

Tensor last_layer_states(const ParameterSet& params, const NetworkConfig& config, const Tensor& x) {
  return std::move(run_forward(params, config, x).tape.head_input);
}

ParameterSet backward(const ParameterSet& params, const NetworkConfig& config, ForwardTape&& tape_in,
                      const Tensor& grad_y) {
  ForwardTape tape = std::move(tape_in);
  require(tape.steps > 0, ErrorCode::InvalidArgument, "forward tape is empty or already consumed");
  require(tape.layout_id == params.layout_id(), ErrorCode::LayoutMismatch,
          "tape was produced with a different parameter layout");
  require(tape.layers.size() == config.num_layers, ErrorCode::LayoutMismatch, "tape/config layer count mismatch");
  const std::size_t steps = tape.steps;
  require(grad_y.rank() == 2 && grad_y.rows() == steps && grad_y.cols() == config.outputs,
          ErrorCode::ShapeMismatch, "grad_y must be [T, outputs]");
  require(grad_y.all_finite(), ErrorCode::NonFinite, "grad_y contains non-finite values");

  ParameterSet grads = params.zeros_like();
  const std::size_t width = config.layer_output_width();
  const std::size_t fc = config.fc_hidden;

  const auto fc_w = params.values(params.index_of("head.fc.w"));
  const auto out_w = params.values(params.index_of("head.out.w"));
  double* g_fc_w = grads.values(grads.index_of("head.fc.w")).data();
  double* g_fc_b = grads.values(grads.index_of("head.fc.b")).data();
  double* g_out_w = grads.values(grads.index_of("head.out.w")).data();
  double* g_out_b = grads.values(grads.index_of("head.out.b")).data();

  Tensor d_layer({steps, width});
  std::vector<double> d_pre(fc);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* dy = grad_y.row(t).data();
    const double* a = tape.head_hidden.row(t).data();
    const double* o = tape.head_input.row(t).data();
    std::fill(d_pre.begin(), d_pre.end(), 0.0);
    for (std::size_t k = 0; k < config.outputs; ++k) {
      g_out_b[k] += dy[k];
      axpy(g_out_w + k * fc, a, dy[k], fc);
      axpy(d_pre.data(), out_w.data() + k * fc, dy[k], fc);
    }
    double* d_o = d_layer.row(t).data();
    for (std::size_t j = 0; j < fc; ++j) {
      d_pre[j] *= 1.0 - a[j] * a[j];
      g_fc_b[j] += d_pre[j];
      axpy(g_fc_w + j * width, o, d_pre[j], width);
      axpy(d_o, fc_w.data() + j * width, d_pre[j], width);
    }
  }

  const std::size_t h = config.hidden_size;
  const std::size_t dirs = config.directions();
  for (std::size_t layer = config.num_layers; layer-- > 0;) {
    const auto& lt = tape.layers[layer];
    Tensor d_input({steps, lt.input.cols()});
    for (std::size_t dir = 0; dir < dirs; ++dir) {
      Tensor d_hidden({steps, h});
      for (std::size_t t = 0; t < steps; ++t) {
        auto src = d_layer.row(t).subspan(dir * h, h);
        std::copy(src.begin(), src.end(), d_hidden.row(t).begin());
      }
      const CellIndices idx = cell_indices(grads, config.cell.variant, layer, dir);
      CellGrads cg{grads.values(idx.w_ih).data(), grads.values(idx.w_hh).data(), grads.values(idx.b_in).data(),
                   idx.has_rec_bias ? grads.values(idx.b_rec).data() : nullptr};
      backprop_direction(config.cell.variant, cell_weights(params, config, layer, dir), lt.input,
                         lt.directions[dir], dir == 1, d_hidden, cg, layer > 0 ? &d_input : nullptr);
    }
    d_layer = std::move(d_input);
  }

  require(grads.all_finite(), ErrorCode::NonFinite, "backward produced non-finite gradients");
  return grads;
}

}  // namespace fedseq
