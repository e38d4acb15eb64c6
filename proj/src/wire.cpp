// SPDX-License-Identifier: Apache-2.0
#include "fedseq/wire.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "fedseq/error.hpp"

namespace fedseq {
namespace {

constexpr std::size_t kMaxRank = 8;
constexpr std::uint64_t kMaxPayloadBytes = std::uint64_t{1} << 32;

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void text(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail(ErrorCode::Protocol, "truncated message");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

bool valid_tag(std::uint8_t tag) { return tag >= 1 && tag <= 4; }

bool carries_payload(MessageTag tag) { return tag == MessageTag::Global || tag == MessageTag::Update; }

}  // namespace

const char* to_string(MessageTag tag) {
  switch (tag) {
    case MessageTag::Register: return "REGISTER";
    case MessageTag::Global: return "GLOBAL";
    case MessageTag::Update: return "UPDATE";
    case MessageTag::Done: return "DONE";
  }
  return "?";
}

void RoundMessage::validate() const {
  require(valid_tag(static_cast<std::uint8_t>(tag)), ErrorCode::Protocol, "unknown message tag");
  if (carries_payload(tag)) {
    require(payload.has_value() && !payload->empty(), ErrorCode::Protocol,
            std::string(to_string(tag)) + " message requires a payload");
  } else {
    require(!payload.has_value(), ErrorCode::Protocol, std::string(to_string(tag)) + " message must not carry a payload");
  }
  if (tag == MessageTag::Register || tag == MessageTag::Update) {
    require(!client_id.empty(), ErrorCode::Protocol, std::string(to_string(tag)) + " message requires a client id");
  }
  require(client_id.size() <= std::numeric_limits<std::uint16_t>::max(), ErrorCode::Protocol, "client id too long");
}

RoundMessage RoundMessage::make_register(std::string client_id) {
  RoundMessage m;
  m.tag = MessageTag::Register;
  m.client_id = std::move(client_id);
  return m;
}

RoundMessage RoundMessage::make_global(std::uint32_t round, ParameterSet weights) {
  RoundMessage m;
  m.tag = MessageTag::Global;
  m.round = round;
  m.payload = std::move(weights);
  return m;
}

RoundMessage RoundMessage::make_update(std::uint32_t round, std::string client_id, ParameterSet weights,
                                       std::uint64_t n_samples) {
  RoundMessage m;
  m.tag = MessageTag::Update;
  m.round = round;
  m.client_id = std::move(client_id);
  m.n_samples = n_samples;
  m.payload = std::move(weights);
  return m;
}

RoundMessage RoundMessage::make_done(std::uint32_t round) {
  RoundMessage m;
  m.tag = MessageTag::Done;
  m.round = round;
  return m;
}

Bytes encode_parameter_set(const ParameterSet& params) {
  require(params.size() <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::Protocol, "too many entries");
  Bytes out;
  out.reserve(16 + params.element_count() * 8);
  Writer w(out);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    require(e.name.size() <= std::numeric_limits<std::uint16_t>::max(), ErrorCode::Protocol,
            "parameter name too long");
    require(e.tensor.rank() >= 1 && e.tensor.rank() <= kMaxRank, ErrorCode::Protocol, "unsupported tensor rank");
    require(e.tensor.all_finite(), ErrorCode::NonFinite, "parameter '" + e.name + "' contains non-finite values");
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.text(e.name);
    w.u8(static_cast<std::uint8_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) {
      require(d <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::Protocol, "dimension too large");
      w.u32(static_cast<std::uint32_t>(d));
    }
    for (double v : e.tensor.data()) w.f64(v);
  }
  return out;
}

ParameterSet decode_parameter_set(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::uint32_t count = r.u32();
  ParameterSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    std::string name = r.text(name_len);
    const std::uint8_t rank = r.u8();
    if (rank == 0 || rank > kMaxRank) fail(ErrorCode::Protocol, "invalid tensor rank in payload");
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) fail(ErrorCode::Protocol, "zero dimension in payload");
      n *= d;
      if (n * 8 > r.remaining()) fail(ErrorCode::Protocol, "truncated tensor data");
    }
    std::vector<double> values(n);
    for (double& v : values) {
      v = r.f64();
      if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "payload entry '" + name + "' contains non-finite values");
    }
    try {
      params.add(std::move(name), Tensor(std::move(shape), std::move(values)));
    } catch (const Error& e) {
      fail(ErrorCode::Protocol, std::string("invalid payload entry: ") + e.what());
    }
  }
  if (r.remaining() != 0) fail(ErrorCode::Protocol, "trailing bytes after parameter payload");
  return params;
}

Bytes encode_message(const RoundMessage& message) {
  message.validate();
  Bytes payload;
  if (message.payload) payload = encode_parameter_set(*message.payload);
  Bytes out;
  out.reserve(kFramePrefixSize + message.client_id.size() + 16 + payload.size());
  Writer w(out);
  w.bytes(kFrameMagic);
  w.u8(static_cast<std::uint8_t>(message.tag));
  w.u32(message.round);
  w.u16(static_cast<std::uint16_t>(message.client_id.size()));
  w.text(message.client_id);
  w.u64(message.n_samples);
  w.u64(payload.size());
  w.bytes(payload);
  return out;
}

std::optional<std::size_t> frame_size(std::span<const std::uint8_t> prefix) {
  const std::size_t magic_bytes = std::min<std::size_t>(prefix.size(), 4);
  if (!std::equal(prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(magic_bytes), kFrameMagic)) {
    fail(ErrorCode::Protocol, "bad frame magic");
  }
  if (prefix.size() < kFramePrefixSize) return std::nullopt;
  Reader r(prefix.subspan(kFramePrefixSize - 2));
  const std::size_t id_len = r.u16();
  const std::size_t fixed = kFramePrefixSize + id_len + 16;
  if (prefix.size() < fixed) return std::nullopt;
  Reader tail(prefix.subspan(fixed - 8));
  const std::uint64_t payload_len = tail.u64();
  if (payload_len > kMaxPayloadBytes) fail(ErrorCode::Protocol, "payload length exceeds limit");
  return fixed + static_cast<std::size_t>(payload_len);
}

RoundMessage decode_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kFrameMagic, kFrameMagic + 4, bytes.begin())) {
    fail(ErrorCode::Protocol, "bad frame magic");
  }
  Reader r(bytes.subspan(4));
  const std::uint8_t tag = r.u8();
  if (!valid_tag(tag)) fail(ErrorCode::Protocol, "unknown message tag " + std::to_string(tag));
  RoundMessage m;
  m.tag = static_cast<MessageTag>(tag);
  m.round = r.u32();
  const std::uint16_t id_len = r.u16();
  m.client_id = r.text(id_len);
  m.n_samples = r.u64();
  const std::uint64_t payload_len = r.u64();
  if (payload_len > kMaxPayloadBytes) fail(ErrorCode::Protocol, "payload length exceeds limit");
  if (payload_len != r.remaining()) fail(ErrorCode::Protocol, "frame length does not match payload length");
  if (payload_len > 0) {
    if (!carries_payload(m.tag)) fail(ErrorCode::Protocol, std::string(to_string(m.tag)) + " frame carries a payload");
    m.payload = decode_parameter_set(r.bytes(static_cast<std::size_t>(payload_len)));
  }
  m.validate();
  return m;
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

std::optional<RoundMessage> FrameReader::next() {
  if (buffer_.empty()) return std::nullopt;
  const auto size = frame_size(buffer_);
  if (!size || buffer_.size() < *size) return std::nullopt;
  RoundMessage m = decode_message(std::span<const std::uint8_t>(buffer_).first(*size));
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(*size));
  return m;
}

}  // namespace fedseq
