// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedseq/parameter_set.hpp"

namespace fedseq {

using Bytes = std::vector<std::uint8_t>;

enum class MessageTag : std::uint8_t { Register = 1, Global = 2, Update = 3, Done = 4 };

const char* to_string(MessageTag tag);

/// A protocol message between a federation client and the server. The
/// payload is present exactly for GLOBAL and UPDATE.
struct RoundMessage {
  MessageTag tag = MessageTag::Register;
  std::uint32_t round = 0;
  std::string client_id;
  std::uint64_t n_samples = 0;
  std::optional<ParameterSet> payload;

  void validate() const;

  static RoundMessage make_register(std::string client_id);
  static RoundMessage make_global(std::uint32_t round, ParameterSet weights);
  static RoundMessage make_update(std::uint32_t round, std::string client_id, ParameterSet weights,
                                  std::uint64_t n_samples);
  static RoundMessage make_done(std::uint32_t round);
};

/// [u32 count] then per entry [u16 name len][name][u8 rank][rank x u32 dims]
/// [raw little-endian f64 values]. All integers little-endian.
Bytes encode_parameter_set(const ParameterSet& params);
ParameterSet decode_parameter_set(std::span<const std::uint8_t> bytes);

inline constexpr std::uint8_t kFrameMagic[4] = {'F', 'S', 'R', '1'};
/// magic + tag + round + client id length.
inline constexpr std::size_t kFramePrefixSize = 4 + 1 + 4 + 2;

/// [magic "FSR1"][u8 tag][u32 round][u16 id len][id][u64 n_samples]
/// [u64 payload len][payload].
Bytes encode_message(const RoundMessage& message);

/// Decodes exactly one frame occupying all of bytes.
RoundMessage decode_message(std::span<const std::uint8_t> bytes);

/// Total frame size implied by a frame prefix, once enough bytes are known.
/// Returns nullopt while more bytes are needed. Validates the magic.
std::optional<std::size_t> frame_size(std::span<const std::uint8_t> prefix);

/// Incremental decoder for a byte stream carrying back-to-back frames.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  std::optional<RoundMessage> next();
  std::size_t buffered() const { return buffer_.size(); }

 private:
  Bytes buffer_;
};

}  // namespace fedseq
