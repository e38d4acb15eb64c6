// SPDX-License-Identifier: Apache-2.0
#include "fedseq/parameter_set.hpp"

#include <bit>
#include <cmath>

#include "fedseq/error.hpp"

namespace fedseq {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_u64(std::uint64_t& h, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  fnv_bytes(h, bytes, 8);
}

}  // namespace

void ParameterSet::add(std::string name, Tensor tensor) {
  require(!name.empty(), ErrorCode::InvalidArgument, "parameter name must not be empty");
  require(!tensor.empty(), ErrorCode::InvalidArgument, "parameter '" + name + "' has no values");
  for (const auto& e : entries_) {
    require(e.name != name, ErrorCode::InvalidArgument, "duplicate parameter name '" + name + "'");
  }
  entries_.push_back({std::move(name), std::move(tensor)});
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  fail(ErrorCode::InvalidArgument, "no parameter named '" + std::string(name) + "'");
}

std::uint64_t ParameterSet::layout_id() const {
  std::uint64_t h = kFnvOffset;
  fnv_u64(h, entries_.size());
  for (const auto& e : entries_) {
    fnv_u64(h, e.name.size());
    fnv_bytes(h, e.name.data(), e.name.size());
    fnv_u64(h, e.tensor.rank());
    for (std::size_t d : e.tensor.shape()) fnv_u64(h, d);
  }
  return h;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (entries_[i].tensor.shape() != other.entries_[i].tensor.shape()) return false;
  }
  return true;
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  out.entries_.reserve(entries_.size());
  for (const auto& e : entries_) out.entries_.push_back({e.name, Tensor(e.tensor.shape())});
  return out;
}

bool ParameterSet::all_finite() const {
  for (const auto& e : entries_) {
    if (!e.tensor.all_finite()) return false;
  }
  return true;
}

void require_same_layout(const ParameterSet& a, const ParameterSet& b, std::string_view context) {
  if (!a.same_layout(b)) {
    fail(ErrorCode::LayoutMismatch, std::string(context) + ": parameter layouts differ");
  }
}

bool bitwise_equal(const ParameterSet& a, const ParameterSet& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto x = a.values(i);
    auto y = b.values(i);
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (std::bit_cast<std::uint64_t>(x[j]) != std::bit_cast<std::uint64_t>(y[j])) return false;
    }
  }
  return true;
}

double global_norm(const ParameterSet& p) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (double v : p.values(i)) sum += v * v;
  }
  return std::sqrt(sum);
}

}  // namespace fedseq
