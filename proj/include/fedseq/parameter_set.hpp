// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedseq/tensor.hpp"

namespace fedseq {

/// Ordered, named collection of weight tensors. The insertion order is the
/// canonical order; names are unique. Entries may change values but never
/// shape, so the layout id is stable for the object's lifetime.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  void add(std::string name, Tensor tensor);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  const Tensor& tensor(std::size_t index) const { return entries_.at(index).tensor; }
  const std::string& name(std::size_t index) const { return entries_.at(index).name; }
  std::span<double> values(std::size_t index) { return entries_.at(index).tensor.data(); }
  std::span<const double> values(std::size_t index) const { return entries_.at(index).tensor.data(); }

  /// Index of the named entry; throws if absent.
  std::size_t index_of(std::string_view name) const;
  const Tensor& operator[](std::string_view name) const { return tensor(index_of(name)); }
  std::span<double> values(std::string_view name) { return values(index_of(name)); }

  /// FNV-1a hash over (name, shape) pairs in order.
  std::uint64_t layout_id() const;
  bool same_layout(const ParameterSet& other) const;

  std::size_t element_count() const;
  ParameterSet zeros_like() const;
  bool all_finite() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<Entry> entries_;
};

/// Throws ErrorCode::LayoutMismatch unless the two sets share a layout.
void require_same_layout(const ParameterSet& a, const ParameterSet& b, std::string_view context);

/// Bitwise equality of every value (distinguishes -0.0 from 0.0).
bool bitwise_equal(const ParameterSet& a, const ParameterSet& b);

double global_norm(const ParameterSet& p);

}  // namespace fedseq
