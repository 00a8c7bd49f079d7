#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dart/tensor.hpp"

namespace dart {

struct Parameter {
  std::string name;
  Tensor tensor;
  bool frozen = false;
};

/// Ordered collection of named parameters. Order is insertion order and is
/// the order used for checkpoints and optimizer state.
class ParameterSet {
 public:
  /// Registers a new parameter and returns its tensor handle.
  Tensor add(std::string name, Matrix init, bool frozen = false);

  [[nodiscard]] const std::vector<Parameter>& items() const { return items_; }
  [[nodiscard]] std::vector<Parameter>& items() { return items_; }
  [[nodiscard]] const Parameter& get(const std::string& name) const;
  [[nodiscard]] Parameter& get(const std::string& name);
  [[nodiscard]] bool contains(const std::string& name) const;

  void zero_grad();
  [[nodiscard]] std::size_t trainable_count() const;
  [[nodiscard]] std::size_t trainable_count(const std::string& prefix) const;

 private:
  std::vector<Parameter> items_;
};

/// FNV-1a over the raw bytes of each matrix, in order.
std::uint64_t checksum(const std::vector<const Matrix*>& values);
std::uint64_t checksum(const Matrix& value);

}  // namespace dart
