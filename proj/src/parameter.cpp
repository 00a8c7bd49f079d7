#include "dart/parameter.hpp"

#include <algorithm>
#include <cstring>

#include "dart/error.hpp"

namespace dart {

Tensor ParameterSet::add(std::string name, Matrix init, bool frozen) {
  if (contains(name)) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  Tensor t(std::move(init), !frozen);
  items_.push_back(Parameter{std::move(name), t, frozen});
  return t;
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = std::find_if(items_.begin(), items_.end(),
                         [&](const Parameter& p) { return p.name == name; });
  if (it == items_.end()) throw LookupError("unknown parameter: " + name);
  return *it;
}

Parameter& ParameterSet::get(const std::string& name) {
  return const_cast<Parameter&>(static_cast<const ParameterSet&>(*this).get(name));
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(items_.begin(), items_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

std::size_t ParameterSet::trainable_count() const { return trainable_count(""); }

std::size_t ParameterSet::trainable_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& p : items_) {
    if (!p.frozen && p.name.starts_with(prefix)) n += static_cast<std::size_t>(p.tensor.size());
  }
  return n;
}

std::uint64_t checksum(const std::vector<const Matrix*>& values) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Matrix* m : values) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m->data());
    const std::size_t n = static_cast<std::size_t>(m->size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::uint64_t checksum(const Matrix& value) { return checksum(std::vector<const Matrix*>{&value}); }

}  // namespace dart
