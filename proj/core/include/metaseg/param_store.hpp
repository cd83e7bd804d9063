#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metaseg/tensor.hpp"

namespace metaseg {

// Named parameter tensors with matching gradient buffers.
// Iteration order is lexicographic by name (std::map), so serialization
// and parameter walks are deterministic.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
  };

  Tensor& create(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;

  void zero_grads();

  std::size_t count() const { return entries_.size(); }
  std::uint64_t total_elements() const;
  std::vector<std::string> names() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  Entry& find(const std::string& name);
  const Entry& find(const std::string& name) const;

  std::map<std::string, Entry> entries_;
};

}  // namespace metaseg
