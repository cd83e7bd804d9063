#include "metaseg/param_store.hpp"

namespace metaseg {

Tensor& ParamStore::create(const std::string& name, Tensor init) {
  if (contains(name)) {
    throw StateError("param store: duplicate parameter name '" + name + "'");
  }
  Entry e;
  e.grad = Tensor(init.n, init.c, init.h, init.w);
  e.value = std::move(init);
  auto [it, ok] = entries_.emplace(name, std::move(e));
  (void)ok;
  return it->second.value;
}

ParamStore::Entry& ParamStore::find(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw StateError("param store: unknown parameter '" + name + "'");
  }
  return it->second;
}

const ParamStore::Entry& ParamStore::find(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw StateError("param store: unknown parameter '" + name + "'");
  }
  return it->second;
}

Tensor& ParamStore::value(const std::string& name) { return find(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return find(name).value; }
Tensor& ParamStore::grad(const std::string& name) { return find(name).grad; }
const Tensor& ParamStore::grad(const std::string& name) const { return find(name).grad; }

void ParamStore::zero_grads() {
  for (auto& [name, e] : entries_) {
    e.grad.data.assign(e.grad.data.size(), 0.0);
  }
}

std::uint64_t ParamStore::total_elements() const {
  std::uint64_t total = 0;
  for (const auto& [name, e] : entries_) total += e.value.size();
  return total;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

}  // namespace metaseg
