#include "sacc/tensor/parameter_store.hpp"

#include <cstring>

#include "sacc/errors.hpp"

namespace sacc {

Tensor& ParameterStore::add(std::string name, std::string group, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  if (!value.defined()) throw StateError("parameter '" + name + "' is undefined");
  value.set_requires_grad(!is_frozen(group));
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(group), std::move(value)});
  return params_.back().value;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw IndexError("unknown parameter '" + name + "'");
  return params_[it->second].value;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw IndexError("unknown parameter '" + name + "'");
  return params_[it->second].value;
}

bool ParameterStore::contains(const std::string& name) const { return index_.contains(name); }

void ParameterStore::freeze(const std::string& group) {
  frozen_.insert(group);
  for (auto& p : params_) {
    if (p.group == group) p.value.set_requires_grad(false);
  }
}

void ParameterStore::unfreeze(const std::string& group) {
  frozen_.erase(group);
  for (auto& p : params_) {
    if (p.group == group && !p.value.requires_grad()) p.value.set_requires_grad(true);
  }
}

bool ParameterStore::is_frozen(const std::string& group) const { return frozen_.contains(group); }

std::vector<std::string> ParameterStore::groups() const {
  std::vector<std::string> out;
  for (const auto& p : params_) {
    if (std::find(out.begin(), out.end(), p.group) == out.end()) out.push_back(p.group);
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

std::size_t ParameterStore::numel() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.numel();
  return total;
}

std::uint64_t ParameterStore::checksum(const std::string& group) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params_) {
    if (!group.empty() && p.group != group) continue;
    for (double v : p.value.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

void ParameterStore::merge(const ParameterStore& other) {
  for (const auto& p : other.params_) {
    if (index_.contains(p.name)) throw ConfigError("duplicate parameter name '" + p.name + "' in merge");
    index_.emplace(p.name, params_.size());
    params_.push_back(p);
  }
  frozen_.insert(other.frozen_.begin(), other.frozen_.end());
}

}  // namespace sacc
