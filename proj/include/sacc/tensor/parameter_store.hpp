#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sacc/tensor/tensor.hpp"

namespace sacc {

/// A named trainable array and the group it is frozen/unfrozen with.
struct Parameter {
  std::string name;
  std::string group;
  Tensor value;
};

/**
 * Ordered collection of named parameters, partitioned into groups that can
 * be frozen. Frozen parameters never receive gradients and are skipped by
 * every optimizer, so they stay bit-identical across training steps.
 */
class ParameterStore {
 public:
  /// Registers a parameter; names must be unique. Returns the stored handle.
  Tensor& add(std::string name, std::string group, Tensor value);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  void freeze(const std::string& group);
  void unfreeze(const std::string& group);
  bool is_frozen(const std::string& group) const;
  bool is_parameter_frozen(const Parameter& p) const { return is_frozen(p.group); }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<std::string> groups() const;

  void zero_grad();
  std::size_t numel() const;

  /// FNV-1a over the raw bytes of every value in `group` (all groups when empty).
  std::uint64_t checksum(const std::string& group = {}) const;

  /// Appends all parameters of `other` (sharing storage) and its frozen flags.
  void merge(const ParameterStore& other);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
  std::set<std::string> frozen_;
};

}  // namespace sacc
