#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bks/autograd.hpp"
#include "bks/tensor.hpp"

namespace bks {

struct ParamMeta {
  std::string arch_id;
  std::string config_hash;
  std::int64_t iteration = 0;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const ParamMeta&, const ParamMeta&) = default;
};

// Ordered name -> tensor map holding the weights of one network.
class ParamStore {
 public:
  int add(std::string name, Tensor value);

  int size() const { return static_cast<int>(tensors_.size()); }
  bool contains(std::string_view name) const;
  int index(std::string_view name) const;
  const std::string& name(int i) const { return names_.at(static_cast<std::size_t>(i)); }
  Tensor& operator[](int i) { return tensors_.at(static_cast<std::size_t>(i)); }
  const Tensor& operator[](int i) const { return tensors_.at(static_cast<std::size_t>(i)); }
  Tensor& operator[](std::string_view name) { return (*this)[index(name)]; }
  const Tensor& operator[](std::string_view name) const { return (*this)[index(name)]; }

  std::size_t parameter_count() const;
  bool all_finite() const;
  ParamStore zeros_like() const;

  // Throws std::runtime_error naming the first tensor whose name or shape
  // differs from `expected`.
  void require_layout(const ParamStore& expected) const;

  ParamMeta meta;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, int, std::less<>> index_;
};

// Graph leaves bound to a ParamStore for one forward pass.
class ParamVars {
 public:
  ParamVars(const ParamStore& store, bool requires_grad);

  const Var& operator[](int i) const { return vars_.at(static_cast<std::size_t>(i)); }
  int size() const { return static_cast<int>(vars_.size()); }

  // Adds the gradients reached by backward() into `grads` (same layout).
  void accumulate_grads(ParamStore& grads) const;

 private:
  std::vector<Var> vars_;
};

}  // namespace bks
