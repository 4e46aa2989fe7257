#include "bks/param_store.hpp"

#include <stdexcept>

namespace bks {

int ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  const int i = size();
  index_.emplace(name, i);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
  return i;
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

int ParamStore::index(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return it->second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const Tensor& t : tensors_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore z;
  for (int i = 0; i < size(); ++i) z.add(names_[static_cast<std::size_t>(i)], Tensor((*this)[i].shape()));
  z.meta = meta;
  return z;
}

void ParamStore::require_layout(const ParamStore& expected) const {
  for (int i = 0; i < expected.size(); ++i) {
    const std::string& n = expected.name(i);
    if (!contains(n)) throw std::runtime_error("missing tensor '" + n + "'");
    const Tensor& t = (*this)[n];
    if (t.shape() != expected[i].shape()) {
      throw std::runtime_error("tensor '" + n + "' has shape " + shape_string(t.shape()) +
                               ", expected " + shape_string(expected[i].shape()));
    }
  }
  for (int i = 0; i < size(); ++i) {
    if (!expected.contains(name(i))) {
      throw std::runtime_error("unexpected tensor '" + name(i) + "'");
    }
  }
}

ParamVars::ParamVars(const ParamStore& store, bool requires_grad) {
  vars_.reserve(static_cast<std::size_t>(store.size()));
  for (int i = 0; i < store.size(); ++i) vars_.push_back(Var::leaf(store[i], requires_grad));
}

void ParamVars::accumulate_grads(ParamStore& grads) const {
  for (int i = 0; i < size(); ++i) {
    const Tensor& g = vars_[static_cast<std::size_t>(i)].grad();
    if (!g.empty()) axpy(1.0f, g, grads[i]);
  }
}

}  // namespace bks
