#pragma once

#include <deque>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dietgraph/autograd.hpp"
#include "dietgraph/rng.hpp"
#include "dietgraph/tensor.hpp"

namespace dietgraph {

// One trainable tensor with its optimiser state. Values persist across the
// per-iteration tapes.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> m;
  Tensor<T> v;
};

// Named parameter registry. Insertion order is the iteration order, which
// keeps update order deterministic.
template <typename T>
class ParamStore {
 public:
  // Glorot-uniform initialisation over (fan_in + fan_out).
  Param<T>& add_glorot(const std::string& name, int rows, int cols,
                       RngStream& rng);
  Param<T>& add_zeros(const std::string& name, int rows, int cols);
  Param<T>& get(const std::string& name);
  const Param<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Param<T>*> all();
  std::size_t total_values() const;

 private:
  Param<T>& add(const std::string& name, Tensor<T> value);
  // deque keeps handed-out Param pointers stable as the store grows.
  std::deque<Param<T>> params_;
  std::map<std::string, std::size_t> index_;
};

// Adam with the classic L2 coupling: weight_decay * value joins the raw
// gradient before the moment updates. Throws on non-finite gradients.
template <typename T>
class Adam {
 public:
  Adam(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8),
       T weight_decay = T(0));

  // Advances the step counter once, then applies one update per pair.
  void step(const std::vector<std::pair<Param<T>*, const Tensor<T>*>>& grads);
  int steps_taken() const { return t_; }

 private:
  T lr_, beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
};

// Leases every parameter onto the tape and remembers the pairing so the
// optimiser can read gradients back after backward().
template <typename T>
class ParamLease {
 public:
  ParamLease(Tape<T>& tape, ParamStore<T>& store);
  Var operator[](const std::string& name) const;
  std::vector<std::pair<Param<T>*, const Tensor<T>*>> grads() const;

 private:
  Tape<T>* tape_;
  std::vector<std::pair<Param<T>*, Var>> leased_;
  std::map<std::string, Var> by_name_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Adam<float>;
extern template class Adam<double>;
extern template class ParamLease<float>;
extern template class ParamLease<double>;

}  // namespace dietgraph
