#include <cmath>

#include "dietgraph/error.hpp"
#include "dietgraph/kernels.hpp"
#include "dietgraph/optim.hpp"

namespace dietgraph {

template <typename T>
Param<T>& ParamStore<T>::add(const std::string& name, Tensor<T> value) {
  if (index_.count(name)) throw Error("duplicate parameter \"" + name + "\"");
  Param<T> p;
  p.name = name;
  p.m = Tensor<T>(value.rows(), value.cols());
  p.v = Tensor<T>(value.rows(), value.cols());
  p.value = std::move(value);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back();
}

template <typename T>
Param<T>& ParamStore<T>::add_glorot(const std::string& name, int rows,
                                    int cols, RngStream& rng) {
  Tensor<T> t(rows, cols);
  const double limit = std::sqrt(6.0 / (rows + cols));
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
  return add(name, std::move(t));
}

template <typename T>
Param<T>& ParamStore<T>::add_zeros(const std::string& name, int rows,
                                   int cols) {
  return add(name, Tensor<T>(rows, cols));
}

template <typename T>
Param<T>& ParamStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter \"" + name + "\"");
  return params_[it->second];
}

template <typename T>
const Param<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter \"" + name + "\"");
  return params_[it->second];
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

template <typename T>
std::vector<Param<T>*> ParamStore<T>::all() {
  std::vector<Param<T>*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::size_t ParamStore<T>::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
Adam<T>::Adam(T lr, T beta1, T beta2, T eps, T weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      weight_decay_(weight_decay) {}

template <typename T>
void Adam<T>::step(
    const std::vector<std::pair<Param<T>*, const Tensor<T>*>>& grads) {
  ++t_;
  kernels::AdamArgs<T> args;
  args.lr = lr_;
  args.beta1 = beta1_;
  args.beta2 = beta2_;
  args.eps = eps_;
  args.weight_decay = weight_decay_;
  args.bias_corr1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), t_));
  args.bias_corr2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), t_));
  const auto& K = kernels::active<T>();
  for (const auto& [p, g] : grads) {
    if (!p->value.same_shape(*g))
      throw Error("adam: gradient shape mismatch for \"" + p->name + "\"");
    for (std::size_t i = 0; i < g->size(); ++i) {
      if (!std::isfinite(static_cast<double>(g->data()[i])))
        throw Error("adam: non-finite gradient for \"" + p->name + "\"");
    }
    K.adam_step(p->value.data(), g->data(), p->m.data(), p->v.data(),
                p->value.size(), args);
  }
}

template <typename T>
ParamLease<T>::ParamLease(Tape<T>& tape, ParamStore<T>& store) : tape_(&tape) {
  for (Param<T>* p : store.all()) {
    const Var v = tape.leaf(p->value, true);
    leased_.push_back({p, v});
    by_name_[p->name] = v;
  }
}

template <typename T>
Var ParamLease<T>::operator[](const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end())
    throw Error("parameter \"" + name + "\" not leased");
  return it->second;
}

template <typename T>
std::vector<std::pair<Param<T>*, const Tensor<T>*>> ParamLease<T>::grads()
    const {
  std::vector<std::pair<Param<T>*, const Tensor<T>*>> out;
  out.reserve(leased_.size());
  for (const auto& [p, v] : leased_) out.push_back({p, &tape_->grad(v)});
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Adam<float>;
template class Adam<double>;
template class ParamLease<float>;
template class ParamLease<double>;

}  // namespace dietgraph
