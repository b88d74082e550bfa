#ifndef SYMDEC_PARAMS_HPP
#define SYMDEC_PARAMS_HPP

#include <map>
#include <random>
#include <string>

#include "symdec/autodiff.hpp"

namespace symdec {

/// Named parameter tensors. std::map keeps iteration (and therefore serialisation and
/// gradient reduction) in a fixed order.
template <typename Scalar>
using ParamSet = std::map<std::string, Tensor<Scalar>>;

template <typename Scalar>
using VarSet = std::map<std::string, ad::Var<Scalar>>;

template <typename Scalar>
VarSet<Scalar> as_parameters(const ParamSet<Scalar>& params) {
  VarSet<Scalar> out;
  for (const auto& [name, t] : params) out.emplace(name, ad::Var<Scalar>::parameter(t, name));
  return out;
}

template <typename Scalar>
VarSet<Scalar> as_constants(const ParamSet<Scalar>& params) {
  VarSet<Scalar> out;
  for (const auto& [name, t] : params) out.emplace(name, ad::Var<Scalar>::constant(t));
  return out;
}

template <typename To, typename From>
ParamSet<To> cast_params(const ParamSet<From>& params) {
  ParamSet<To> out;
  for (const auto& [name, t] : params) out.emplace(name, t.template cast<To>());
  return out;
}

template <typename Scalar>
const ad::Var<Scalar>& param(const VarSet<Scalar>& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw ConfigError("missing parameter '" + name + "'");
  return it->second;
}

template <typename Scalar>
void init_normal(ParamSet<Scalar>& params, const std::string& name, Shape shape, std::mt19937_64& rng, double stddev) {
  params[name] = Tensor<Scalar>::randn(std::move(shape), rng, Scalar(stddev));
}

template <typename Scalar>
void init_constant(ParamSet<Scalar>& params, const std::string& name, Shape shape, double value) {
  params[name] = Tensor<Scalar>(std::move(shape), Scalar(value));
}

template <typename Scalar>
Index parameter_count(const ParamSet<Scalar>& params) {
  Index n = 0;
  for (const auto& [_, t] : params) n += t.size();
  return n;
}

}  // namespace symdec

#endif  // SYMDEC_PARAMS_HPP
