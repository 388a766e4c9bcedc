#include "spcnet/params.hpp"

#include <cmath>

#include "spcnet/errors.hpp"
#include "spcnet/rng.hpp"

namespace spcnet {

void ParamSet::add(const std::string& name, Tensor value) {
  if (entries_.count(name)) throw ArgumentError("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  entries_.emplace(name, std::move(value));
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ArgumentError("unknown parameter: " + name);
  return it->second;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ArgumentError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamSet::total_values() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.add(name, t.detach());
  return out;
}

RunningStats& NormState::at(const std::string& name) {
  auto it = stats_.find(name);
  if (it == stats_.end()) throw ArgumentError("unknown norm buffer: " + name);
  return it->second;
}

const RunningStats& NormState::at(const std::string& name) const {
  auto it = stats_.find(name);
  if (it == stats_.end()) throw ArgumentError("unknown norm buffer: " + name);
  return it->second;
}

void NormState::add(const std::string& name, RunningStats stats) {
  if (stats_.count(name)) throw ArgumentError("duplicate norm buffer: " + name);
  stats_.emplace(name, std::move(stats));
}

void ParamDecls::weight(const std::string& name, std::size_t fan_in, std::size_t fan_out) {
  params.push_back({name, {fan_in, fan_out}, fan_in, ParamRole::weight});
}

void ParamDecls::bias(const std::string& name, std::size_t width) {
  params.push_back({name, {width}, 1, ParamRole::bias});
}

void ParamDecls::norm(const std::string& prefix, std::size_t width) {
  params.push_back({prefix + ".gamma", {width}, 1, ParamRole::norm_scale});
  params.push_back({prefix + ".beta", {width}, 1, ParamRole::norm_shift});
  norms.emplace_back(prefix, width);
}

ParamSet materialize(const ParamDecls& decls, std::uint64_t seed) {
  ParamSet out;
  for (const auto& d : decls.params) {
    const std::size_t n = shape_numel(d.shape);
    std::vector<double> values(n, 0.0);
    switch (d.role) {
      case ParamRole::weight: {
        Rng rng(derive_seed(seed, d.name));
        const double bound = 1.0 / std::sqrt(static_cast<double>(d.fan_in));
        for (auto& v : values) v = rng.uniform(-bound, bound);
        break;
      }
      case ParamRole::norm_scale:
        std::fill(values.begin(), values.end(), 1.0);
        break;
      case ParamRole::bias:
      case ParamRole::norm_shift:
        break;
    }
    out.add(d.name, Tensor(d.shape, std::move(values), true));
  }
  return out;
}

NormState materialize_norms(const ParamDecls& decls) {
  NormState out;
  for (const auto& [name, width] : decls.norms) out.add(name, RunningStats::fresh(width));
  return out;
}

void adam_step(ParamSet& params, AdamState& state, const AdamOptions& opts) {
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) throw ContractError("adam_step: parameter '" + name + "' has no gradient");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.t));
  for (auto& [name, t] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(t.numel(), 0.0);
      v.assign(t.numel(), 0.0);
    }
    const auto g = t.grad();
    auto w = t.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= opts.lr * mhat / (std::sqrt(vhat) + opts.eps);
    }
  }
}

}  // namespace spcnet
