#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spcnet/tensor.hpp"

namespace spcnet {

/// Named trainable tensors, "<module>.<layer>.<role>". Ordered by name so
/// every traversal (init, optimiser, serialisation) is deterministic.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;

  /// Inserts a parameter; it is marked as requiring gradients.
  void add(const std::string& name, Tensor value);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_values() const;

  void zero_grad();
  /// Deep copy with fresh leaf tensors.
  ParamSet clone() const;

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }

 private:
  Map entries_;
};

/// Batch-norm running statistics, keyed like the layer that owns them.
class NormState {
 public:
  RunningStats& at(const std::string& name);
  const RunningStats& at(const std::string& name) const;
  void add(const std::string& name, RunningStats stats);
  bool contains(const std::string& name) const { return stats_.count(name) != 0; }
  std::size_t size() const { return stats_.size(); }

  auto begin() const { return stats_.begin(); }
  auto end() const { return stats_.end(); }

 private:
  std::map<std::string, RunningStats> stats_;
};

enum class ParamRole { weight, bias, norm_scale, norm_shift };

struct ParamDecl {
  std::string name;
  Shape shape;
  std::size_t fan_in = 1;
  ParamRole role = ParamRole::weight;
};

/// Parameter and norm-buffer declarations of one architecture.
struct ParamDecls {
  std::vector<ParamDecl> params;
  std::vector<std::pair<std::string, std::size_t>> norms;  // name, channels

  void weight(const std::string& name, std::size_t fan_in, std::size_t fan_out);
  void bias(const std::string& name, std::size_t width);
  /// gamma/beta parameters plus the running-statistics buffer.
  void norm(const std::string& prefix, std::size_t width);
};

/// Weights ~ uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) from a per-name
/// stream, biases and shifts 0, scales 1.
ParamSet materialize(const ParamDecls& decls, std::uint64_t seed);
NormState materialize_norms(const ParamDecls& decls);

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update over every parameter. Gradients are left
/// in place; a parameter that never received one is a contract error.
void adam_step(ParamSet& params, AdamState& state, const AdamOptions& opts = {});

}  // namespace spcnet
