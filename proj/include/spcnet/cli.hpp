#pragma once

#include <string>
#include <vector>

#include "spcnet/model.hpp"

namespace spcnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"scm1", "scm2",   "pointnet-mlp", "one-subnet", "no-agg",
                                          "edge-conv", "rps", "pnk-pn", "pnkk-pn"};
  return v;
}

/// The configuration switch behind an ablation variant name.
ModelConfig apply_variant(ModelConfig config, const std::string& variant);

/// Runs one subcommand; args excludes the program name. Returns the exit code.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace spcnet::cli
