#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spcnet/model.hpp"
#include "spcnet/params.hpp"

namespace spcnet {

/// One trained network with its running statistics and optimiser state.
struct Network {
  ModelConfig config;
  ParamSet params;
  NormState norms;
  AdamState adam;
};

struct TrainMeta {
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::l4;
  std::size_t batch_size = 24;
  double lr = 1e-4;
  double lr_decay = 1.0;
};

/// nets[0] maps P_N to P_M. In the joint regime nets[1] maps P_M to P_N.
struct Checkpoint {
  std::vector<Network> nets;
  TrainMeta meta;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "SPCN", u32 version, u32-length config block, u32 tensor count, then per
/// tensor u32-length name, u32 rank, u64 extents and f32 values. All
/// integers and floats little-endian.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Decodes the whole buffer before returning; errors name the byte offset.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter, buffer and moment to the nearest float, so that
/// a save/load cycle reproduces the in-memory state exactly.
void quantize_to_float(Network& net);

}  // namespace spcnet
