#pragma once

#include <cstdint>
#include <filesystem>

#include "cqrank/neural/mlp.hpp"

namespace cqrank::nn {

/// Model plus optimizer state plus the number of completed epochs.
struct Checkpoint {
    Mlp model;
    Adam optimizer;
    std::uint64_t epochs_completed = 0;
};

/// Layout (little-endian): "CQMLP1", u16 version, u32 layer count,
/// u32 widths[layer count + 1], f64 dropout rate, per layer the weights
/// row-major then the bias (f64), then Adam: u64 t, f64 learning rate,
/// beta1, beta2, epsilon, first moments, second moments (parameter
/// layout), then u64 epochs completed, then a CRC-64 of all prior bytes.
inline constexpr char kCheckpointMagic[6] = {'C', 'Q', 'M', 'L', 'P', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Returns the hex checksum.
std::string save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cqrank::nn
