#pragma once

#include "stric/model.hpp"
#include "stric/series.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace stric::checkpoint {

inline constexpr const char* kFormat = "stric-checkpoint";
inline constexpr int kVersion = 1;

/// A trained model plus what is needed to apply it to new raw data.
struct Checkpoint {
    StricModel model;
    series::StandardizeStats stats;  // train+val statistics used to standardize inputs
    Eigen::VectorXd residual_std;    // per-channel std of standardized training residuals
    std::string variant;
    std::size_t best_epoch = 0;
};

/// JSON document: format tag, version, model config and seed, the
/// standardization statistics, every learnable tensor keyed by its
/// parameter name with an explicit shape, running normalization statistics
/// and the prior state. Output is byte-stable for identical inputs.
void save(const Checkpoint& ckpt, const std::string& path);

/// Rebuilds the model from its config and seed (which regenerates fixed
/// matrices and initialization snapshots), then overwrites every stored
/// tensor. Throws DataError on a wrong format, version or shape.
Checkpoint load(const std::string& path);

} // namespace stric::checkpoint
