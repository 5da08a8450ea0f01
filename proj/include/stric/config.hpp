#pragma once

#include "stric/detector.hpp"
#include "stric/model.hpp"
#include "stric/train.hpp"

#include <json.hpp>

#include <string>

namespace stric::config {

struct DataSection {
    std::string path;
    double train_frac = 0.5;
    double val_frac = 0.1;  // fraction of the training portion
};

/// Parsed run configuration. Every section and key is optional; unknown
/// keys and out-of-range values raise ConfigError naming the key.
struct RunConfig {
    DataSection data;
    ModelConfig model;
    Variant variant = Variant::kStric;
    train::TrainConfig train;
    detector::DetectorConfig detector;

    void validate() const;
};

/// Document layout:
///   data     {path, train_frac, val_frac}
///   model    {n_p, n_f, l0, l1, l2, kernel_length, rho_max, lambda_init,
///             kappa_init, variant, tcn {layers, channels, kernel}}
///   train    {lr, batch, epochs, patience, seed, l1_weight, kernel_weight,
///             learn_eta2, eta2}
///   detector {n_n, n_a, sigma (number or "median"), gamma, epsilon,
///             ratio_floor, constrained, ridge_scale ("reference"|"centers")}
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

nlohmann::json model_to_json(const ModelConfig& model);
ModelConfig model_from_json(const nlohmann::json& j);

} // namespace stric::config
