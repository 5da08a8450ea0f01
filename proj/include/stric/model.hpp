#pragma once

#include "stric/fading.hpp"
#include "stric/ldl.hpp"
#include "stric/tcn.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stric {

/// splitmix64 step; derives independent sub-seeds from one run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct ModelConfig {
    std::size_t n_channels = 1;
    std::size_t n_past = 100;
    std::size_t n_future = 10;
    std::size_t l_trend = 10;
    std::size_t l_seasonal = 100;
    std::size_t l_linear = 200;
    std::size_t kernel_length = 0;  // 0: ceil(n_past / 2)
    double rho_max = 0.99;
    bool use_ldl = true;
    bool use_fading = true;
    double lambda_init = 0.99;
    double kappa_init = 1.0;
    double tcn_a_init_std = 0.0;   // > 0: normal readout init; 0: uniform on +-1 / sqrt(TCN output features)
    tcn::TcnConfig tcn;

    std::size_t resolved_kernel_length() const;
    void validate() const;
};

/// Ablation variants: plain TCN, TCN behind the filter banks, TCN with the
/// fading loss, and both.
enum class Variant { kTcn, kTcnLinear, kTcnFading, kStric };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
ModelConfig apply_variant(ModelConfig config, Variant v);

class StricModel {
public:
    StricModel() = default;
    StricModel(const ModelConfig& config, std::uint64_t seed);

    ModelConfig config;
    std::uint64_t seed = 0;
    ldl::Cascade cascade;
    tcn::Network network;
    tcn::FeatureNorm norm;
    tcn::TcnHeads heads;
    train::FadingPrior prior;

    /// Same shapes, every learnable entry zero. Used as gradient storage.
    StricModel zeros_like() const;
};

/// A named view of one learnable tensor. `group` is one of kernels, A, B,
/// b, lambda, kappa, eta2, tcn_weights, norm_affine.
struct ParamRef {
    std::string group;
    std::string name;
    std::span<double> values;
    std::size_t rows = 0;  // column-major shape of `values`
    std::size_t cols = 0;
};

/// Learnable tensors in a fixed order that depends only on the config, so
/// parameters(model) and parameters(gradient) line up entry by entry.
std::vector<ParamRef> parameters(StricModel& model);

std::size_t parameter_count(StricModel& model);

struct WindowOutput {
    ldl::Decomposition decomposition;
    tcn::Readout readout;
    Eigen::VectorXd tcn_prediction;
    Eigen::VectorXd prediction;  // sum of block predictions and the TCN readout
};

/// Eval-mode forward pass of one n x n_p window.
WindowOutput predict_window(const StricModel& model, const Eigen::MatrixXd& window);

/// Eval-mode one-step predictions of data columns [t_begin, t_end), each
/// from the n_p columns before it. Requires t_begin >= n_p.
Eigen::MatrixXd one_step_predictions(const StricModel& model, const Eigen::MatrixXd& data, std::size_t t_begin,
                                     std::size_t t_end);

} // namespace stric
