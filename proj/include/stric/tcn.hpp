#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace stric::tcn {

enum class Activation { kRelu, kIdentity };

struct TcnConfig {
    std::size_t layers = 8;
    std::size_t channels = 32;
    std::size_t kernel_size = 5;
    Activation activation = Activation::kRelu;

    /// Each residual block holds two convolutions with dilation 2^layer, so
    /// the stack sees 1 + 2 (k - 1)(2^h - 1) samples.
    std::size_t receptive_field() const;
    void validate() const;
};

/// Dilated causal convolution: out(o, t) = bias(o) + sum_k taps[k](o, :) in(:, t - k d).
struct CausalConv {
    std::vector<Eigen::MatrixXd> taps;  // kernel_size matrices, out x in
    Eigen::VectorXd bias;
    std::size_t dilation = 1;

    Eigen::MatrixXd forward(const Eigen::MatrixXd& in) const;
    /// Accumulates weight gradients into `grad`; returns dL/d input.
    Eigen::MatrixXd backward(const Eigen::MatrixXd& in, const Eigen::MatrixXd& d_out, CausalConv& grad) const;
};

/// conv -> act -> conv -> act, plus identity or 1x1 projection skip, then act.
struct ResidualBlock {
    CausalConv conv1;
    CausalConv conv2;
    bool has_projection = false;
    Eigen::MatrixXd projection;       // out x in
    Eigen::VectorXd projection_bias;
};

/// Intermediate values one window needs for its backward pass.
struct NetworkCache {
    struct Block {
        Eigen::MatrixXd input;
        Eigen::MatrixXd pre1;
        Eigen::MatrixXd act1;
        Eigen::MatrixXd pre2;
        Eigen::MatrixXd pre_out;
    };
    std::vector<Block> blocks;
};

class Network {
public:
    Network() = default;
    Network(std::size_t input_channels, const TcnConfig& config, std::uint64_t seed);

    const TcnConfig& config() const { return config_; }
    std::size_t input_channels() const { return input_channels_; }
    std::size_t output_features() const { return config_.channels; }

    std::vector<ResidualBlock>& blocks() { return blocks_; }
    const std::vector<ResidualBlock>& blocks() const { return blocks_; }

    /// X: input_channels x n_p -> G: output_features x n_p. Column j of the
    /// output depends only on input columns <= j.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& X, NetworkCache* cache = nullptr) const;

    /// Returns dL/dX and accumulates parameter gradients into `grad`
    /// (a zeros_like() network).
    Eigen::MatrixXd backward(const NetworkCache& cache, const Eigen::MatrixXd& d_out, Network& grad) const;

    Network zeros_like() const;

private:
    std::size_t input_channels_ = 0;
    TcnConfig config_;
    std::vector<ResidualBlock> blocks_;
};

enum class NormMode { kTrain, kEval };

/// Per-feature normalization with batch statistics pooled over windows and
/// time indices (train) or exponential running averages (eval), followed by
/// a learnable per-feature affine map.
struct FeatureNorm {
    Eigen::VectorXd scale;
    Eigen::VectorXd shift;
    Eigen::VectorXd running_mean;
    Eigen::VectorXd running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;

    explicit FeatureNorm(std::size_t features = 0);
};

struct NormCache {
    std::vector<Eigen::MatrixXd> normalized;  // before the affine map
    Eigen::VectorXd inv_std;
    Eigen::VectorXd variance;
    NormMode mode = NormMode::kTrain;
};

/// Normalizes every window in `batch`. In train mode the running statistics
/// are updated when `update_running` is set.
std::vector<Eigen::MatrixXd> feature_norm(const std::vector<Eigen::MatrixXd>& batch, FeatureNorm& norm, NormMode mode,
                                          NormCache* cache = nullptr, bool update_running = true);

/// Eval-mode normalization of one window.
Eigen::MatrixXd feature_norm_eval(const Eigen::MatrixXd& G, const FeatureNorm& norm);

/// Backward of feature_norm; fills d_scale / d_shift (accumulated).
std::vector<Eigen::MatrixXd> feature_norm_backward(const std::vector<Eigen::MatrixXd>& d_out, const FeatureNorm& norm,
                                                   const NormCache& cache, Eigen::VectorXd& d_scale,
                                                   Eigen::VectorXd& d_shift);

/// Per-channel linear readout: A (n x l3) selects features, B (n x n_p)
/// combines time indices. B rows carry the fading prior.
struct TcnHeads {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
};

struct Readout {
    Eigen::MatrixXd rows;        // X_hat_TCN = A G, n x n_p
    Eigen::VectorXd prediction;  // row_i . b_i
};

Readout tcn_readout(const Eigen::MatrixXd& G, const TcnHeads& heads);

} // namespace stric::tcn
