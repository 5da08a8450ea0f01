#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

// Linear dynamic layers: banks of truncated causal impulse responses that
// peel trend, seasonal and stationary-linear structure off a window before
// it reaches the nonlinear stage.
namespace stric::ldl {

enum class BlockKind { kTrend = 0, kSeasonal = 1, kLinear = 2 };

inline constexpr std::size_t kNumBlocks = 3;

std::string to_string(BlockKind kind);

/// Rows of `kernels` are impulse responses in convolution order:
/// kernels(j, i) multiplies x(t - i).
class FilterBank {
public:
    FilterBank() = default;
    FilterBank(Eigen::MatrixXd kernels, BlockKind kind);

    /// Restores a bank whose kernels moved away from their initialization.
    static FilterBank restore(Eigen::MatrixXd kernels, Eigen::MatrixXd init_snapshot, BlockKind kind);

    Eigen::MatrixXd& kernels() { return kernels_; }
    const Eigen::MatrixXd& kernels() const { return kernels_; }
    const Eigen::MatrixXd& init_snapshot() const { return init_snapshot_; }
    BlockKind kind() const { return kind_; }

    std::size_t size() const { return static_cast<std::size_t>(kernels_.rows()); }
    std::size_t kernel_length() const { return static_cast<std::size_t>(kernels_.cols()); }

private:
    Eigen::MatrixXd kernels_;
    Eigen::MatrixXd init_snapshot_;
    BlockKind kind_ = BlockKind::kTrend;
};

enum class BMode { kDense, kCanonicalLast };

/// Per-channel feature selectors (rows of A, n x l) and temporal combiners
/// (rows of B, n x n_p). In kCanonicalLast mode B is e_{n_p-1} for every
/// channel and is not learned.
struct BlockHeads {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    BMode b_mode = BMode::kCanonicalLast;
};

BlockHeads make_heads(std::size_t n_channels, std::size_t bank_size, std::size_t n_past, BMode mode,
                      double a_init);

/// y(t) = sum_i kernel(i) x(t - i), zero before the window start.
std::vector<double> causal_conv(std::span<const double> x, std::span<const double> kernel);

/// Causal endpoint row of the Hodrick-Prescott smoother (I + lambda D'D)^-1
/// on a window of `length` samples, reversed into convolution order.
/// lambda_hp == 0 gives the unit impulse.
Eigen::VectorXd hp_causal_kernel(double lambda_hp, std::size_t length);

FilterBank init_trend_bank(std::size_t count, std::size_t length, std::uint64_t seed);
FilterBank init_seasonal_bank(std::size_t count, std::size_t length, std::uint64_t seed);
FilterBank init_linear_bank(std::size_t count, std::size_t length, std::uint64_t seed, double rho_max = 0.99);

/// Unit-norm cos(omega t), t = 0..length-1.
Eigen::VectorXd seasonal_kernel(double omega, std::size_t length);
/// Unit-norm r^t cos(theta t), t = 0..length-1.
Eigen::VectorXd damped_kernel(double radius, double theta, std::size_t length);

/// sum_{t >= length} r^{2t}: energy of an undamped-amplitude r^t response
/// lost by truncating it to `length` taps.
double truncation_tail_energy(double radius, std::size_t length);
/// Smallest length whose truncation_tail_energy is below `tolerance`.
std::size_t kernel_length_for_tail(double radius, double tolerance);

struct BlockOutput {
    Eigen::MatrixXd component;              // X_hat, n x n_p
    Eigen::VectorXd prediction;             // y_hat, n
    std::vector<Eigen::MatrixXd> features;  // per channel G_i, l x n_p
};

/// Explicit per-channel feature stacks: G_i = bank * X_i, X_hat_i = a_i' G_i,
/// y_hat_i = X_hat_i b_i.
BlockOutput block_forward(const Eigen::MatrixXd& X, const FilterBank& bank, const BlockHeads& heads);

/// The three LDL blocks applied as a residual cascade.
struct Cascade {
    std::array<FilterBank, kNumBlocks> banks;
    std::array<BlockHeads, kNumBlocks> heads;
    bool enabled = true;
};

struct Decomposition {
    std::array<Eigen::MatrixXd, kNumBlocks> components;  // trend, seasonal, linear
    std::array<Eigen::VectorXd, kNumBlocks> predictions;
    Eigen::MatrixXd residual;                            // X_3, input to the TCN

    Eigen::VectorXd total_prediction() const;
};

/// X_0 = Y, X_{k+1} = X_k - X_hat_k. A disabled cascade passes Y through.
Decomposition cascade_forward(const Eigen::MatrixXd& Y, const Cascade& cascade);

/// Per-channel effective kernels a_i' K (n x N). Since the selectors act
/// linearly on the feature stack, X_hat_i = effective_i * X_i.
Eigen::MatrixXd effective_kernels(const FilterBank& bank, const BlockHeads& heads);

/// Cascade forward/backward through effective kernels; the per-feature
/// stacks are never materialized. Effective kernels are computed once per
/// batch and shared by every window.
class CascadeEngine {
public:
    explicit CascadeEngine(const Cascade& cascade);

    /// Decomposition of one window; `inputs` receives X_0, X_1, X_2 for
    /// a later backward call.
    Decomposition forward(const Eigen::MatrixXd& Y, std::array<Eigen::MatrixXd, kNumBlocks>* inputs) const;

    struct Grad {
        std::array<Eigen::MatrixXd, kNumBlocks> effective;  // dL/d effective kernel, n x N_k
        std::array<Eigen::MatrixXd, kNumBlocks> B;          // dL/dB (dense mode only)
    };

    Grad zero_grad() const;

    /// Accumulates parameter gradients of one window given dL/dX_3 and
    /// dL/dy_hat (total prediction, n-vector).
    void backward(const std::array<Eigen::MatrixXd, kNumBlocks>& inputs, const Decomposition& dec,
                  const Eigen::MatrixXd& d_residual, const Eigen::VectorXd& d_prediction, Grad& grad) const;

    /// Chains effective-kernel gradients into kernel and selector gradients.
    void finalize(const Grad& grad, std::array<Eigen::MatrixXd, kNumBlocks>& d_kernels,
                  std::array<Eigen::MatrixXd, kNumBlocks>& d_A) const;

private:
    const Cascade& cascade_;
    std::array<Eigen::MatrixXd, kNumBlocks> effective_;
};

} // namespace stric::ldl
