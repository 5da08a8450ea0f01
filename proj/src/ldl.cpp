#include "stric/ldl.hpp"

#include "stric/error.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace stric::ldl {

namespace {

using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LongVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

// (0, upper) with both endpoints excluded.
double open_uniform(std::mt19937_64& rng, double upper) {
    std::uniform_real_distribution<double> dist(0.0, upper);
    double v = 0.0;
    do {
        v = dist(rng);
    } while (v <= 0.0 || v >= upper);
    return v;
}

void check_bank_args(std::size_t count, std::size_t length, const char* what) {
    if (count < 1 || length < 1) {
        throw std::invalid_argument(std::string(what) + ": need at least one filter of length >= 1");
    }
}

} // namespace

std::string to_string(BlockKind kind) {
    switch (kind) {
    case BlockKind::kTrend:
        return "trend";
    case BlockKind::kSeasonal:
        return "seasonal";
    case BlockKind::kLinear:
        return "linear";
    }
    return "unknown";
}

FilterBank::FilterBank(Eigen::MatrixXd kernels, BlockKind kind)
    : kernels_(std::move(kernels)), init_snapshot_(kernels_), kind_(kind) {
    if (kernels_.rows() < 1 || kernels_.cols() < 1) {
        throw std::invalid_argument("filter bank needs at least one kernel of length >= 1");
    }
    if (!kernels_.allFinite()) {
        throw NumericError("filter bank kernels must be finite");
    }
}

FilterBank FilterBank::restore(Eigen::MatrixXd kernels, Eigen::MatrixXd init_snapshot, BlockKind kind) {
    if (kernels.rows() != init_snapshot.rows() || kernels.cols() != init_snapshot.cols()) {
        throw std::invalid_argument("kernel and snapshot shapes differ");
    }
    FilterBank bank(std::move(init_snapshot), kind);
    bank.kernels_ = std::move(kernels);
    if (!bank.kernels_.allFinite()) {
        throw NumericError("filter bank kernels must be finite");
    }
    return bank;
}

BlockHeads make_heads(std::size_t n_channels, std::size_t bank_size, std::size_t n_past, BMode mode,
                      double a_init) {
    BlockHeads heads;
    heads.A = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n_channels), static_cast<Eigen::Index>(bank_size),
                                        a_init);
    heads.B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_channels), static_cast<Eigen::Index>(n_past));
    heads.B.col(static_cast<Eigen::Index>(n_past) - 1).setOnes();
    heads.b_mode = mode;
    return heads;
}

std::vector<double> causal_conv(std::span<const double> x, std::span<const double> kernel) {
    if (kernel.empty()) {
        throw std::invalid_argument("causal_conv: empty kernel");
    }
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t t = 0; t < x.size(); ++t) {
        const std::size_t taps = std::min(kernel.size(), t + 1);
        double acc = 0.0;
        for (std::size_t i = 0; i < taps; ++i) {
            acc += kernel[i] * x[t - i];
        }
        y[t] = acc;
    }
    return y;
}

Eigen::VectorXd hp_causal_kernel(double lambda_hp, std::size_t length) {
    if (length < 1) {
        throw std::invalid_argument("hp_causal_kernel: length must be >= 1");
    }
    if (!(lambda_hp >= 0.0) || !std::isfinite(lambda_hp)) {
        throw std::invalid_argument("hp_causal_kernel: lambda must be finite and >= 0");
    }
    const auto N = static_cast<Eigen::Index>(length);
    LongMatrix system = LongMatrix::Identity(N, N);
    if (N >= 3) {
        LongMatrix D = LongMatrix::Zero(N - 2, N);
        for (Eigen::Index r = 0; r < N - 2; ++r) {
            D(r, r) = 1.0L;
            D(r, r + 1) = -2.0L;
            D(r, r + 2) = 1.0L;
        }
        system += static_cast<long double>(lambda_hp) * D.transpose() * D;
    }
    // The smoother is symmetric, so its last row is the solution against e_N.
    // One refinement step recovers the digits lost to the 1e9-scale
    // conditioning of the large-lambda filters.
    LongVector rhs = LongVector::Zero(N);
    rhs(N - 1) = 1.0L;
    const Eigen::LDLT<LongMatrix> ldlt(system);
    LongVector row = ldlt.solve(rhs);
    row += ldlt.solve(rhs - system * row);

    Eigen::VectorXd kernel(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        kernel(i) = static_cast<double>(row(N - 1 - i));
    }
    return kernel;
}

Eigen::VectorXd seasonal_kernel(double omega, std::size_t length) {
    Eigen::VectorXd k(static_cast<Eigen::Index>(length));
    for (Eigen::Index t = 0; t < k.size(); ++t) {
        k(t) = std::cos(omega * static_cast<double>(t));
    }
    return k / k.norm();
}

Eigen::VectorXd damped_kernel(double radius, double theta, std::size_t length) {
    Eigen::VectorXd k(static_cast<Eigen::Index>(length));
    double amp = 1.0;
    for (Eigen::Index t = 0; t < k.size(); ++t) {
        k(t) = amp * std::cos(theta * static_cast<double>(t));
        amp *= radius;
    }
    return k / k.norm();
}

double truncation_tail_energy(double radius, std::size_t length) {
    if (!(radius >= 0.0 && radius < 1.0)) {
        throw std::invalid_argument("truncation_tail_energy: radius must lie in [0, 1)");
    }
    const double r2 = radius * radius;
    return std::pow(r2, static_cast<double>(length)) / (1.0 - r2);
}

std::size_t kernel_length_for_tail(double radius, double tolerance) {
    std::size_t length = 1;
    while (truncation_tail_energy(radius, length) >= tolerance) {
        ++length;
    }
    return length;
}

FilterBank init_trend_bank(std::size_t count, std::size_t length, std::uint64_t seed) {
    check_bank_args(count, length, "init_trend_bank");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> log_lambda(3.0, 9.0);
    Eigen::MatrixXd kernels(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(length));
    for (Eigen::Index j = 0; j < kernels.rows(); ++j) {
        kernels.row(j) = hp_causal_kernel(std::pow(10.0, log_lambda(rng)), length).transpose();
    }
    return FilterBank(std::move(kernels), BlockKind::kTrend);
}

FilterBank init_seasonal_bank(std::size_t count, std::size_t length, std::uint64_t seed) {
    check_bank_args(count, length, "init_seasonal_bank");
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd kernels(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(length));
    for (Eigen::Index j = 0; j < kernels.rows(); ++j) {
        kernels.row(j) = seasonal_kernel(open_uniform(rng, std::numbers::pi), length).transpose();
    }
    return FilterBank(std::move(kernels), BlockKind::kSeasonal);
}

FilterBank init_linear_bank(std::size_t count, std::size_t length, std::uint64_t seed, double rho_max) {
    check_bank_args(count, length, "init_linear_bank");
    if (!(rho_max > 0.0 && rho_max < 1.0)) {
        throw std::invalid_argument("init_linear_bank: rho_max must lie in (0, 1)");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd kernels(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(length));
    for (Eigen::Index j = 0; j < kernels.rows(); ++j) {
        // rho_max * (1 - u), u in [0, 1): radius in (0, rho_max].
        const double radius = rho_max * (1.0 - unit(rng));
        const double theta = open_uniform(rng, std::numbers::pi);
        kernels.row(j) = damped_kernel(radius, theta, length).transpose();
    }
    return FilterBank(std::move(kernels), BlockKind::kLinear);
}

BlockOutput block_forward(const Eigen::MatrixXd& X, const FilterBank& bank, const BlockHeads& heads) {
    const auto n = X.rows();
    const auto np = X.cols();
    const auto l = static_cast<Eigen::Index>(bank.size());
    if (heads.A.rows() != n || heads.A.cols() != l) {
        throw std::invalid_argument("block_forward: A must be " + std::to_string(n) + " x " + std::to_string(l));
    }
    if (heads.B.rows() != n || heads.B.cols() != np) {
        throw std::invalid_argument("block_forward: B must be " + std::to_string(n) + " x " + std::to_string(np));
    }

    BlockOutput out;
    out.component.resize(n, np);
    out.prediction.resize(n);
    out.features.reserve(static_cast<std::size_t>(n));
    std::vector<double> channel(static_cast<std::size_t>(np));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index t = 0; t < np; ++t) {
            channel[static_cast<std::size_t>(t)] = X(i, t);
        }
        Eigen::MatrixXd G(l, np);
        for (Eigen::Index j = 0; j < l; ++j) {
            const Eigen::VectorXd kernel = bank.kernels().row(j).transpose();
            const auto y = causal_conv(channel, std::span<const double>(kernel.data(), kernel.size()));
            for (Eigen::Index t = 0; t < np; ++t) {
                G(j, t) = y[static_cast<std::size_t>(t)];
            }
        }
        out.component.row(i) = heads.A.row(i) * G;
        out.prediction(i) = heads.b_mode == BMode::kCanonicalLast ? out.component(i, np - 1)
                                                                  : out.component.row(i).dot(heads.B.row(i));
        out.features.push_back(std::move(G));
    }
    return out;
}

Eigen::VectorXd Decomposition::total_prediction() const {
    return predictions[0] + predictions[1] + predictions[2];
}

Eigen::MatrixXd effective_kernels(const FilterBank& bank, const BlockHeads& heads) {
    if (heads.A.cols() != bank.kernels().rows()) {
        throw std::invalid_argument("effective_kernels: selector width does not match bank size");
    }
    return heads.A * bank.kernels();
}

CascadeEngine::CascadeEngine(const Cascade& cascade) : cascade_(cascade) {
    if (cascade_.enabled) {
        for (std::size_t k = 0; k < kNumBlocks; ++k) {
            effective_[k] = effective_kernels(cascade_.banks[k], cascade_.heads[k]);
        }
    }
}

Decomposition CascadeEngine::forward(const Eigen::MatrixXd& Y,
                                     std::array<Eigen::MatrixXd, kNumBlocks>* inputs) const {
    const auto n = Y.rows();
    const auto np = Y.cols();
    Decomposition dec;
    if (!cascade_.enabled) {
        for (std::size_t k = 0; k < kNumBlocks; ++k) {
            dec.components[k] = Eigen::MatrixXd::Zero(n, np);
            dec.predictions[k] = Eigen::VectorXd::Zero(n);
            if (inputs) {
                (*inputs)[k] = Y;
            }
        }
        dec.residual = Y;
        return dec;
    }

    Eigen::MatrixXd X = Y;
    for (std::size_t k = 0; k < kNumBlocks; ++k) {
        const auto& eff = effective_[k];
        const auto& heads = cascade_.heads[k];
        if (eff.rows() != n || heads.B.cols() != np) {
            throw std::invalid_argument("cascade: window shape does not match model (" + std::to_string(n) + " x " +
                                        std::to_string(np) + ")");
        }
        const Eigen::Index taps = std::min<Eigen::Index>(eff.cols(), np);
        Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, np);
        for (Eigen::Index j = 0; j < taps; ++j) {
            comp.rightCols(np - j).noalias() += eff.col(j).asDiagonal() * X.leftCols(np - j);
        }
        if (heads.b_mode == BMode::kCanonicalLast) {
            dec.predictions[k] = comp.col(np - 1);
        } else {
            dec.predictions[k] = comp.cwiseProduct(heads.B).rowwise().sum();
        }
        if (inputs) {
            (*inputs)[k] = X;
        }
        X -= comp;
        dec.components[k] = std::move(comp);
    }
    dec.residual = std::move(X);
    return dec;
}

CascadeEngine::Grad CascadeEngine::zero_grad() const {
    Grad g;
    for (std::size_t k = 0; k < kNumBlocks; ++k) {
        if (cascade_.enabled) {
            g.effective[k] = Eigen::MatrixXd::Zero(effective_[k].rows(), effective_[k].cols());
            g.B[k] = Eigen::MatrixXd::Zero(cascade_.heads[k].B.rows(), cascade_.heads[k].B.cols());
        }
    }
    return g;
}

void CascadeEngine::backward(const std::array<Eigen::MatrixXd, kNumBlocks>& inputs, const Decomposition& dec,
                             const Eigen::MatrixXd& d_residual, const Eigen::VectorXd& d_prediction,
                             Grad& grad) const {
    if (!cascade_.enabled) {
        return;
    }
    // dX carries dL/dX_{k+1} into iteration k and leaves with dL/dX_k.
    Eigen::MatrixXd dX = d_residual;
    for (std::size_t kk = kNumBlocks; kk-- > 0;) {
        const auto& eff = effective_[kk];
        const auto& heads = cascade_.heads[kk];
        const auto& X = inputs[kk];
        const auto np = X.cols();

        Eigen::MatrixXd d_comp = -dX;
        if (heads.b_mode == BMode::kCanonicalLast) {
            d_comp.col(np - 1) += d_prediction;
        } else {
            d_comp += d_prediction.asDiagonal() * heads.B;
            grad.B[kk] += d_prediction.asDiagonal() * dec.components[kk];
        }

        const Eigen::Index taps = std::min<Eigen::Index>(eff.cols(), np);
        for (Eigen::Index j = 0; j < taps; ++j) {
            grad.effective[kk].col(j) += d_comp.rightCols(np - j).cwiseProduct(X.leftCols(np - j)).rowwise().sum();
        }
        if (kk > 0) {
            for (Eigen::Index j = 0; j < taps; ++j) {
                dX.leftCols(np - j).noalias() += eff.col(j).asDiagonal() * d_comp.rightCols(np - j);
            }
        }
    }
}

void CascadeEngine::finalize(const Grad& grad, std::array<Eigen::MatrixXd, kNumBlocks>& d_kernels,
                             std::array<Eigen::MatrixXd, kNumBlocks>& d_A) const {
    if (!cascade_.enabled) {
        return;
    }
    for (std::size_t k = 0; k < kNumBlocks; ++k) {
        d_A[k] += grad.effective[k] * cascade_.banks[k].kernels().transpose();
        d_kernels[k] += cascade_.heads[k].A.transpose() * grad.effective[k];
    }
}

Decomposition cascade_forward(const Eigen::MatrixXd& Y, const Cascade& cascade) {
    return CascadeEngine(cascade).forward(Y, nullptr);
}

} // namespace stric::ldl
