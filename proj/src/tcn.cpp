#include "stric/tcn.hpp"

#include "stric/error.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace stric::tcn {

namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& x, Activation act) {
    return act == Activation::kRelu ? Eigen::MatrixXd(x.cwiseMax(0.0)) : x;
}

// d_out masked by the activation derivative at `pre`.
Eigen::MatrixXd activate_backward(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& d_out, Activation act) {
    if (act == Activation::kIdentity) {
        return d_out;
    }
    return (pre.array() > 0.0).select(d_out, 0.0);
}

CausalConv make_conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t dilation,
                     std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in * kernel)));
    CausalConv conv;
    conv.dilation = dilation;
    conv.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
    for (std::size_t k = 0; k < kernel; ++k) {
        Eigen::MatrixXd w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w.data()[i] = normal(rng);
        }
        conv.taps.push_back(std::move(w));
    }
    return conv;
}

CausalConv zero_conv_like(const CausalConv& c) {
    CausalConv z;
    z.dilation = c.dilation;
    z.bias = Eigen::VectorXd::Zero(c.bias.size());
    for (const auto& w : c.taps) {
        z.taps.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    return z;
}

} // namespace

std::size_t TcnConfig::receptive_field() const {
    return 1 + 2 * (kernel_size - 1) * ((std::size_t{1} << layers) - 1);
}

void TcnConfig::validate() const {
    if (layers < 1 || channels < 1 || kernel_size < 1) {
        throw ConfigError("tcn config needs layers, channels and kernel size >= 1");
    }
    if (layers > 30) {
        throw ConfigError("tcn config: at most 30 layers");
    }
}

Eigen::MatrixXd CausalConv::forward(const Eigen::MatrixXd& in) const {
    const auto np = in.cols();
    Eigen::MatrixXd out = bias.replicate(1, np);
    const auto d = static_cast<Eigen::Index>(dilation);
    for (std::size_t k = 0; k < taps.size(); ++k) {
        const Eigen::Index shift = static_cast<Eigen::Index>(k) * d;
        if (shift >= np) {
            break;
        }
        out.rightCols(np - shift).noalias() += taps[k] * in.leftCols(np - shift);
    }
    return out;
}

Eigen::MatrixXd CausalConv::backward(const Eigen::MatrixXd& in, const Eigen::MatrixXd& d_out,
                                     CausalConv& grad) const {
    const auto np = in.cols();
    Eigen::MatrixXd d_in = Eigen::MatrixXd::Zero(in.rows(), np);
    grad.bias += d_out.rowwise().sum();
    const auto d = static_cast<Eigen::Index>(dilation);
    for (std::size_t k = 0; k < taps.size(); ++k) {
        const Eigen::Index shift = static_cast<Eigen::Index>(k) * d;
        if (shift >= np) {
            break;
        }
        grad.taps[k].noalias() += d_out.rightCols(np - shift) * in.leftCols(np - shift).transpose();
        d_in.leftCols(np - shift).noalias() += taps[k].transpose() * d_out.rightCols(np - shift);
    }
    return d_in;
}

Network::Network(std::size_t input_channels, const TcnConfig& config, std::uint64_t seed)
    : input_channels_(input_channels), config_(config) {
    config_.validate();
    if (input_channels < 1) {
        throw ConfigError("tcn needs at least one input channel");
    }
    std::mt19937_64 rng(seed);
    std::size_t in = input_channels;
    for (std::size_t layer = 0; layer < config_.layers; ++layer) {
        const std::size_t dilation = std::size_t{1} << layer;
        ResidualBlock block;
        block.conv1 = make_conv(in, config_.channels, config_.kernel_size, dilation, rng);
        block.conv2 = make_conv(config_.channels, config_.channels, config_.kernel_size, dilation, rng);
        if (in != config_.channels) {
            block.has_projection = true;
            std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
            block.projection.resize(static_cast<Eigen::Index>(config_.channels), static_cast<Eigen::Index>(in));
            for (Eigen::Index i = 0; i < block.projection.size(); ++i) {
                block.projection.data()[i] = normal(rng);
            }
            block.projection_bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config_.channels));
        }
        blocks_.push_back(std::move(block));
        in = config_.channels;
    }
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& X, NetworkCache* cache) const {
    if (static_cast<std::size_t>(X.rows()) != input_channels_) {
        throw std::invalid_argument("tcn forward: expected " + std::to_string(input_channels_) + " input channels, got " +
                                    std::to_string(X.rows()));
    }
    const Activation act = config_.activation;
    if (cache) {
        cache->blocks.clear();
        cache->blocks.reserve(blocks_.size());
    }
    Eigen::MatrixXd x = X;
    for (const auto& block : blocks_) {
        Eigen::MatrixXd pre1 = block.conv1.forward(x);
        Eigen::MatrixXd act1 = activate(pre1, act);
        Eigen::MatrixXd pre2 = block.conv2.forward(act1);
        Eigen::MatrixXd pre_out = activate(pre2, act);
        if (block.has_projection) {
            pre_out.noalias() += block.projection * x;
            pre_out.colwise() += block.projection_bias;
        } else {
            pre_out += x;
        }
        Eigen::MatrixXd out = activate(pre_out, act);
        if (cache) {
            cache->blocks.push_back({std::move(x), std::move(pre1), std::move(act1), std::move(pre2), std::move(pre_out)});
        }
        x = std::move(out);
    }
    return x;
}

Eigen::MatrixXd Network::backward(const NetworkCache& cache, const Eigen::MatrixXd& d_out, Network& grad) const {
    const Activation act = config_.activation;
    Eigen::MatrixXd d = d_out;
    for (std::size_t b = blocks_.size(); b-- > 0;) {
        const auto& block = blocks_[b];
        const auto& c = cache.blocks[b];
        auto& g = grad.blocks_[b];

        const Eigen::MatrixXd d_pre_out = activate_backward(c.pre_out, d, act);
        Eigen::MatrixXd d_in;
        if (block.has_projection) {
            g.projection.noalias() += d_pre_out * c.input.transpose();
            g.projection_bias += d_pre_out.rowwise().sum();
            d_in = block.projection.transpose() * d_pre_out;
        } else {
            d_in = d_pre_out;
        }
        const Eigen::MatrixXd d_pre2 = activate_backward(c.pre2, d_pre_out, act);
        const Eigen::MatrixXd d_act1 = block.conv2.backward(c.act1, d_pre2, g.conv2);
        const Eigen::MatrixXd d_pre1 = activate_backward(c.pre1, d_act1, act);
        d_in += block.conv1.backward(c.input, d_pre1, g.conv1);
        d = std::move(d_in);
    }
    return d;
}

Network Network::zeros_like() const {
    Network z;
    z.input_channels_ = input_channels_;
    z.config_ = config_;
    for (const auto& block : blocks_) {
        ResidualBlock zb;
        zb.conv1 = zero_conv_like(block.conv1);
        zb.conv2 = zero_conv_like(block.conv2);
        zb.has_projection = block.has_projection;
        if (block.has_projection) {
            zb.projection = Eigen::MatrixXd::Zero(block.projection.rows(), block.projection.cols());
            zb.projection_bias = Eigen::VectorXd::Zero(block.projection_bias.size());
        }
        z.blocks_.push_back(std::move(zb));
    }
    return z;
}

FeatureNorm::FeatureNorm(std::size_t features)
    : scale(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(features))),
      shift(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(features))),
      running_mean(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(features))),
      running_var(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(features))) {}

std::vector<Eigen::MatrixXd> feature_norm(const std::vector<Eigen::MatrixXd>& batch, FeatureNorm& norm, NormMode mode,
                                          NormCache* cache, bool update_running) {
    if (batch.empty()) {
        throw std::invalid_argument("feature_norm: empty batch");
    }
    const auto features = batch.front().rows();
    if (features != norm.scale.size()) {
        throw std::invalid_argument("feature_norm: feature count does not match affine parameters");
    }

    Eigen::VectorXd mean;
    Eigen::VectorXd var;
    if (mode == NormMode::kTrain) {
        double count = 0.0;
        mean = Eigen::VectorXd::Zero(features);
        for (const auto& G : batch) {
            mean += G.rowwise().sum();
            count += static_cast<double>(G.cols());
        }
        mean /= count;
        var = Eigen::VectorXd::Zero(features);
        for (const auto& G : batch) {
            var += (G.colwise() - mean).array().square().matrix().rowwise().sum();
        }
        var /= count;
        if (update_running) {
            norm.running_mean = (1.0 - norm.momentum) * norm.running_mean + norm.momentum * mean;
            norm.running_var = (1.0 - norm.momentum) * norm.running_var + norm.momentum * var;
        }
    } else {
        mean = norm.running_mean;
        var = norm.running_var;
    }

    // The guard floors the variance instead of adding to it, so a feature
    // that is already standardized passes through unchanged.
    const Eigen::VectorXd inv_std = var.cwiseMax(norm.epsilon).cwiseSqrt().cwiseInverse();
    std::vector<Eigen::MatrixXd> out;
    out.reserve(batch.size());
    if (cache) {
        cache->normalized.clear();
        cache->normalized.reserve(batch.size());
        cache->inv_std = inv_std;
        cache->variance = var;
        cache->mode = mode;
    }
    for (const auto& G : batch) {
        Eigen::MatrixXd normalized = inv_std.asDiagonal() * (G.colwise() - mean);
        Eigen::MatrixXd y = norm.scale.asDiagonal() * normalized;
        y.colwise() += norm.shift;
        if (cache) {
            cache->normalized.push_back(std::move(normalized));
        }
        out.push_back(std::move(y));
    }
    return out;
}

Eigen::MatrixXd feature_norm_eval(const Eigen::MatrixXd& G, const FeatureNorm& norm) {
    const Eigen::VectorXd inv_std = norm.running_var.cwiseMax(norm.epsilon).cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd y = (norm.scale.cwiseProduct(inv_std)).asDiagonal() * (G.colwise() - norm.running_mean);
    y.colwise() += norm.shift;
    return y;
}

std::vector<Eigen::MatrixXd> feature_norm_backward(const std::vector<Eigen::MatrixXd>& d_out, const FeatureNorm& norm,
                                                   const NormCache& cache, Eigen::VectorXd& d_scale,
                                                   Eigen::VectorXd& d_shift) {
    const auto features = norm.scale.size();
    Eigen::VectorXd sum_dxhat = Eigen::VectorXd::Zero(features);
    Eigen::VectorXd sum_dxhat_xhat = Eigen::VectorXd::Zero(features);
    double count = 0.0;
    for (std::size_t w = 0; w < d_out.size(); ++w) {
        const auto& dy = d_out[w];
        const auto& xhat = cache.normalized[w];
        d_shift += dy.rowwise().sum();
        d_scale += dy.cwiseProduct(xhat).rowwise().sum();
        const Eigen::MatrixXd dxhat = norm.scale.asDiagonal() * dy;
        sum_dxhat += dxhat.rowwise().sum();
        sum_dxhat_xhat += dxhat.cwiseProduct(xhat).rowwise().sum();
        count += static_cast<double>(dy.cols());
    }

    std::vector<Eigen::MatrixXd> d_in;
    d_in.reserve(d_out.size());
    for (std::size_t w = 0; w < d_out.size(); ++w) {
        const Eigen::MatrixXd dxhat = norm.scale.asDiagonal() * d_out[w];
        if (cache.mode == NormMode::kEval) {
            d_in.push_back(cache.inv_std.asDiagonal() * dxhat);
            continue;
        }
        Eigen::MatrixXd dx = dxhat.colwise() - sum_dxhat / count;
        for (Eigen::Index f = 0; f < features; ++f) {
            // A floored variance is constant, so only the mean path remains.
            if (cache.variance(f) > norm.epsilon) {
                dx.row(f) -= cache.normalized[w].row(f) * (sum_dxhat_xhat(f) / count);
            }
        }
        d_in.push_back(cache.inv_std.asDiagonal() * dx);
    }
    return d_in;
}

Readout tcn_readout(const Eigen::MatrixXd& G, const TcnHeads& heads) {
    if (heads.A.cols() != G.rows()) {
        throw std::invalid_argument("tcn_readout: A has " + std::to_string(heads.A.cols()) + " columns, G has " +
                                    std::to_string(G.rows()) + " features");
    }
    if (heads.B.cols() != G.cols() || heads.B.rows() != heads.A.rows()) {
        throw std::invalid_argument("tcn_readout: B must be " + std::to_string(heads.A.rows()) + " x " +
                                    std::to_string(G.cols()));
    }
    Readout r;
    r.rows = heads.A * G;
    r.prediction = r.rows.cwiseProduct(heads.B).rowwise().sum();
    return r;
}

} // namespace stric::tcn
