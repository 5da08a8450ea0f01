#include "stric/model.hpp"

#include "stric/error.hpp"

#include <cmath>
#include <random>

namespace stric {

namespace {

ParamRef ref(const std::string& group, const std::string& name, Eigen::MatrixXd& m) {
    return {group, name, {m.data(), static_cast<std::size_t>(m.size())}, static_cast<std::size_t>(m.rows()),
            static_cast<std::size_t>(m.cols())};
}
ParamRef ref(const std::string& group, const std::string& name, Eigen::VectorXd& v) {
    return {group, name, {v.data(), static_cast<std::size_t>(v.size())}, static_cast<std::size_t>(v.size()), 1};
}
ParamRef ref(const std::string& group, const std::string& name, double& x) { return {group, name, {&x, 1}, 1, 1}; }

void add_conv(std::vector<ParamRef>& out, const std::string& prefix, tcn::CausalConv& conv) {
    for (std::size_t k = 0; k < conv.taps.size(); ++k) {
        out.push_back(ref("tcn_weights", prefix + ".tap" + std::to_string(k), conv.taps[k]));
    }
    out.push_back(ref("tcn_weights", prefix + ".bias", conv.bias));
}

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::size_t ModelConfig::resolved_kernel_length() const {
    return kernel_length > 0 ? kernel_length : (n_past + 1) / 2;
}

void ModelConfig::validate() const {
    if (n_channels < 1) {
        throw ConfigError("model: need at least one channel");
    }
    if (n_past < 2) {
        throw ConfigError("model: n_p must be >= 2");
    }
    if (n_future < 1) {
        throw ConfigError("model: n_f must be >= 1");
    }
    if (use_ldl && (l_trend < 1 || l_seasonal < 1 || l_linear < 1)) {
        throw ConfigError("model: l0, l1, l2 must be >= 1");
    }
    if (!(rho_max > 0.0 && rho_max < 1.0)) {
        throw ConfigError("model: rho_max must lie in (0, 1)");
    }
    if (!(lambda_init > 0.0 && lambda_init < 1.0)) {
        throw ConfigError("model: lambda_init must lie in (0, 1)");
    }
    if (!(kappa_init > 0.0)) {
        throw ConfigError("model: kappa_init must be positive");
    }
    if (!(tcn_a_init_std >= 0.0)) {
        throw ConfigError("model: tcn_a_init_std must be non-negative");
    }
    tcn.validate();
}

std::string to_string(Variant v) {
    switch (v) {
    case Variant::kTcn:
        return "TCN";
    case Variant::kTcnLinear:
        return "TCN+Linear";
    case Variant::kTcnFading:
        return "TCN+Fading";
    case Variant::kStric:
        return "STRIC";
    }
    return "unknown";
}

Variant parse_variant(const std::string& name) {
    for (Variant v : {Variant::kTcn, Variant::kTcnLinear, Variant::kTcnFading, Variant::kStric}) {
        if (to_string(v) == name) {
            return v;
        }
    }
    throw ConfigError("unknown variant '" + name + "' (expected TCN, TCN+Linear, TCN+Fading or STRIC)");
}

ModelConfig apply_variant(ModelConfig config, Variant v) {
    config.use_ldl = v == Variant::kTcnLinear || v == Variant::kStric;
    config.use_fading = v == Variant::kTcnFading || v == Variant::kStric;
    return config;
}

StricModel::StricModel(const ModelConfig& cfg, std::uint64_t run_seed) : config(cfg), seed(run_seed) {
    config.validate();
    const std::size_t n = config.n_channels;
    const std::size_t np = config.n_past;
    const std::size_t len = config.resolved_kernel_length();

    cascade.enabled = config.use_ldl;
    const std::size_t l_trend = config.use_ldl ? config.l_trend : 1;
    const std::size_t l_seas = config.use_ldl ? config.l_seasonal : 1;
    const std::size_t l_lin = config.use_ldl ? config.l_linear : 1;
    cascade.banks[0] = ldl::init_trend_bank(l_trend, len, derive_seed(seed, 1));
    cascade.banks[1] = ldl::init_seasonal_bank(l_seas, len, derive_seed(seed, 2));
    cascade.banks[2] = ldl::init_linear_bank(l_lin, len, derive_seed(seed, 3), config.rho_max);
    // The trend head starts as the average of the smoothers (unit DC gain);
    // the seasonal and linear heads start switched off.
    cascade.heads[0] = ldl::make_heads(n, l_trend, np, ldl::BMode::kCanonicalLast, 1.0 / static_cast<double>(l_trend));
    cascade.heads[1] = ldl::make_heads(n, l_seas, np, ldl::BMode::kCanonicalLast, 0.0);
    cascade.heads[2] = ldl::make_heads(n, l_lin, np, ldl::BMode::kCanonicalLast, 0.0);

    network = tcn::Network(n, config.tcn, derive_seed(seed, 4));
    const std::size_t l3 = network.output_features();
    norm = tcn::FeatureNorm(l3);

    // Linear-layer convention: uniform on +-1/sqrt(fan_in) for A and b.
    std::mt19937_64 rng(derive_seed(seed, 5));
    heads.A.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(l3));
    if (config.tcn_a_init_std > 0.0) {
        std::normal_distribution<double> normal(0.0, config.tcn_a_init_std);
        for (Eigen::Index i = 0; i < heads.A.size(); ++i) {
            heads.A.data()[i] = normal(rng);
        }
    } else {
        const double a_bound = 1.0 / std::sqrt(static_cast<double>(l3));
        std::uniform_real_distribution<double> a_uniform(-a_bound, a_bound);
        for (Eigen::Index i = 0; i < heads.A.size(); ++i) {
            heads.A.data()[i] = a_uniform(rng);
        }
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(np));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    heads.B.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(np));
    for (Eigen::Index i = 0; i < heads.B.size(); ++i) {
        heads.B.data()[i] = uniform(rng);
    }

    prior = train::FadingPrior::from_values({config.lambda_init, config.kappa_init, 1.0});
}

StricModel StricModel::zeros_like() const {
    StricModel z = *this;
    for (auto& p : parameters(z)) {
        std::fill(p.values.begin(), p.values.end(), 0.0);
    }
    return z;
}

std::vector<ParamRef> parameters(StricModel& m) {
    std::vector<ParamRef> out;
    if (m.config.use_ldl) {
        for (std::size_t k = 0; k < ldl::kNumBlocks; ++k) {
            const std::string kind = ldl::to_string(m.cascade.banks[k].kind());
            out.push_back(ref("kernels", kind + ".kernels", m.cascade.banks[k].kernels()));
            out.push_back(ref("A", kind + ".A", m.cascade.heads[k].A));
            if (m.cascade.heads[k].b_mode == ldl::BMode::kDense) {
                out.push_back(ref("B", kind + ".B", m.cascade.heads[k].B));
            }
        }
    }
    auto& blocks = m.network.blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::string prefix = "tcn.block" + std::to_string(b);
        add_conv(out, prefix + ".conv1", blocks[b].conv1);
        add_conv(out, prefix + ".conv2", blocks[b].conv2);
        if (blocks[b].has_projection) {
            out.push_back(ref("tcn_weights", prefix + ".projection", blocks[b].projection));
            out.push_back(ref("tcn_weights", prefix + ".projection_bias", blocks[b].projection_bias));
        }
    }
    out.push_back(ref("norm_affine", "norm.scale", m.norm.scale));
    out.push_back(ref("norm_affine", "norm.shift", m.norm.shift));
    out.push_back(ref("A", "readout.A", m.heads.A));
    out.push_back(ref("b", "readout.b", m.heads.B));
    if (m.config.use_fading) {
        out.push_back(ref("lambda", "prior.lambda_logit", m.prior.lambda_logit));
        out.push_back(ref("kappa", "prior.log_kappa", m.prior.log_kappa));
        if (m.prior.learn_eta2) {
            out.push_back(ref("eta2", "prior.log_eta2", m.prior.log_eta2));
        }
    }
    return out;
}

std::size_t parameter_count(StricModel& model) {
    std::size_t count = 0;
    for (const auto& p : parameters(model)) {
        count += p.values.size();
    }
    return count;
}

WindowOutput predict_window(const StricModel& model, const Eigen::MatrixXd& window) {
    const ldl::CascadeEngine engine(model.cascade);
    WindowOutput out;
    out.decomposition = engine.forward(window, nullptr);
    const Eigen::MatrixXd G = tcn::feature_norm_eval(model.network.forward(out.decomposition.residual), model.norm);
    out.readout = tcn::tcn_readout(G, model.heads);
    out.tcn_prediction = out.readout.prediction;
    out.prediction = out.decomposition.total_prediction() + out.tcn_prediction;
    return out;
}

Eigen::MatrixXd one_step_predictions(const StricModel& model, const Eigen::MatrixXd& data, std::size_t t_begin,
                                     std::size_t t_end) {
    const std::size_t np = model.config.n_past;
    if (t_begin < np || t_end < t_begin || t_end > static_cast<std::size_t>(data.cols())) {
        throw DataError("one_step_predictions: need n_p=" + std::to_string(np) + " columns of context before t=" +
                        std::to_string(t_begin) + " and t_end <= " + std::to_string(data.cols()));
    }
    const ldl::CascadeEngine engine(model.cascade);
    Eigen::MatrixXd out(data.rows(), static_cast<Eigen::Index>(t_end - t_begin));
    for (std::size_t t = t_begin; t < t_end; ++t) {
        const Eigen::MatrixXd window = data.middleCols(static_cast<Eigen::Index>(t - np), static_cast<Eigen::Index>(np));
        const ldl::Decomposition dec = engine.forward(window, nullptr);
        const Eigen::MatrixXd G = tcn::feature_norm_eval(model.network.forward(dec.residual), model.norm);
        const tcn::Readout r = tcn::tcn_readout(G, model.heads);
        out.col(static_cast<Eigen::Index>(t - t_begin)) = dec.total_prediction() + r.prediction;
    }
    return out;
}

} // namespace stric
