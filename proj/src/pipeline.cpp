#include "stric/pipeline.hpp"

#include "stric/error.hpp"
#include "stric/ldl.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace stric::pipeline {

TrainOutcome train_model(const config::RunConfig& config, const series::TimeSeries& raw) {
    config.validate();
    raw.validate();
    const series::Split split = series::chrono_split(raw, config.data.train_frac, config.data.val_frac);
    const std::size_t t_fit = split.train.length();
    const std::size_t t_val = split.val.length();
    const series::StandardizeStats stats = series::compute_stats(raw.slice(0, t_fit + t_val));
    const series::TimeSeries z = series::apply_standardize(raw, stats);

    ModelConfig mc = apply_variant(config.model, config.variant);
    mc.n_channels = raw.n_channels();
    if (t_fit <= mc.n_past + mc.n_future) {
        throw DataError("training segment of " + std::to_string(t_fit) + " samples is too short for n_p=" +
                        std::to_string(mc.n_past) + " and n_f=" + std::to_string(mc.n_future));
    }
    TrainOutcome out;
    StricModel& model = out.checkpoint.model;
    model = StricModel(mc, config.train.seed);
    const series::TimeSeries z_train = z.slice(0, t_fit);
    const series::TimeSeries z_val = t_val > 0 ? z.slice(t_fit, t_val) : series::TimeSeries{};
    out.result = train::train(model, z_train, t_val > 0 ? &z_val : nullptr, config.train);

    out.checkpoint.stats = stats;
    out.checkpoint.residual_std = residual_std(model, z_train.values);
    out.checkpoint.variant = to_string(config.variant);
    out.checkpoint.best_epoch = out.result.best_epoch;
    return out;
}

Eigen::VectorXd residual_std(const StricModel& model, const Eigen::MatrixXd& z) {
    const auto np = static_cast<Eigen::Index>(model.config.n_past);
    const Eigen::MatrixXd pred = one_step_predictions(model, z, model.config.n_past, static_cast<std::size_t>(z.cols()));
    const Eigen::MatrixXd e = z.rightCols(z.cols() - np) - pred;
    Eigen::VectorXd out(e.rows());
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
        const double mean = e.row(i).mean();
        out(i) = std::sqrt((e.row(i).array() - mean).square().mean());
        if (!(out(i) > series::kStdFloor)) {
            out(i) = 1.0;
        }
    }
    return out;
}

DecompositionTable decompose_series(const StricModel& model, const Eigen::MatrixXd& z) {
    const Eigen::Index n = z.rows();
    const Eigen::Index T = z.cols();
    const auto np = static_cast<Eigen::Index>(model.config.n_past);
    if (n != static_cast<Eigen::Index>(model.config.n_channels)) {
        throw DataError("decompose: data has " + std::to_string(n) + " channels, model expects " +
                        std::to_string(model.config.n_channels));
    }
    DecompositionTable t;
    for (Eigen::MatrixXd* m : {&t.trend, &t.seasonal, &t.linear, &t.nonlinear_residual}) {
        m->resize(n, T);
    }
    t.prediction = Eigen::MatrixXd::Constant(n, T, std::numeric_limits<double>::quiet_NaN());
    t.warmup.assign(static_cast<std::size_t>(T), false);

    Eigen::MatrixXd window = Eigen::MatrixXd::Zero(n, np);
    for (Eigen::Index c = 0; c < T; ++c) {
        const Eigen::Index avail = std::min(np, c + 1);
        window.setZero();
        window.rightCols(avail) = z.middleCols(c + 1 - avail, avail);
        const ldl::Decomposition dec = ldl::cascade_forward(window, model.cascade);
        t.trend.col(c) = dec.components[0].col(np - 1);
        t.seasonal.col(c) = dec.components[1].col(np - 1);
        t.linear.col(c) = dec.components[2].col(np - 1);
        t.nonlinear_residual.col(c) = dec.residual.col(np - 1);
        t.warmup[static_cast<std::size_t>(c)] = c + 1 < np;
    }
    if (T > np) {
        t.prediction.rightCols(T - np) = one_step_predictions(model, z, model.config.n_past, static_cast<std::size_t>(T));
    }
    return t;
}

DecompositionTable to_raw_units(DecompositionTable t, const series::StandardizeStats& stats) {
    const Eigen::VectorXd& s = stats.std;
    for (Eigen::MatrixXd* m : {&t.trend, &t.seasonal, &t.linear, &t.nonlinear_residual, &t.prediction}) {
        *m = s.asDiagonal() * *m;
    }
    t.trend.colwise() += stats.mean;
    t.prediction.colwise() += stats.mean;
    return t;
}

void save_decomposition_csv(const DecompositionTable& t, const std::vector<std::string>& channel_names,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write decomposition to " + path);
    }
    out << "time,channel,trend,seasonal,linear,nonlinear_residual,prediction,warmup\n";
    for (Eigen::Index c = 0; c < t.trend.cols(); ++c) {
        for (Eigen::Index i = 0; i < t.trend.rows(); ++i) {
            const std::string name = static_cast<std::size_t>(i) < channel_names.size()
                                         ? channel_names[static_cast<std::size_t>(i)]
                                         : "y" + std::to_string(i);
            out << c << ',' << name << ',' << series::format_double(t.trend(i, c)) << ','
                << series::format_double(t.seasonal(i, c)) << ',' << series::format_double(t.linear(i, c)) << ','
                << series::format_double(t.nonlinear_residual(i, c)) << ','
                << series::format_double(t.prediction(i, c)) << ',' << (t.warmup[static_cast<std::size_t>(c)] ? 1 : 0)
                << '\n';
        }
    }
}

Eigen::MatrixXd standardized_residuals(const checkpoint::Checkpoint& ckpt, const series::TimeSeries& raw) {
    const StricModel& model = ckpt.model;
    if (raw.n_channels() != model.config.n_channels) {
        throw DataError("data has " + std::to_string(raw.n_channels()) + " channels, model expects " +
                        std::to_string(model.config.n_channels));
    }
    const std::size_t np = model.config.n_past;
    if (raw.length() <= np) {
        throw DataError("series of length " + std::to_string(raw.length()) + " leaves no residuals after n_p=" +
                        std::to_string(np));
    }
    const Eigen::MatrixXd z = series::apply_standardize(raw, ckpt.stats).values;
    const Eigen::MatrixXd pred = one_step_predictions(model, z, np, raw.length());
    Eigen::MatrixXd e = z.rightCols(static_cast<Eigen::Index>(raw.length() - np)) - pred;
    return ckpt.residual_std.cwiseInverse().asDiagonal() * e;
}

detector::CusumResult detect(const std::optional<checkpoint::Checkpoint>& ckpt, const series::TimeSeries& raw,
                             const detector::DetectorConfig& config) {
    config.validate();
    raw.validate();
    if (!ckpt) {
        return detector::cusum_run(raw.values, config);
    }
    const Eigen::MatrixXd e = standardized_residuals(*ckpt, raw);
    return detector::shift_times(detector::cusum_run(e, config), ckpt->model.config.n_past);
}

} // namespace stric::pipeline
