#include "stric/eval.hpp"

#include "stric/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

namespace stric::eval {

double rmse(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Y_hat) {
    if (Y.rows() != Y_hat.rows() || Y.cols() != Y_hat.cols()) {
        throw std::invalid_argument("rmse: shapes differ");
    }
    if (Y.cols() == 0) {
        throw std::invalid_argument("rmse: empty input");
    }
    return std::sqrt((Y - Y_hat).squaredNorm() / static_cast<double>(Y.cols()));
}

double f1(const std::vector<int>& predicted, const std::vector<int>& labels) {
    if (predicted.size() != labels.size()) {
        throw std::invalid_argument("f1: lengths differ");
    }
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predicted[i] != 0;
        const bool l = labels[i] != 0;
        tp += (p && l) ? 1.0 : 0.0;
        fp += (p && !l) ? 1.0 : 0.0;
        fn += (!p && l) ? 1.0 : 0.0;
    }
    const double precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("roc_auc: lengths differ");
    }
    const double pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; }));
    const double neg = static_cast<double>(labels.size()) - pos;
    if (pos == 0.0 || neg == 0.0) {
        throw DataError("roc_auc: labels must contain both classes");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double tp = 0.0, fp = 0.0, area = 0.0;
    double prev_tpr = 0.0, prev_fpr = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        // Lower the threshold past every sample sharing this score.
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] != 0 ? tp : fp) += 1.0;
            ++i;
        }
        const double tpr = tp / pos;
        const double fpr = fp / neg;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    return area;
}

std::vector<int> flags_from_detections(const std::vector<detector::Detection>& detections, std::size_t length) {
    std::vector<int> flags(length, 0);
    for (const auto& d : detections) {
        if (d.stop_time >= length || d.changepoint_estimate > d.stop_time) {
            throw DataError("detection (" + std::to_string(d.changepoint_estimate) + ", " +
                            std::to_string(d.stop_time) + "] does not fit a series of length " +
                            std::to_string(length));
        }
        for (std::size_t k = d.changepoint_estimate + 1; k <= d.stop_time; ++k) {
            flags[k] = 1;
        }
    }
    return flags;
}

std::string to_string(SynthKind kind) {
    switch (kind) {
    case SynthKind::kChangepoint:
        return "changepoint";
    case SynthKind::kPointOutlier:
        return "point_outlier";
    case SynthKind::kMixed:
        return "mixed";
    case SynthKind::kTrendPlusSine:
        return "trend_plus_sine";
    case SynthKind::kAr1:
        return "ar1";
    case SynthKind::kMa2:
        return "ma2";
    case SynthKind::kPureNoise:
        return "pure_noise";
    }
    return "unknown";
}

SynthKind parse_synth_kind(const std::string& name) {
    for (SynthKind k : {SynthKind::kChangepoint, SynthKind::kPointOutlier, SynthKind::kMixed, SynthKind::kTrendPlusSine,
                        SynthKind::kAr1, SynthKind::kMa2, SynthKind::kPureNoise}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ConfigError("unknown synthetic kind '" + name +
                      "' (expected changepoint, point_outlier, mixed, trend_plus_sine, ar1, ma2 or pure_noise)");
}

LabeledSeries gen_synthetic(SynthKind kind, const SynthParams& params, std::uint64_t seed) {
    struct Defaults {
        std::size_t length;
        double noise;
        double magnitude;
    };
    Defaults d{600, 1.0, 0.0};
    switch (kind) {
    case SynthKind::kChangepoint:
        d = {120, 0.07, 0.0};
        break;
    case SynthKind::kPointOutlier:
        d = {120, 0.1, 0.0};
        break;
    case SynthKind::kMixed:
        d = {260, 0.1, 0.0};
        break;
    case SynthKind::kTrendPlusSine:
        d = {600, 0.1, 8.0};
        break;
    default:
        break;
    }
    const std::size_t T = params.length > 0 ? params.length : d.length;
    const double noise = params.noise_std > 0.0 ? params.noise_std : d.noise;
    double mag = params.magnitude > 0.0 ? params.magnitude : d.magnitude;
    if (mag == 0.0) {
        // Level shifts default to two noise deviations, outliers to forty.
        mag = (kind == SynthKind::kPointOutlier ? 40.0 : 2.0) * noise;
    }

    std::size_t min_length = 1;
    if (kind == SynthKind::kChangepoint || kind == SynthKind::kPointOutlier) {
        min_length = 61;
    } else if (kind == SynthKind::kMixed) {
        min_length = 201;
    }
    if (T < min_length) {
        throw ConfigError("synthetic " + to_string(kind) + " needs length >= " + std::to_string(min_length));
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> w(T + 2);
    for (auto& x : w) {
        x = normal(rng);
    }
    std::vector<double> y(T, 0.0);
    std::vector<int> labels(T, 0);
    for (std::size_t t = 0; t < T; ++t) {
        const double e = noise * w[t + 2];
        const double td = static_cast<double>(t);
        switch (kind) {
        case SynthKind::kChangepoint:
            y[t] = e + (t >= 60 ? mag : 0.0);
            break;
        case SynthKind::kPointOutlier:
            y[t] = e + (t == 60 ? mag : 0.0);
            break;
        case SynthKind::kMixed:
            y[t] = e + (t >= 60 && t < 200 ? mag : 0.0) + ((t == 80 || t == 160) ? 20.0 * mag : 0.0);
            break;
        case SynthKind::kTrendPlusSine:
            y[t] = mag * td / static_cast<double>(T) + std::sin(2.0 * std::numbers::pi * td / 24.0) + e;
            break;
        case SynthKind::kAr1:
            y[t] = (t > 0 ? 0.8 * y[t - 1] : 0.0) + e;
            break;
        case SynthKind::kMa2:
            y[t] = noise * (w[t + 2] + 0.8 * w[t + 1] + 0.5 * w[t]);
            break;
        case SynthKind::kPureNoise:
            y[t] = e;
            break;
        }
    }
    if (kind == SynthKind::kChangepoint || kind == SynthKind::kPointOutlier) {
        labels[60] = 1;
    } else if (kind == SynthKind::kMixed) {
        for (std::size_t t : {60, 80, 160, 200}) {
            labels[t] = 1;
        }
    }
    return {series::make_series({y}, {to_string(kind)}), labels};
}

void save_labeled_csv(const LabeledSeries& ls, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    const auto& ts = ls.series;
    for (const auto& name : ts.channel_names) {
        out << name << ',';
    }
    out << "label\n";
    for (std::size_t t = 0; t < ts.length(); ++t) {
        for (std::size_t i = 0; i < ts.n_channels(); ++i) {
            out << series::format_double(ts.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t))) << ',';
        }
        out << ls.labels[t] << '\n';
    }
}

LabeledSeries load_labeled_csv(const std::string& path, bool* has_labels) {
    series::TimeSeries ts = series::load_csv(path);
    LabeledSeries out;
    const auto it = std::find(ts.channel_names.begin(), ts.channel_names.end(), "label");
    if (has_labels) {
        *has_labels = it != ts.channel_names.end();
    }
    if (it == ts.channel_names.end()) {
        out.series = std::move(ts);
        out.labels.assign(out.series.length(), 0);
        return out;
    }
    const auto col = static_cast<Eigen::Index>(it - ts.channel_names.begin());
    if (ts.n_channels() < 2) {
        throw DataError("'" + path + "' has a label column but no data channels");
    }
    for (Eigen::Index t = 0; t < ts.values.cols(); ++t) {
        const double v = ts.values(col, t);
        if (v != 0.0 && v != 1.0) {
            throw DataError("'" + path + "': label at row " + std::to_string(t + 1) + " is not 0 or 1");
        }
        out.labels.push_back(static_cast<int>(v));
    }
    Eigen::MatrixXd values(ts.values.rows() - 1, ts.values.cols());
    std::vector<std::string> names;
    for (Eigen::Index i = 0, k = 0; i < ts.values.rows(); ++i) {
        if (i != col) {
            values.row(k++) = ts.values.row(i);
            names.push_back(ts.channel_names[static_cast<std::size_t>(i)]);
        }
    }
    out.series.values = std::move(values);
    out.series.channel_names = std::move(names);
    out.series.validate();
    return out;
}

FitReport fit_and_score(const series::TimeSeries& ts, const ExperimentConfig& config, Variant variant,
                        std::uint64_t seed) {
    const series::Split split = series::chrono_split(ts, config.train_frac, config.val_frac);
    const std::size_t t_fit = split.train.length();
    const std::size_t t_val = split.val.length();
    const series::TimeSeries portion = ts.slice(0, t_fit + t_val);
    const series::StandardizeStats stats = series::compute_stats(portion);
    const series::TimeSeries z = series::apply_standardize(ts, stats);

    ModelConfig mc = apply_variant(config.model, variant);
    mc.n_channels = ts.n_channels();
    StricModel model(mc, seed);
    train::TrainConfig tc = config.train;
    tc.seed = seed;
    const series::TimeSeries z_train = z.slice(0, t_fit);
    const series::TimeSeries z_val = t_val > 0 ? z.slice(t_fit, t_val) : series::TimeSeries{};
    const train::TrainResult result = train::train(model, z_train, t_val > 0 ? &z_val : nullptr, tc);

    FitReport r;
    r.train_rmse = train::prediction_rmse(model, z.values, mc.n_past, t_fit);
    r.test_rmse = train::prediction_rmse(model, z.values, t_fit + t_val, ts.length());
    r.gap = r.test_rmse - r.train_rmse;
    r.train_mse = r.train_rmse * r.train_rmse;
    r.test_mse = r.test_rmse * r.test_rmse;
    r.mse_gap = r.test_mse - r.train_mse;
    r.epochs = result.history.size();
    r.best_epoch = result.best_epoch;
    r.lambda = model.prior.lambda();
    return r;
}

std::vector<AblationRow> ablation_run(const std::string& dataset, const series::TimeSeries& ts,
                                      const std::vector<Variant>& variants, const ExperimentConfig& config,
                                      std::uint64_t seed) {
    std::vector<AblationRow> rows;
    for (Variant v : variants) {
        rows.push_back({dataset, v, fit_and_score(ts, config, v, seed)});
    }
    return rows;
}

namespace {

void write_report(std::ostream& out, const FitReport& r) {
    out << series::format_double(r.test_rmse) << ',' << series::format_double(r.gap) << ','
        << series::format_double(r.train_rmse) << ',' << series::format_double(r.test_mse) << ','
        << series::format_double(r.mse_gap) << ',' << r.best_epoch << ',' << series::format_double(r.lambda);
}

} // namespace

void save_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    out << "dataset,variant,test_rmse,gap,train_rmse,test_mse,mse_gap,best_epoch,lambda\n";
    for (const auto& row : rows) {
        out << row.dataset << ',' << to_string(row.variant) << ',';
        write_report(out, row.report);
        out << '\n';
    }
}

std::vector<SweepRow> memory_sweep(const series::TimeSeries& ts, const std::vector<std::size_t>& n_past_values,
                                   const std::vector<Variant>& variants, const ExperimentConfig& config,
                                   std::uint64_t seed) {
    std::vector<SweepRow> rows;
    for (std::size_t np : n_past_values) {
        ExperimentConfig c = config;
        c.model.n_past = np;
        for (Variant v : variants) {
            rows.push_back({np, v, fit_and_score(ts, c, v, seed)});
        }
    }
    return rows;
}

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    out << "n_past,variant,test_rmse,gap,train_rmse,test_mse,mse_gap,best_epoch,lambda\n";
    for (const auto& row : rows) {
        out << row.n_past << ',' << to_string(row.variant) << ',';
        write_report(out, row.report);
        out << '\n';
    }
}

} // namespace stric::eval
