#pragma once

#include "stric/detector.hpp"
#include "stric/model.hpp"
#include "stric/series.hpp"
#include "stric/train.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace stric::eval {

/// sqrt(1/N sum_t |y(t) - y_hat(t)|^2); columns are time steps.
double rmse(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Y_hat);

/// Pointwise F1 on binary vectors; 0 when precision + recall = 0.
double f1(const std::vector<int>& predicted, const std::vector<int>& labels);

/// Area under the ROC curve from a threshold sweep over the distinct
/// scores (trapezoidal, so tied scores count one half). Throws DataError
/// when only one class is present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Binary per-sample vector of length T with ones on (changepoint, stop_time]
/// of every detection.
std::vector<int> flags_from_detections(const std::vector<detector::Detection>& detections, std::size_t length);

struct LabeledSeries {
    series::TimeSeries series;
    std::vector<int> labels;
};

enum class SynthKind { kChangepoint, kPointOutlier, kMixed, kTrendPlusSine, kAr1, kMa2, kPureNoise };

std::string to_string(SynthKind kind);
SynthKind parse_synth_kind(const std::string& name);

/// Zero fields select the per-kind default.
struct SynthParams {
    std::size_t length = 0;
    double noise_std = 0.0;
    double magnitude = 0.0;  // level shift, outlier height or trend rise, per kind
                             // (shifts default to 2 noise_std, outliers to 40)
};

/// Deterministic given the seed. Anomaly labels mark the injection times:
/// changepoint {60}, point_outlier {60}, mixed {60, 80, 160, 200}.
LabeledSeries gen_synthetic(SynthKind kind, const SynthParams& params, std::uint64_t seed);

void save_labeled_csv(const LabeledSeries& ls, const std::string& path);
/// Reads a CSV whose optional "label" column becomes the labels.
LabeledSeries load_labeled_csv(const std::string& path, bool* has_labels = nullptr);

struct ExperimentConfig {
    ModelConfig model;
    train::TrainConfig train;
    double train_frac = 0.5;
    double val_frac = 0.1;
};

/// Scores are in standardized units (statistics of the training portion).
struct FitReport {
    double train_rmse = 0.0;
    double test_rmse = 0.0;
    double gap = 0.0;  // test_rmse - train_rmse
    double train_mse = 0.0;
    double test_mse = 0.0;
    double mse_gap = 0.0;
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    double lambda = 0.0;
};

/// Splits, standardizes with training-portion statistics, trains one
/// variant and scores one-step predictions on the train and test segments.
FitReport fit_and_score(const series::TimeSeries& ts, const ExperimentConfig& config, Variant variant,
                        std::uint64_t seed);

struct AblationRow {
    std::string dataset;
    Variant variant = Variant::kStric;
    FitReport report;
};

std::vector<AblationRow> ablation_run(const std::string& dataset, const series::TimeSeries& ts,
                                      const std::vector<Variant>& variants, const ExperimentConfig& config,
                                      std::uint64_t seed);

/// dataset, variant, test_rmse, gap, train_rmse, test_mse, mse_gap, best_epoch, lambda.
void save_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

struct SweepRow {
    std::size_t n_past = 0;
    Variant variant = Variant::kStric;
    FitReport report;
};

/// Refits each variant for every window length; the kernel length follows
/// the window unless pinned in the model config.
std::vector<SweepRow> memory_sweep(const series::TimeSeries& ts, const std::vector<std::size_t>& n_past_values,
                                   const std::vector<Variant>& variants, const ExperimentConfig& config,
                                   std::uint64_t seed);

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

} // namespace stric::eval
