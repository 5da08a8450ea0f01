#pragma once

#include "stric/checkpoint.hpp"
#include "stric/config.hpp"
#include "stric/detector.hpp"
#include "stric/model.hpp"
#include "stric/series.hpp"
#include "stric/train.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

// End-to-end operations behind the command-line tool: train on a raw
// series, export the per-sample decomposition and run the detector on
// prediction residuals.
namespace stric::pipeline {

struct TrainOutcome {
    checkpoint::Checkpoint checkpoint;
    train::TrainResult result;
};

/// Chronological split, standardization with train+val statistics, one
/// training run of the configured variant and the per-channel std of the
/// standardized one-step residuals over the training segment.
TrainOutcome train_model(const config::RunConfig& config, const series::TimeSeries& raw);

/// Per-channel std of standardized one-step residuals on columns [n_p, T).
Eigen::VectorXd residual_std(const StricModel& model, const Eigen::MatrixXd& z);

/// Per-sample decomposition, each field n x T in the units of the input.
/// Column t comes from the window of n_p samples ending at t (zero-padded
/// on the left while t < n_p - 1; those columns are flagged warm-up), so
/// trend + seasonal + linear + nonlinear_residual equals the input.
/// prediction(:, t) is the one-step prediction of sample t from the window
/// ending at t - 1 and is NaN for t < n_p.
struct DecompositionTable {
    Eigen::MatrixXd trend;
    Eigen::MatrixXd seasonal;
    Eigen::MatrixXd linear;
    Eigen::MatrixXd nonlinear_residual;
    Eigen::MatrixXd prediction;
    std::vector<bool> warmup;
};

DecompositionTable decompose_series(const StricModel& model, const Eigen::MatrixXd& z);

/// Maps a table computed on standardized data back to raw units: the level
/// goes to the trend column and every column is rescaled.
DecompositionTable to_raw_units(DecompositionTable table, const series::StandardizeStats& stats);

void save_decomposition_csv(const DecompositionTable& table, const std::vector<std::string>& channel_names,
                            const std::string& path);

/// One-step residuals of columns [n_p, T) divided by the stored training
/// residual std, n x (T - n_p).
Eigen::MatrixXd standardized_residuals(const checkpoint::Checkpoint& ckpt, const series::TimeSeries& raw);

/// Detector over model residuals when a checkpoint is given, else over the
/// raw stream itself. Times in the result index the input series; the
/// first n_p samples of a model run are neutral warm-up steps.
detector::CusumResult detect(const std::optional<checkpoint::Checkpoint>& ckpt, const series::TimeSeries& raw,
                             const detector::DetectorConfig& config);

} // namespace stric::pipeline
