#pragma once

#include "stric/fading.hpp"
#include "stric/model.hpp"
#include "stric/series.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stric::train {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 100;  // windows per batch
    std::size_t max_epochs = 300;
    std::size_t patience = 20;
    std::uint64_t seed = 0;
    double l1_weight = 1e-4;      // L1 on every selector matrix
    double kernel_weight = 1e-3;  // squared distance of kernels from their initialization
    bool learn_eta2 = false;
    double eta2 = 0.0;            // 0: ridge warm-start estimate
    double divergence_threshold = 1e8;

    void validate() const;
};

/// Per-channel F_W (n_f x n_p): row r is the readout intermediate of the
/// r-th window of the item.
std::vector<Eigen::MatrixXd> assemble_F(const std::vector<tcn::Readout>& readouts);

/// Eval-mode F_W for the item whose first window starts at data column `start`.
std::vector<Eigen::MatrixXd> assemble_F(const StricModel& model, const Eigen::MatrixXd& data, std::size_t start);

/// Batch objective split into named terms. `fading` is the mean over items
/// of the per-item loss summed over channels.
struct ObjectiveTerms {
    double total = 0.0;
    double fading = 0.0;
    double data_fit = 0.0;
    double penalty = 0.0;
    double log_det = 0.0;
    double l1 = 0.0;
    double kernel_proximity = 0.0;
    double mse = 0.0;  // mean squared one-step error per window and channel
};

struct ObjectiveOptions {
    tcn::NormMode mode = tcn::NormMode::kTrain;
    bool update_running = false;
};

/// Item `s` covers windows starting at s, s+1, ..., s+n_f-1 of `data`; the
/// target of window w is column w + n_p. When `grad` is given (a
/// zeros_like() model) the gradient of `total` is accumulated into it.
ObjectiveTerms full_objective(StricModel& model, const Eigen::MatrixXd& data, std::span<const std::size_t> items,
                              const TrainConfig& config, StricModel* grad = nullptr,
                              const ObjectiveOptions& options = {});

/// Residual variance of a per-channel ridge AR(n_p) fit on `data`, averaged
/// over channels and floored at 1e-4.
double warm_start_noise_variance(const Eigen::MatrixXd& data, std::size_t n_past, double ridge = 1e-3);

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads);

private:
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_rmse = 0.0;
    double val_rmse = 0.0;
    double lambda = 0.0;
    double kappa = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_rmse = 0.0;
    double eta2 = 0.0;
    bool stopped_early = false;
};

/// Item start columns for training targets in [n_p, length), stride n_f.
std::vector<std::size_t> training_items(std::size_t length, std::size_t n_past, std::size_t n_future);

/// RMSE of eval-mode one-step predictions of data columns [t_begin, t_end).
double prediction_rmse(const StricModel& model, const Eigen::MatrixXd& data, std::size_t t_begin, std::size_t t_end);

/// Fits `model` on standardized `train_split`; `val_split` (possibly empty)
/// follows it in time and is predicted with context from the training tail.
/// On return the model holds the best-validation parameters.
TrainResult train(StricModel& model, const series::TimeSeries& train_split, const series::TimeSeries* val_split,
                  const TrainConfig& config);

void save_history_csv(const std::vector<EpochRecord>& history, const std::string& path);

} // namespace stric::train
