#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

// Sequential change detection on prediction residuals: a kernel estimate of
// the density ratio between a recent window and a reference window feeds a
// cumulative sum with an adaptive (running-minimum) threshold.
namespace stric::detector {

/// How the ridge term of the ratio system scales: gamma * n_n (reference
/// window length) or gamma * (n_n + n_a) (number of centers).
enum class RidgeScale { kReference, kCenters };

struct DetectorConfig {
    std::size_t n_n = 20;       // reference window
    std::size_t n_a = 20;       // test window, ends at the current sample
    double sigma = 1.0;         // RBF length scale, used when sigma_median is off
    bool sigma_median = true;   // median pairwise distance of the reference window
    double gamma = 0.1;
    double epsilon = 5.0;
    double ratio_floor = 1e-6;
    RidgeScale ridge_scale = RidgeScale::kReference;
    bool constrained = false;   // non-negative coefficients

    void validate() const;
    std::size_t warmup() const { return n_n + n_a - 1; }
};

/// Columns of A and B are samples. Entry (i, j) = exp(-|a_i - b_j|^2 / (2 sigma^2)).
Eigen::MatrixXd rbf_kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double sigma);

/// Median of pairwise Euclidean distances between columns; 1 when fewer
/// than two columns or all distances vanish.
double median_pairwise_distance(const Eigen::MatrixXd& E);

/// phi(e) = k(e, centers) . alpha, with centers = [E_n, E_a].
struct RatioModel {
    Eigen::MatrixXd centers;
    Eigen::VectorXd alpha;
    double sigma = 1.0;

    double evaluate(const Eigen::VectorXd& e) const;
    Eigen::VectorXd evaluate_all(const Eigen::MatrixXd& E) const;
};

double ridge_coefficient(const DetectorConfig& config);

/// Pearson-divergence least-squares objective in alpha:
/// (1/(2 n_n)) |K_n alpha|^2 - (1/n_a) 1' K_a alpha + (c/(2 n_n)) |alpha|^2,
/// where c is ridge_coefficient(). Its minimizer is the closed form below.
double ratio_objective(const Eigen::MatrixXd& E_n, const Eigen::MatrixXd& E_a, const Eigen::VectorXd& alpha,
                       double sigma, const DetectorConfig& config);

/// alpha = (n_n / n_a) (K_n' K_n + c I)^-1 K_a' 1 via a Cholesky solve.
RatioModel fit_ratio(const Eigen::MatrixXd& E_n, const Eigen::MatrixXd& E_a, double sigma,
                     const DetectorConfig& config);

/// Same objective with alpha >= 0, solved by accelerated projected gradient.
/// Throws NumericError when the projected-gradient norm stays above `tol`
/// after `max_iter` iterations.
RatioModel fit_ratio_constrained(const Eigen::MatrixXd& E_n, const Eigen::MatrixXd& E_a, double sigma,
                                 const DetectorConfig& config, std::size_t max_iter = 200000, double tol = 1e-11);

/// Length scale used for a given reference window.
double resolve_sigma(const Eigen::MatrixXd& E_n, const DetectorConfig& config);

double estimate_ratio(const Eigen::MatrixXd& E_n, const Eigen::MatrixXd& E_a, const Eigen::VectorXd& e,
                      const DetectorConfig& config);
double estimate_ratio_constrained(const Eigen::MatrixXd& E_n, const Eigen::MatrixXd& E_a, const Eigen::VectorXd& e,
                                  const DetectorConfig& config);

struct CusumState {
    double sum = 0.0;
    double minimum = 0.0;
    std::size_t argmin_time = 0;
    bool started = false;
    std::vector<double> log_ratios;
    std::optional<std::size_t> stop_time;
    std::optional<std::size_t> changepoint;
};

/// Cumulative sum with running minimum (taken over the sums so far,
/// including the current one). Fires when sum - minimum >= epsilon; the
/// change point is the time of the minimum (latest on ties).
class CusumAccumulator {
public:
    explicit CusumAccumulator(double epsilon);

    /// Returns true when this step triggers a detection.
    bool push(double log_ratio, std::size_t time);
    double statistic() const { return state_.sum - state_.minimum; }
    const CusumState& state() const { return state_; }
    void reset();

private:
    double epsilon_;
    CusumState state_;
};

struct Detection {
    std::size_t stop_time = 0;
    std::size_t changepoint_estimate = 0;
    double peak_statistic = 0.0;
};

struct StepRecord {
    std::size_t time = 0;
    double score = 1.0;   // estimated ratio; 1 where not evaluated
    double cumsum = 0.0;
    double minimum = 0.0;
    bool evaluated = false;
    bool detected = false;
    bool changepoint = false;
};

struct CusumResult {
    std::vector<StepRecord> steps;
    std::vector<Detection> detections;
    CusumState final_state;
    std::vector<int> flags;  // 1 on (changepoint, stop_time] of each detection
};

/// phi(e_t) given E_n, E_a and e_t.
using RatioFn = std::function<double(const Eigen::MatrixXd&, const Eigen::MatrixXd&, const Eigen::VectorXd&)>;

/// Runs the detector over a d x T residual stream. Evaluation starts at
/// t = n_n + n_a - 1 with E_n = e[t-n_n-n_a+1 .. t-n_a] and
/// E_a = e[t-n_a+1 .. t]. After a detection at t_stop the state resets and
/// evaluation resumes at t_stop + n_n + n_a, once both windows lie past it.
CusumResult cusum_run(const Eigen::MatrixXd& residuals, const DetectorConfig& config);
CusumResult cusum_run(const Eigen::MatrixXd& residuals, const DetectorConfig& config, const RatioFn& ratio);

/// Per-step scores (1 during warm-up) and binary flags.
struct AnomalyScores {
    std::vector<double> scores;
    std::vector<int> flags;
    std::vector<bool> evaluated;
};

AnomalyScores anomaly_scores(const Eigen::MatrixXd& residuals, const DetectorConfig& config);

/// h_t = max_{0<=c<=t} sum_{i=c+1..t} l_i (empty sum allowed) against
/// S_t - min_{j<=t} S_j, 1-based sums over the sequence. True when every
/// pair agrees within `tol`.
bool cusum_equivalence_check(const std::vector<double>& log_ratios, double tol = 1e-12);

/// Both sides of the equivalence for inspection.
std::pair<std::vector<double>, std::vector<double>> cusum_equivalence_sides(const std::vector<double>& log_ratios);

/// Result of a run on a stream that starts `offset` samples into a longer
/// series: times move by `offset` and the skipped samples become neutral
/// warm-up steps.
CusumResult shift_times(const CusumResult& result, std::size_t offset);

void save_scores_csv(const CusumResult& result, const std::string& path);
void save_detections_json(const std::vector<Detection>& detections, const std::string& path);

/// Readers for the two files above.
std::vector<StepRecord> load_scores_csv(const std::string& path);
std::vector<Detection> load_detections_json(const std::string& path);

} // namespace stric::detector
