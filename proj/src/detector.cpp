#include "stric/detector.hpp"

#include "stric/error.hpp"
#include "stric/series.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace stric::detector {

namespace {

struct RatioSystem {
    Eigen::MatrixXd centers;
    Eigen::MatrixXd gram;  // K_n' K_n + c I
    Eigen::VectorXd rhs;   // (n_n / n_a) K_a' 1
};

RatioSystem build_system(const Eigen::MatrixXd& E_n, const Eigen::MatrixXd& E_a, double sigma,
                         const DetectorConfig& config) {
    if (E_n.cols() < 1 || E_a.cols() < 1) {
        throw std::invalid_argument("ratio estimate: windows must be non-empty");
    }
    if (E_n.rows() != E_a.rows()) {
        throw std::invalid_argument("ratio estimate: windows have different dimensions");
    }
    RatioSystem s;
    s.centers.resize(E_n.rows(), E_n.cols() + E_a.cols());
    s.centers << E_n, E_a;
    const Eigen::MatrixXd K_n = rbf_kernel_matrix(E_n, s.centers, sigma);
    const Eigen::MatrixXd K_a = rbf_kernel_matrix(E_a, s.centers, sigma);
    s.gram = K_n.transpose() * K_n;
    s.gram.diagonal().array() += ridge_coefficient(config);
    const double nn = static_cast<double>(E_n.cols());
    const double na = static_cast<double>(E_a.cols());
    s.rhs = (nn / na) * K_a.transpose().rowwise().sum();
    return s;
}

} // namespace

void DetectorConfig::validate() const {
    if (n_n < 1 || n_a < 1) {
        throw ConfigError("detector: n_n and n_a must be >= 1");
    }
    if (!sigma_median && !(sigma > 0.0)) {
        throw ConfigError("detector: sigma must be positive");
    }
    if (!(gamma > 0.0) || !(epsilon > 0.0) || !(ratio_floor > 0.0)) {
        throw ConfigError("detector: gamma, epsilon and ratio_floor must be positive");
    }
}

Eigen::MatrixXd rbf_kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double sigma) {
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("rbf kernel: sigma must be positive");
    }
    if (A.rows() != B.rows()) {
        throw std::invalid_argument("rbf kernel: sample dimensions differ");
    }
    const double inv = 1.0 / (2.0 * sigma * sigma);
    Eigen::MatrixXd K(A.cols(), B.cols());
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
        for (Eigen::Index i = 0; i < A.cols(); ++i) {
            K(i, j) = std::exp(-(A.col(i) - B.col(j)).squaredNorm() * inv);
        }
    }
    return K;
}

double median_pairwise_distance(const Eigen::MatrixXd& E) {
    std::vector<double> d;
    for (Eigen::Index i = 0; i < E.cols(); ++i) {
        for (Eigen::Index j = i + 1; j < E.cols(); ++j) {
            d.push_back((E.col(i) - E.col(j)).norm());
        }
    }
    if (d.empty()) {
        return 1.0;
    }
    const std::size_t mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    double med = d[mid];
    if (d.size() % 2 == 0) {
        med = 0.5 * (med + *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return med > 0.0 ? med : 1.0;
}

double RatioModel::evaluate(const Eigen::VectorXd& e) const {
    return (rbf_kernel_matrix(e, centers, sigma) * alpha)(0);
}

Eigen::VectorXd RatioModel::evaluate_all(const Eigen::MatrixXd& E) const {
    return rbf_kernel_matrix(E, centers, sigma) * alpha;
}

double ridge_coefficient(const DetectorConfig& config) {
    const double count = config.ridge_scale == RidgeScale::kReference ? static_cast<double>(config.n_n)
                                                                       : static_cast<double>(config.n_n + config.n_a);
    return config.gamma * count;
}

double ratio_objective(const Eigen::MatrixXd& E_n, const Eigen::MatrixXd& E_a, const Eigen::VectorXd& alpha,
                       double sigma, const DetectorConfig& config) {
    Eigen::MatrixXd centers(E_n.rows(), E_n.cols() + E_a.cols());
    centers << E_n, E_a;
    const double nn = static_cast<double>(E_n.cols());
    const double na = static_cast<double>(E_a.cols());
    const Eigen::VectorXd on_n = rbf_kernel_matrix(E_n, centers, sigma) * alpha;
    const Eigen::VectorXd on_a = rbf_kernel_matrix(E_a, centers, sigma) * alpha;
    return on_n.squaredNorm() / (2.0 * nn) - on_a.sum() / na + ridge_coefficient(config) * alpha.squaredNorm() / (2.0 * nn);
}

RatioModel fit_ratio(const Eigen::MatrixXd& E_n, const Eigen::MatrixXd& E_a, double sigma,
                     const DetectorConfig& config) {
    RatioSystem s = build_system(E_n, E_a, sigma, config);
    const Eigen::LLT<Eigen::MatrixXd> llt(s.gram);
    if (llt.info() != Eigen::Success) {
        throw NumericError("ratio estimate: regularized kernel system is not positive definite");
    }
    return {std::move(s.centers), llt.solve(s.rhs), sigma};
}

RatioModel fit_ratio_constrained(const Eigen::MatrixXd& E_n, const Eigen::MatrixXd& E_a, double sigma,
                                 const DetectorConfig& config, std::size_t max_iter, double tol) {
    RatioSystem s = build_system(E_n, E_a, sigma, config);
    // Objective scaled by n_n: 0.5 a' M a - rhs' a, gradient M a - rhs.
    const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s.gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    const Eigen::LLT<Eigen::MatrixXd> llt(s.gram);
    Eigen::VectorXd x = llt.solve(s.rhs).cwiseMax(0.0);
    Eigen::VectorXd y = x;
    double t = 1.0;
    auto value = [&](const Eigen::VectorXd& a) { return 0.5 * a.dot(s.gram * a) - s.rhs.dot(a); };
    double fx = value(x);
    double pg_norm = 0.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd grad = s.gram * x - s.rhs;
        // Gradient mapping L (x - P(x - grad / L)); zero exactly at the optimum.
        pg_norm = (L * (x - (x - grad / L).cwiseMax(0.0))).lpNorm<Eigen::Infinity>();
        if (pg_norm <= tol) {
            return {std::move(s.centers), std::move(x), sigma};
        }
        const Eigen::VectorXd x_next = (y - (s.gram * y - s.rhs) / L).cwiseMax(0.0);
        const double f_next = value(x_next);
        if (f_next > fx && t > 1.0) {
            // Restart the momentum when it stops paying off.
            y = x;
            t = 1.0;
            continue;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = x_next + ((t - 1.0) / t_next) * (x_next - x);
        x = x_next;
        fx = f_next;
        t = t_next;
    }
    throw NumericError("constrained ratio estimate did not converge: projected gradient norm " +
                       series::format_double(pg_norm));
}

double resolve_sigma(const Eigen::MatrixXd& E_n, const DetectorConfig& config) {
    return config.sigma_median ? median_pairwise_distance(E_n) : config.sigma;
}

double estimate_ratio(const Eigen::MatrixXd& E_n, const Eigen::MatrixXd& E_a, const Eigen::VectorXd& e,
                      const DetectorConfig& config) {
    return fit_ratio(E_n, E_a, resolve_sigma(E_n, config), config).evaluate(e);
}

double estimate_ratio_constrained(const Eigen::MatrixXd& E_n, const Eigen::MatrixXd& E_a, const Eigen::VectorXd& e,
                                  const DetectorConfig& config) {
    return fit_ratio_constrained(E_n, E_a, resolve_sigma(E_n, config), config).evaluate(e);
}

CusumAccumulator::CusumAccumulator(double epsilon) : epsilon_(epsilon) {}

bool CusumAccumulator::push(double log_ratio, std::size_t time) {
    state_.log_ratios.push_back(log_ratio);
    state_.sum += log_ratio;
    if (!state_.started || state_.sum <= state_.minimum) {
        state_.minimum = state_.sum;
        state_.argmin_time = time;
        state_.started = true;
    }
    if (state_.sum - state_.minimum >= epsilon_) {
        state_.stop_time = time;
        state_.changepoint = state_.argmin_time;
        return true;
    }
    return false;
}

void CusumAccumulator::reset() { state_ = CusumState{}; }

CusumResult cusum_run(const Eigen::MatrixXd& residuals, const DetectorConfig& config) {
    if (config.constrained) {
        return cusum_run(residuals, config,
                         [&](const Eigen::MatrixXd& En, const Eigen::MatrixXd& Ea, const Eigen::VectorXd& e) {
                             return estimate_ratio_constrained(En, Ea, e, config);
                         });
    }
    return cusum_run(residuals, config,
                     [&](const Eigen::MatrixXd& En, const Eigen::MatrixXd& Ea, const Eigen::VectorXd& e) {
                         return estimate_ratio(En, Ea, e, config);
                     });
}

CusumResult cusum_run(const Eigen::MatrixXd& residuals, const DetectorConfig& config, const RatioFn& ratio) {
    config.validate();
    const std::size_t T = static_cast<std::size_t>(residuals.cols());
    const std::size_t nn = config.n_n;
    const std::size_t na = config.n_a;
    if (T < nn + na) {
        throw DataError("detector: stream of length " + std::to_string(T) + " is shorter than n_n + n_a = " +
                        std::to_string(nn + na));
    }
    CusumResult result;
    result.steps.resize(T);
    result.flags.assign(T, 0);
    CusumAccumulator acc(config.epsilon);
    std::size_t next_eval = config.warmup();
    for (std::size_t t = 0; t < T; ++t) {
        StepRecord& rec = result.steps[t];
        rec.time = t;
        if (t < next_eval) {
            continue;
        }
        const Eigen::MatrixXd E_n = residuals.middleCols(static_cast<Eigen::Index>(t + 1 - nn - na),
                                                         static_cast<Eigen::Index>(nn));
        const Eigen::MatrixXd E_a =
            residuals.middleCols(static_cast<Eigen::Index>(t + 1 - na), static_cast<Eigen::Index>(na));
        const double phi = ratio(E_n, E_a, residuals.col(static_cast<Eigen::Index>(t)));
        rec.score = phi;
        rec.evaluated = true;
        const bool fired = acc.push(std::log(std::max(phi, config.ratio_floor)), t);
        rec.cumsum = acc.state().sum;
        rec.minimum = acc.state().minimum;
        if (fired) {
            const std::size_t cp = *acc.state().changepoint;
            result.detections.push_back({t, cp, acc.statistic()});
            rec.detected = true;
            result.steps[cp].changepoint = true;
            for (std::size_t k = cp + 1; k <= t; ++k) {
                result.flags[k] = 1;
            }
            result.final_state = acc.state();
            acc.reset();
            next_eval = t + nn + na;
        }
    }
    if (acc.state().started) {
        result.final_state = acc.state();
    }
    return result;
}

AnomalyScores anomaly_scores(const Eigen::MatrixXd& residuals, const DetectorConfig& config) {
    const CusumResult r = cusum_run(residuals, config);
    AnomalyScores out;
    out.flags = r.flags;
    for (const auto& s : r.steps) {
        out.scores.push_back(s.score);
        out.evaluated.push_back(s.evaluated);
    }
    return out;
}

std::pair<std::vector<double>, std::vector<double>> cusum_equivalence_sides(const std::vector<double>& log_ratios) {
    std::vector<double> direct;
    std::vector<double> recursive;
    double sum = 0.0;
    double minimum = 0.0;
    for (std::size_t t = 0; t < log_ratios.size(); ++t) {
        // Direct: best suffix sum ending at t, the empty suffix included.
        double best = 0.0;
        for (std::size_t c = 1; c <= t; ++c) {
            double s = 0.0;
            for (std::size_t i = c; i <= t; ++i) {
                s += log_ratios[i];
            }
            best = std::max(best, s);
        }
        direct.push_back(best);
        sum += log_ratios[t];
        minimum = t == 0 ? sum : std::min(minimum, sum);
        recursive.push_back(sum - minimum);
    }
    return {direct, recursive};
}

bool cusum_equivalence_check(const std::vector<double>& log_ratios, double tol) {
    const auto [direct, recursive] = cusum_equivalence_sides(log_ratios);
    for (std::size_t t = 0; t < direct.size(); ++t) {
        if (!(std::abs(direct[t] - recursive[t]) <= tol)) {
            return false;
        }
    }
    return true;
}

CusumResult shift_times(const CusumResult& result, std::size_t offset) {
    CusumResult out;
    out.steps.resize(offset);
    for (std::size_t t = 0; t < offset; ++t) {
        out.steps[t].time = t;
    }
    for (StepRecord s : result.steps) {
        s.time += offset;
        out.steps.push_back(s);
    }
    for (Detection d : result.detections) {
        d.stop_time += offset;
        d.changepoint_estimate += offset;
        out.detections.push_back(d);
    }
    out.final_state = result.final_state;
    out.final_state.argmin_time += offset;
    if (out.final_state.stop_time) {
        *out.final_state.stop_time += offset;
    }
    if (out.final_state.changepoint) {
        *out.final_state.changepoint += offset;
    }
    out.flags.assign(offset, 0);
    out.flags.insert(out.flags.end(), result.flags.begin(), result.flags.end());
    return out;
}

void save_scores_csv(const CusumResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write scores to " + path);
    }
    out << "time,score,cumsum,min,detected_flag,changepoint_flag\n";
    for (const auto& s : result.steps) {
        out << s.time << ',' << series::format_double(s.score) << ',' << series::format_double(s.cumsum) << ','
            << series::format_double(s.minimum) << ',' << (s.detected ? 1 : 0) << ',' << (s.changepoint ? 1 : 0)
            << '\n';
    }
}

void save_detections_json(const std::vector<Detection>& detections, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& d : detections) {
        j.push_back({{"stop_time", d.stop_time},
                     {"changepoint_estimate", d.changepoint_estimate},
                     {"peak_statistic", d.peak_statistic}});
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write detections to " + path);
    }
    out << j.dump(2) << '\n';
}

std::vector<StepRecord> load_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read scores from " + path);
    }
    std::string line;
    if (!std::getline(in, line) || line != "time,score,cumsum,min,detected_flag,changepoint_flag") {
        throw DataError(path + ": not a scores file (unexpected header)");
    }
    std::vector<StepRecord> steps;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::string cell[6];
        for (auto& c : cell) {
            if (!std::getline(ss, c, ',')) {
                throw DataError(path + ": row " + std::to_string(row) + " has fewer than 6 fields");
            }
        }
        StepRecord s;
        try {
            s.time = std::stoul(cell[0]);
            s.score = std::stod(cell[1]);
            s.cumsum = std::stod(cell[2]);
            s.minimum = std::stod(cell[3]);
        } catch (const std::exception&) {
            throw DataError(path + ": row " + std::to_string(row) + " is not numeric");
        }
        s.detected = cell[4] == "1";
        s.changepoint = cell[5] == "1";
        steps.push_back(s);
    }
    return steps;
}

std::vector<Detection> load_detections_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read detections from " + path);
    }
    std::vector<Detection> out;
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        for (const auto& d : j) {
            out.push_back({d.at("stop_time").get<std::size_t>(), d.at("changepoint_estimate").get<std::size_t>(),
                           d.at("peak_statistic").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": malformed detections: " + e.what());
    }
    return out;
}

} // namespace stric::detector
