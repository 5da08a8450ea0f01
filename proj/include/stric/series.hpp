#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace stric::series {

/// Regularly sampled multivariate series stored channel-major: values(i, t)
/// is channel i at sample t. sample_index_origin is the absolute index of
/// column 0, so segments produced by chrono_split keep their position.
struct TimeSeries {
    Eigen::MatrixXd values;
    std::vector<std::string> channel_names;
    long sample_index_origin = 0;

    std::size_t n_channels() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t length() const { return static_cast<std::size_t>(values.cols()); }

    /// Columns [begin, begin + count) as a new series with shifted origin.
    TimeSeries slice(std::size_t begin, std::size_t count) const;

    /// Throws DataError when T == 0, a value is non-finite, or the channel
    /// name count does not match the row count.
    void validate() const;
};

/// Builds a series from per-channel vectors; names default to "y0", "y1", ...
TimeSeries make_series(const std::vector<std::vector<double>>& channels,
                       std::vector<std::string> names = {});

struct WindowSpec {
    std::size_t n_past = 1;
    std::size_t n_future = 1;
};

struct StandardizeStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    std::vector<bool> degenerate;

    bool any_degenerate() const;
};

inline constexpr double kStdFloor = 1e-12;

/// Per-channel zero mean / unit population std. Channels whose std falls
/// below kStdFloor get std = 1 and are flagged degenerate.
std::pair<TimeSeries, StandardizeStats> standardize(const TimeSeries& ts);

/// Statistics of `ts` without transforming it.
StandardizeStats compute_stats(const TimeSeries& ts);

TimeSeries apply_standardize(const TimeSeries& ts, const StandardizeStats& stats);
TimeSeries unstandardize(const TimeSeries& ts, const StandardizeStats& stats);

struct Split {
    TimeSeries train;
    TimeSeries val;   // may be empty (zero columns) when val_frac_of_train == 0
    TimeSeries test;
};

/// Chronological train | val | test partition. The training portion is
/// floor(train_frac * T) samples; its last floor(val_frac * train) samples
/// become validation; the remainder of the series is test.
Split chrono_split(const TimeSeries& ts, double train_frac, double val_frac_of_train);

struct WindowPair {
    std::size_t start = 0;   // column of the first past sample
    Eigen::MatrixXd past;    // n x n_past
    Eigen::MatrixXd future;  // n x n_future
};

/// All T - n_p - n_f + 1 (past, future) pairs in chronological order.
std::vector<WindowPair> supervised_windows(const TimeSeries& ts, const WindowSpec& spec);

std::size_t window_count(std::size_t length, const WindowSpec& spec);

/// Header row of channel names, one row per sample. Rejects ragged rows,
/// non-numeric and non-finite cells with the offending row/column.
TimeSeries load_csv(const std::filesystem::path& path);

/// Values written with 17 significant digits.
void save_csv(const TimeSeries& ts, const std::filesystem::path& path);

std::string format_double(double value);

} // namespace stric::series
