#include "stric/series.hpp"

#include "stric/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace stric::series {

namespace {

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        cells.push_back(cell);
    }
    // "a,b," has an empty trailing cell that getline drops.
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

} // namespace

TimeSeries TimeSeries::slice(std::size_t begin, std::size_t count) const {
    if (begin + count > length()) {
        throw DataError("slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                        ") exceeds series length " + std::to_string(length()));
    }
    TimeSeries out;
    out.values = values.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
    out.channel_names = channel_names;
    out.sample_index_origin = sample_index_origin + static_cast<long>(begin);
    return out;
}

void TimeSeries::validate() const {
    if (values.cols() < 1 || values.rows() < 1) {
        throw DataError("time series must have at least one channel and one sample");
    }
    if (channel_names.size() != n_channels()) {
        throw DataError("channel name count " + std::to_string(channel_names.size()) +
                        " does not match channel count " + std::to_string(n_channels()));
    }
    for (Eigen::Index t = 0; t < values.cols(); ++t) {
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
            if (!std::isfinite(values(i, t))) {
                throw DataError("non-finite value in channel '" + channel_names[i] + "' at sample " +
                                std::to_string(t));
            }
        }
    }
}

TimeSeries make_series(const std::vector<std::vector<double>>& channels, std::vector<std::string> names) {
    if (channels.empty()) {
        throw DataError("make_series: no channels");
    }
    const std::size_t T = channels.front().size();
    TimeSeries ts;
    ts.values.resize(static_cast<Eigen::Index>(channels.size()), static_cast<Eigen::Index>(T));
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i].size() != T) {
            throw DataError("make_series: channels have different lengths");
        }
        for (std::size_t t = 0; t < T; ++t) {
            ts.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = channels[i][t];
        }
    }
    if (names.empty()) {
        for (std::size_t i = 0; i < channels.size(); ++i) {
            names.push_back("y" + std::to_string(i));
        }
    }
    ts.channel_names = std::move(names);
    ts.validate();
    return ts;
}

bool StandardizeStats::any_degenerate() const {
    for (bool d : degenerate) {
        if (d) {
            return true;
        }
    }
    return false;
}

StandardizeStats compute_stats(const TimeSeries& ts) {
    ts.validate();
    StandardizeStats stats;
    const auto n = ts.values.rows();
    const double T = static_cast<double>(ts.values.cols());
    stats.mean = ts.values.rowwise().mean();
    stats.std.resize(n);
    stats.degenerate.assign(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double var = (ts.values.row(i).array() - stats.mean(i)).square().sum() / T;
        const double sd = std::sqrt(var);
        if (sd < kStdFloor) {
            stats.std(i) = 1.0;
            stats.degenerate[static_cast<std::size_t>(i)] = true;
        } else {
            stats.std(i) = sd;
        }
    }
    return stats;
}

TimeSeries apply_standardize(const TimeSeries& ts, const StandardizeStats& stats) {
    if (stats.mean.size() != ts.values.rows() || stats.std.size() != ts.values.rows()) {
        throw DataError("standardization stats do not match channel count");
    }
    TimeSeries out = ts;
    out.values = (ts.values.colwise() - stats.mean).array().colwise() / stats.std.array();
    return out;
}

TimeSeries unstandardize(const TimeSeries& ts, const StandardizeStats& stats) {
    if (stats.mean.size() != ts.values.rows() || stats.std.size() != ts.values.rows()) {
        throw DataError("standardization stats do not match channel count");
    }
    TimeSeries out = ts;
    out.values = (ts.values.array().colwise() * stats.std.array()).matrix().colwise() + stats.mean;
    return out;
}

std::pair<TimeSeries, StandardizeStats> standardize(const TimeSeries& ts) {
    auto stats = compute_stats(ts);
    return {apply_standardize(ts, stats), std::move(stats)};
}

Split chrono_split(const TimeSeries& ts, double train_frac, double val_frac_of_train) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) {
        throw DataError("train_frac must lie in (0, 1), got " + format_double(train_frac));
    }
    if (!(val_frac_of_train >= 0.0 && val_frac_of_train < 1.0)) {
        throw DataError("val_frac must lie in [0, 1), got " + format_double(val_frac_of_train));
    }
    const std::size_t T = ts.length();
    // The epsilon keeps products such as 0.3 * 100 = 30.000000000000004 and
    // 0.29 * 100 = 28.999999999999996 on the intended side of the floor.
    const auto train_total = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(T) + 1e-9));
    const auto val_len =
        static_cast<std::size_t>(std::floor(val_frac_of_train * static_cast<double>(train_total) + 1e-9));
    if (train_total == 0 || train_total >= T) {
        throw DataError("chrono_split: train or test segment would be empty (T=" + std::to_string(T) + ")");
    }
    if (val_frac_of_train > 0.0 && val_len == 0) {
        throw DataError("chrono_split: validation segment would be empty");
    }
    if (val_len >= train_total) {
        throw DataError("chrono_split: training segment would be empty");
    }
    Split split;
    split.train = ts.slice(0, train_total - val_len);
    split.val = ts.slice(train_total - val_len, val_len);
    split.test = ts.slice(train_total, T - train_total);
    return split;
}

std::size_t window_count(std::size_t length, const WindowSpec& spec) {
    if (spec.n_past < 1 || spec.n_future < 1) {
        throw DataError("window spec needs n_past >= 1 and n_future >= 1");
    }
    if (length < spec.n_past + spec.n_future) {
        throw DataError("series of length " + std::to_string(length) + " is too short for n_p=" +
                        std::to_string(spec.n_past) + ", n_f=" + std::to_string(spec.n_future));
    }
    return length - spec.n_past - spec.n_future + 1;
}

std::vector<WindowPair> supervised_windows(const TimeSeries& ts, const WindowSpec& spec) {
    const std::size_t count = window_count(ts.length(), spec);
    const auto np = static_cast<Eigen::Index>(spec.n_past);
    const auto nf = static_cast<Eigen::Index>(spec.n_future);
    std::vector<WindowPair> pairs;
    pairs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto s = static_cast<Eigen::Index>(i);
        pairs.push_back({i, ts.values.middleCols(s, np), ts.values.middleCols(s + np, nf)});
    }
    return pairs;
}

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

TimeSeries load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("'" + path.string() + "' is empty");
    }
    std::vector<std::string> names;
    for (auto& cell : split_row(line)) {
        names.push_back(trim(cell));
    }
    if (names.empty()) {
        throw DataError("'" + path.string() + "' has an empty header");
    }

    std::vector<std::vector<double>> rows;
    std::size_t row_index = 0;  // 1-based data row, header excluded
    while (std::getline(in, line)) {
        ++row_index;
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split_row(line);
        if (cells.size() != names.size()) {
            throw DataError("row " + std::to_string(row_index) + ": expected " + std::to_string(names.size()) +
                            " cells, found " + std::to_string(cells.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const std::string cell = trim(cells[j]);
            double v = 0.0;
            const auto* first = cell.data();
            const auto* last = cell.data() + cell.size();
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (cell.empty() || ec != std::errc() || ptr != last) {
                throw DataError("row " + std::to_string(row_index) + ", column '" + names[j] +
                                "': non-numeric cell '" + cell + "'");
            }
            if (!std::isfinite(v)) {
                throw DataError("row " + std::to_string(row_index) + ", column '" + names[j] +
                                "': non-finite cell '" + cell + "'");
            }
            row[j] = v;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw DataError("'" + path.string() + "' has no data rows");
    }

    TimeSeries ts;
    ts.values.resize(static_cast<Eigen::Index>(names.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            ts.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = rows[t][i];
        }
    }
    ts.channel_names = std::move(names);
    return ts;
}

void save_csv(const TimeSeries& ts, const std::filesystem::path& path) {
    ts.validate();
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write '" + path.string() + "'");
    }
    for (std::size_t i = 0; i < ts.channel_names.size(); ++i) {
        out << (i ? "," : "") << ts.channel_names[i];
    }
    out << '\n';
    for (Eigen::Index t = 0; t < ts.values.cols(); ++t) {
        for (Eigen::Index i = 0; i < ts.values.rows(); ++i) {
            out << (i ? "," : "") << format_double(ts.values(i, t));
        }
        out << '\n';
    }
}

} // namespace stric::series
