#include "stric/error.hpp"
#include "stric/eval.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

using namespace stric;
using namespace stric::eval;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("stric_eval_" + name);
}

double segment_mean(const Eigen::MatrixXd& v, Eigen::Index begin, Eigen::Index end) {
    return v.row(0).segment(begin, end - begin).mean();
}

} // namespace

TEST(Rmse, HandComputed) {
    Eigen::MatrixXd Y(2, 3);
    Y << 1, 2, 3, 0, 0, 0;
    Eigen::MatrixXd H(2, 3);
    H << 1, 0, 3, 1, 0, 2;
    // Per-step squared norms 1, 4, 4 -> sqrt(9 / 3).
    EXPECT_DOUBLE_EQ(rmse(Y, H), std::sqrt(3.0));
    EXPECT_EQ(rmse(Y, Y), 0.0);
    EXPECT_THROW(rmse(Y, H.leftCols(2)), std::invalid_argument);
}

TEST(Rmse, MatchesDirectLoop) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d;
    Eigen::MatrixXd Y(3, 50);
    Eigen::MatrixXd H(3, 50);
    for (Eigen::Index i = 0; i < Y.size(); ++i) {
        Y.data()[i] = d(rng);
        H.data()[i] = d(rng);
    }
    double s = 0.0;
    for (int t = 0; t < 50; ++t) {
        for (int i = 0; i < 3; ++i) {
            s += (Y(i, t) - H(i, t)) * (Y(i, t) - H(i, t));
        }
    }
    EXPECT_NEAR(rmse(Y, H), std::sqrt(s / 50.0), 1e-15);
}

TEST(F1, OneOfEach) {
    // TP at 0, FP at 1, FN at 2: precision = recall = 1/2.
    EXPECT_DOUBLE_EQ(f1({1, 1, 0, 0}, {1, 0, 1, 0}), 0.5);
}

TEST(F1, EdgeCases) {
    EXPECT_DOUBLE_EQ(f1({1, 0, 1}, {1, 0, 1}), 1.0);
    EXPECT_DOUBLE_EQ(f1({0, 0, 0}, {1, 0, 1}), 0.0);
    EXPECT_DOUBLE_EQ(f1({0, 0}, {0, 0}), 0.0);
    EXPECT_THROW(f1({0}, {0, 1}), std::invalid_argument);
}

TEST(F1, MatchesCounts) {
    std::mt19937_64 rng(8);
    std::bernoulli_distribution b(0.3);
    std::vector<int> p(200);
    std::vector<int> l(200);
    for (std::size_t i = 0; i < 200; ++i) {
        p[i] = b(rng);
        l[i] = b(rng);
    }
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < 200; ++i) {
        tp += p[i] && l[i];
        fp += p[i] && !l[i];
        fn += !p[i] && l[i];
    }
    EXPECT_DOUBLE_EQ(f1(p, l), 2.0 * tp / (2.0 * tp + fp + fn));
}

TEST(RocAuc, MatchesPairwiseOracleWithTies) {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> level(0, 9);  // coarse scores force ties
    std::bernoulli_distribution b(0.25);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> s(300);
        std::vector<int> l(300);
        for (std::size_t i = 0; i < s.size(); ++i) {
            l[i] = b(rng);
            s[i] = level(rng) + (l[i] ? 1.5 : 0.0) * (trial % 3);
        }
        EXPECT_NEAR(roc_auc(s, l), oracle::pairwise_auc(s, l), 1e-10);
    }
}

TEST(RocAuc, KnownValues) {
    EXPECT_DOUBLE_EQ(roc_auc({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(roc_auc({0.1, 0.2, 0.9, 0.8}, {1, 1, 0, 0}), 0.0);
    EXPECT_DOUBLE_EQ(roc_auc({0.5, 0.5, 0.5}, {1, 0, 0}), 0.5);
    EXPECT_THROW(roc_auc({0.1, 0.2}, {1, 1}), DataError);
    EXPECT_THROW(roc_auc({0.1}, {1, 0}), std::invalid_argument);
}

TEST(Synthetic, DeterministicPerSeed) {
    for (SynthKind k : {SynthKind::kChangepoint, SynthKind::kPointOutlier, SynthKind::kMixed, SynthKind::kTrendPlusSine,
                        SynthKind::kAr1, SynthKind::kMa2, SynthKind::kPureNoise}) {
        const LabeledSeries a = gen_synthetic(k, {}, 5);
        const LabeledSeries b = gen_synthetic(k, {}, 5);
        const LabeledSeries c = gen_synthetic(k, {}, 6);
        EXPECT_EQ(a.series.values, b.series.values) << to_string(k);
        EXPECT_EQ(a.labels, b.labels);
        EXPECT_NE(a.series.values, c.series.values);
        EXPECT_EQ(a.labels.size(), a.series.length());
        EXPECT_EQ(parse_synth_kind(to_string(k)), k);
    }
    EXPECT_THROW(parse_synth_kind("sawtooth"), ConfigError);
}

TEST(Synthetic, LabelPositions) {
    auto ones = [](const std::vector<int>& l) {
        std::vector<std::size_t> idx;
        for (std::size_t t = 0; t < l.size(); ++t) {
            if (l[t]) {
                idx.push_back(t);
            }
        }
        return idx;
    };
    EXPECT_EQ(ones(gen_synthetic(SynthKind::kMixed, {}, 1).labels), (std::vector<std::size_t>{60, 80, 160, 200}));
    EXPECT_EQ(ones(gen_synthetic(SynthKind::kChangepoint, {}, 1).labels), (std::vector<std::size_t>{60}));
    EXPECT_EQ(ones(gen_synthetic(SynthKind::kPointOutlier, {}, 1).labels), (std::vector<std::size_t>{60}));
    EXPECT_TRUE(ones(gen_synthetic(SynthKind::kPureNoise, {}, 1).labels).empty());
    EXPECT_TRUE(ones(gen_synthetic(SynthKind::kTrendPlusSine, {}, 1).labels).empty());
}

TEST(Synthetic, ChangepointShiftIsTwoNoiseDeviations) {
    SynthParams p;
    p.length = 4000;
    p.noise_std = 0.5;
    const LabeledSeries ls = gen_synthetic(SynthKind::kChangepoint, p, 2);
    const double shift = segment_mean(ls.series.values, 60, 4000) - segment_mean(ls.series.values, 0, 60);
    // Standard error of the difference is about 0.5 * sqrt(1/60).
    EXPECT_NEAR(shift, 1.0, 4.0 * 0.5 * std::sqrt(1.0 / 60.0 + 1.0 / 3940.0));
}

TEST(Synthetic, PointOutlierStandsOut) {
    const LabeledSeries ls = gen_synthetic(SynthKind::kPointOutlier, {}, 4);
    const Eigen::RowVectorXd v = ls.series.values.row(0);
    Eigen::Index arg = 0;
    v.maxCoeff(&arg);
    EXPECT_EQ(arg, 60);
    EXPECT_GT(v(60) - v(59), 3.0);
}

TEST(Synthetic, NoiseLevels) {
    SynthParams p;
    p.length = 20000;
    const Eigen::RowVectorXd noise = gen_synthetic(SynthKind::kPureNoise, p, 3).series.values.row(0);
    const double m = noise.mean();
    EXPECT_NEAR(std::sqrt((noise.array() - m).square().mean()), 1.0, 0.03);
    const Eigen::RowVectorXd ar = gen_synthetic(SynthKind::kAr1, p, 3).series.values.row(0);
    const double am = ar.mean();
    // Stationary variance 1 / (1 - 0.8^2).
    EXPECT_NEAR((ar.array() - am).square().mean(), 1.0 / 0.36, 0.25);
}

TEST(Synthetic, RejectsShortStreams) {
    SynthParams p;
    p.length = 50;
    EXPECT_THROW(gen_synthetic(SynthKind::kChangepoint, p, 0), ConfigError);
    p.length = 150;
    EXPECT_THROW(gen_synthetic(SynthKind::kMixed, p, 0), ConfigError);
}

TEST(LabeledCsv, RoundTrip) {
    const LabeledSeries ls = gen_synthetic(SynthKind::kMixed, {}, 9);
    const auto path = temp_path("mixed.csv");
    save_labeled_csv(ls, path.string());
    bool has = false;
    const LabeledSeries back = load_labeled_csv(path.string(), &has);
    EXPECT_TRUE(has);
    EXPECT_EQ(back.labels, ls.labels);
    EXPECT_EQ(back.series.channel_names, ls.series.channel_names);
    EXPECT_EQ(back.series.values, ls.series.values);
    std::filesystem::remove(path);
}

TEST(LabeledCsv, MissingLabelColumn) {
    const auto path = temp_path("plain.csv");
    {
        std::ofstream out(path);
        out << "a,b\n1,2\n3,4\n";
    }
    bool has = true;
    const LabeledSeries ls = load_labeled_csv(path.string(), &has);
    EXPECT_FALSE(has);
    EXPECT_EQ(ls.series.n_channels(), 2u);
    EXPECT_EQ(ls.labels, (std::vector<int>{0, 0}));
    std::filesystem::remove(path);
}

TEST(LabeledCsv, RejectsNonBinaryLabels) {
    const auto path = temp_path("bad.csv");
    {
        std::ofstream out(path);
        out << "y,label\n1,0\n2,3\n";
    }
    EXPECT_THROW(load_labeled_csv(path.string()), DataError);
    std::filesystem::remove(path);
}

namespace {

ExperimentConfig tiny_experiment() {
    ExperimentConfig c;
    c.model.n_past = 12;
    c.model.n_future = 3;
    c.model.l_trend = 3;
    c.model.l_seasonal = 3;
    c.model.l_linear = 3;
    c.model.tcn.layers = 2;
    c.model.tcn.channels = 4;
    c.model.tcn.kernel_size = 3;
    c.train.max_epochs = 3;
    c.train.batch_size = 30;
    return c;
}

} // namespace

TEST(Experiment, FitAndScoreReportsConsistentGaps) {
    SynthParams p;
    p.length = 200;
    const LabeledSeries ls = gen_synthetic(SynthKind::kAr1, p, 1);
    const FitReport r = fit_and_score(ls.series, tiny_experiment(), Variant::kStric, 1);
    EXPECT_GT(r.train_rmse, 0.0);
    EXPECT_GT(r.test_rmse, 0.0);
    EXPECT_DOUBLE_EQ(r.gap, r.test_rmse - r.train_rmse);
    EXPECT_DOUBLE_EQ(r.mse_gap, r.test_mse - r.train_mse);
    EXPECT_DOUBLE_EQ(r.train_mse, r.train_rmse * r.train_rmse);
    EXPECT_EQ(r.epochs, 3u);
}

TEST(Experiment, AblationHasRowPerVariantAndIsDeterministic) {
    SynthParams p;
    p.length = 200;
    const LabeledSeries ls = gen_synthetic(SynthKind::kMa2, p, 2);
    const std::vector<Variant> all = {Variant::kTcn, Variant::kTcnLinear, Variant::kTcnFading, Variant::kStric};
    const auto rows = ablation_run("ma2", ls.series, all, tiny_experiment(), 4);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[3].variant, Variant::kStric);
    EXPECT_EQ(rows[3].dataset, "ma2");
    const auto again = ablation_run("ma2", ls.series, all, tiny_experiment(), 4);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].report.test_rmse, again[i].report.test_rmse);
    }
    const auto path = temp_path("ablation.csv");
    save_ablation_csv(rows, path.string());
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "dataset,variant,test_rmse,gap,train_rmse,test_mse,mse_gap,best_epoch,lambda");
    std::filesystem::remove(path);
}

TEST(Experiment, MemorySweepCoversGrid) {
    SynthParams p;
    p.length = 200;
    const LabeledSeries ls = gen_synthetic(SynthKind::kMa2, p, 3);
    const auto rows = memory_sweep(ls.series, {6, 12}, {Variant::kStric, Variant::kTcnLinear}, tiny_experiment(), 0);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].n_past, 6u);
    EXPECT_EQ(rows[3].n_past, 12u);
    EXPECT_EQ(rows[1].variant, Variant::kTcnLinear);
}
