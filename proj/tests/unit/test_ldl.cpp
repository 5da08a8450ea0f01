#include "stric/ldl.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace stric::ldl;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = d(rng);
    }
    return m;
}

// Naive per-channel, per-feature, per-tap loop.
BlockOutput block_oracle(const Eigen::MatrixXd& X, const Eigen::MatrixXd& K, const BlockHeads& h) {
    const auto n = X.rows();
    const auto np = X.cols();
    const auto l = K.rows();
    const auto N = K.cols();
    BlockOutput out;
    out.component = Eigen::MatrixXd::Zero(n, np);
    out.prediction = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(l, np);
        for (Eigen::Index j = 0; j < l; ++j) {
            for (Eigen::Index t = 0; t < np; ++t) {
                for (Eigen::Index s = 0; s < N; ++s) {
                    if (t - s >= 0) {
                        G(j, t) += K(j, s) * X(i, t - s);
                    }
                }
            }
        }
        for (Eigen::Index t = 0; t < np; ++t) {
            for (Eigen::Index j = 0; j < l; ++j) {
                out.component(i, t) += h.A(i, j) * G(j, t);
            }
        }
        for (Eigen::Index t = 0; t < np; ++t) {
            const double b = h.b_mode == BMode::kCanonicalLast ? (t == np - 1 ? 1.0 : 0.0) : h.B(i, t);
            out.prediction(i) += out.component(i, t) * b;
        }
        out.features.push_back(G);
    }
    return out;
}

Cascade random_cascade(std::size_t n, std::size_t np, std::size_t len, BMode mode, std::uint64_t seed) {
    Cascade c;
    c.banks[0] = init_trend_bank(4, len, seed);
    c.banks[1] = init_seasonal_bank(5, len, seed + 1);
    c.banks[2] = init_linear_bank(6, len, seed + 2);
    for (std::size_t k = 0; k < kNumBlocks; ++k) {
        c.heads[k] = make_heads(n, c.banks[k].size(), np, mode, 0.0);
        c.heads[k].A = 0.3 * random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c.banks[k].size()),
                                           seed + 10 + k);
        if (mode == BMode::kDense) {
            c.heads[k].B = random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(np), seed + 20 + k);
        }
    }
    return c;
}

} // namespace

TEST(CausalConv, Examples) {
    const std::vector<double> x{1, 2, 3};
    EXPECT_EQ(causal_conv(x, std::vector<double>{1.0}), x);
    EXPECT_EQ(causal_conv(x, std::vector<double>{0.0, 1.0}), (std::vector<double>{0, 1, 2}));
    const auto y = causal_conv(std::vector<double>{2, 4, 6}, std::vector<double>{0.5, 0.5});
    EXPECT_DOUBLE_EQ(y[0], 1.0);
    EXPECT_DOUBLE_EQ(y[1], 3.0);
    EXPECT_DOUBLE_EQ(y[2], 5.0);
}

TEST(CausalConv, KernelLongerThanInput) {
    const auto y = causal_conv(std::vector<double>{1, 1}, std::vector<double>{1, 2, 3, 4});
    EXPECT_EQ(y, (std::vector<double>{1, 3}));
}

TEST(TrendBank, UnitDcGain) {
    const FilterBank bank = init_trend_bank(20, 50, 7);
    for (Eigen::Index j = 0; j < bank.kernels().rows(); ++j) {
        EXPECT_NEAR(bank.kernels().row(j).sum(), 1.0, 1e-8);
    }
}

TEST(TrendBank, HpKernelMatchesSmootherEndpoint) {
    // Oracle: solve (I + lambda D'D) s = y for y = e_t and read the last entry.
    const std::size_t N = 12;
    const double lambda = 1e4;
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(N - 2, N);
    for (std::size_t i = 0; i + 2 < N; ++i) {
        D(i, i) = 1.0;
        D(i, i + 1) = -2.0;
        D(i, i + 2) = 1.0;
    }
    const Eigen::MatrixXd S = (Eigen::MatrixXd::Identity(N, N) + lambda * D.transpose() * D).inverse();
    const Eigen::VectorXd k = hp_causal_kernel(lambda, N);
    for (std::size_t i = 0; i < N; ++i) {
        EXPECT_NEAR(k(i), S(N - 1, N - 1 - i), 1e-10);
    }
}

TEST(TrendBank, ZeroSmoothingIsImpulse) {
    const Eigen::VectorXd k = hp_causal_kernel(0.0, 8);
    EXPECT_EQ(k(0), 1.0);
    EXPECT_EQ(k.tail(7).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TrendBank, ConstantPassesAfterTransient) {
    const FilterBank bank = init_trend_bank(5, 16, 3);
    std::vector<double> x(60, 2.5);
    for (Eigen::Index j = 0; j < bank.kernels().rows(); ++j) {
        const Eigen::VectorXd kern = bank.kernels().row(j).transpose();
        const auto y = causal_conv(x, std::span<const double>(kern.data(), static_cast<std::size_t>(kern.size())));
        for (std::size_t t = 16; t < y.size(); ++t) {
            EXPECT_NEAR(y[t], 2.5, 1e-7);
        }
    }
}

TEST(TrendBank, Deterministic) {
    EXPECT_EQ(init_trend_bank(6, 20, 11).kernels(), init_trend_bank(6, 20, 11).kernels());
    EXPECT_EQ(init_seasonal_bank(6, 20, 11).kernels(), init_seasonal_bank(6, 20, 11).kernels());
    EXPECT_EQ(init_linear_bank(6, 20, 11).kernels(), init_linear_bank(6, 20, 11).kernels());
}

TEST(SeasonalBank, UnitNormAndNonDegenerate) {
    const FilterBank bank = init_seasonal_bank(50, 30, 5);
    for (Eigen::Index j = 0; j < bank.kernels().rows(); ++j) {
        const auto row = bank.kernels().row(j);
        EXPECT_NEAR(row.norm(), 1.0, 1e-10);
        // Neither constant (omega = 0) nor strictly alternating (omega = pi).
        const Eigen::RowVectorXd ratio = row.tail(29).cwiseQuotient(row.head(29));
        EXPECT_GT((ratio.array() - ratio(0)).abs().maxCoeff(), 1e-9);
    }
}

TEST(SeasonalBank, ResonatesAtItsFrequency) {
    const std::size_t N = 40;
    const double w0 = 0.7;
    const double w_far = 2.6;
    const Eigen::VectorXd k0 = seasonal_kernel(w0, N);
    const Eigen::VectorXd k1 = seasonal_kernel(w_far, N);
    std::vector<double> x(2 * N);
    for (std::size_t t = 0; t < x.size(); ++t) {
        x[t] = std::sin(w0 * static_cast<double>(t));
    }
    auto energy = [&](const Eigen::VectorXd& k) {
        const auto y = causal_conv(x, std::span<const double>(k.data(), static_cast<std::size_t>(k.size())));
        double e = 0.0;
        for (std::size_t t = N; t < y.size(); ++t) {
            e += y[t] * y[t];
        }
        return e;
    };
    EXPECT_GT(energy(k0), 10.0 * energy(k1));
}

TEST(LinearBank, DecayAndUnitNorm) {
    const std::size_t N = 25;
    const FilterBank bank = init_linear_bank(30, N, 2);
    for (Eigen::Index j = 0; j < bank.kernels().rows(); ++j) {
        EXPECT_NEAR(bank.kernels().row(j).norm(), 1.0, 1e-10);
    }
    for (double r : {0.3, 0.8, 0.99}) {
        const Eigen::VectorXd k = damped_kernel(r, 1.1, N);
        const Eigen::VectorXd raw = k / k(0);  // undo the norm scaling
        EXPECT_LE(std::abs(raw(N - 1)), std::pow(r, N - 1) + 1e-15);
    }
    const Eigen::VectorXd delta = damped_kernel(0.0, 1.0, 6);
    EXPECT_EQ(delta(0), 1.0);
    EXPECT_EQ(delta.tail(5).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LinearBank, TailEnergyRule) {
    for (double r : {0.5, 0.9, 0.99}) {
        const std::size_t N = kernel_length_for_tail(r, 1e-6);
        double brute = 0.0;
        for (std::size_t t = N; t < N + 200000; ++t) {
            brute += std::pow(r, 2.0 * static_cast<double>(t));
        }
        EXPECT_NEAR(truncation_tail_energy(r, N), brute, 1e-12);
        EXPECT_LT(brute, 1e-6);
        if (N > 0) {
            EXPECT_GE(truncation_tail_energy(r, N - 1), 1e-6);
        }
    }
}

TEST(BlockForward, ZeroSelectorsGiveZero) {
    const FilterBank bank = init_seasonal_bank(4, 6, 1);
    const BlockHeads h = make_heads(2, 4, 10, BMode::kCanonicalLast, 0.0);
    const auto out = block_forward(random_matrix(2, 10, 4), bank, h);
    EXPECT_EQ(out.component.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(out.prediction.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BlockForward, DeltaBankPredictsLastValue) {
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(1, 3);
    K(0, 0) = 1.0;
    const FilterBank bank(K, BlockKind::kTrend);
    const BlockHeads h = make_heads(2, 1, 7, BMode::kCanonicalLast, 1.0);
    const Eigen::MatrixXd X = random_matrix(2, 7, 8);
    const auto out = block_forward(X, bank, h);
    EXPECT_EQ(out.prediction, X.col(6));
}

TEST(BlockForward, MatchesTripleLoop) {
    for (BMode mode : {BMode::kCanonicalLast, BMode::kDense}) {
        const FilterBank bank(random_matrix(5, 4, 21), BlockKind::kLinear);
        BlockHeads h = make_heads(3, 5, 9, mode, 0.0);
        h.A = random_matrix(3, 5, 22);
        h.B = random_matrix(3, 9, 23);
        const Eigen::MatrixXd X = random_matrix(3, 9, 24);
        const auto out = block_forward(X, bank, h);
        const auto ref = block_oracle(X, bank.kernels(), h);
        EXPECT_LT((out.component - ref.component).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((out.prediction - ref.prediction).cwiseAbs().maxCoeff(), 1e-12);
        for (std::size_t i = 0; i < 3; ++i) {
            EXPECT_LT((out.features[i] - ref.features[i]).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(Cascade, ZeroSelectorsPassThrough) {
    Cascade c = random_cascade(2, 12, 6, BMode::kCanonicalLast, 5);
    for (auto& h : c.heads) {
        h.A.setZero();
    }
    const Eigen::MatrixXd Y = random_matrix(2, 12, 6);
    const Decomposition d = cascade_forward(Y, c);
    EXPECT_EQ(d.residual, Y);
    for (const auto& comp : d.components) {
        EXPECT_EQ(comp.cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(Cascade, TelescopesAndMatchesExplicitBlocks) {
    for (BMode mode : {BMode::kCanonicalLast, BMode::kDense}) {
        const Cascade c = random_cascade(3, 15, 8, mode, 31);
        const Eigen::MatrixXd Y = random_matrix(3, 15, 32);
        const Decomposition d = cascade_forward(Y, c);
        const Eigen::MatrixXd sum = d.components[0] + d.components[1] + d.components[2] + d.residual;
        EXPECT_LT((sum - Y).cwiseAbs().maxCoeff(), 1e-12);

        Eigen::MatrixXd X = Y;
        Eigen::VectorXd total = Eigen::VectorXd::Zero(3);
        for (std::size_t k = 0; k < kNumBlocks; ++k) {
            const auto out = block_forward(X, c.banks[k], c.heads[k]);
            EXPECT_LT((out.component - d.components[k]).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LT((out.prediction - d.predictions[k]).cwiseAbs().maxCoeff(), 1e-12);
            total += out.prediction;
            X -= out.component;
        }
        EXPECT_LT((total - d.total_prediction()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Cascade, Causal) {
    const Cascade c = random_cascade(2, 20, 10, BMode::kCanonicalLast, 41);
    const Eigen::MatrixXd Y = random_matrix(2, 20, 42);
    const Decomposition base = cascade_forward(Y, c);
    for (Eigen::Index t = 0; t < 20; ++t) {
        Eigen::MatrixXd Yp = Y;
        Yp(1, t) += 3.0;
        const Decomposition d = cascade_forward(Yp, c);
        for (std::size_t k = 0; k < kNumBlocks; ++k) {
            EXPECT_EQ(d.components[k].leftCols(t), base.components[k].leftCols(t));
        }
        EXPECT_EQ(d.residual.leftCols(t), base.residual.leftCols(t));
    }
}

TEST(Cascade, DisabledPassesThrough) {
    Cascade c = random_cascade(2, 10, 5, BMode::kCanonicalLast, 3);
    c.enabled = false;
    const Eigen::MatrixXd Y = random_matrix(2, 10, 4);
    const Decomposition d = cascade_forward(Y, c);
    EXPECT_EQ(d.residual, Y);
    EXPECT_EQ(d.total_prediction().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Cascade, TrendHeadFitsRamp) {
    // Least-squares trend selectors remove almost all of a ramp.
    const std::size_t np = 60;
    const std::size_t N = 30;
    const FilterBank bank = init_trend_bank(10, N, 17);
    Eigen::MatrixXd Y(1, np);
    for (std::size_t t = 0; t < np; ++t) {
        Y(0, static_cast<Eigen::Index>(t)) = 0.5 + 0.1 * static_cast<double>(t);
    }
    BlockHeads h = make_heads(1, 10, np, BMode::kCanonicalLast, 1.0);
    const auto feats = block_forward(Y, bank, h).features[0];
    const auto post = static_cast<Eigen::Index>(np - N);
    const Eigen::MatrixXd Gp = feats.rightCols(post).transpose();
    const Eigen::VectorXd yp = Y.rightCols(post).transpose();
    h.A.row(0) = Gp.colPivHouseholderQr().solve(yp).transpose();
    const auto out = block_forward(Y, bank, h);
    const double resid = (Y - out.component).rightCols(post).squaredNorm();
    EXPECT_LT(resid, 0.1 * Y.rightCols(post).squaredNorm());
}

TEST(Cascade, SeasonalHeadFitsSinusoid) {
    const std::size_t np = 80;
    const std::size_t N = 40;
    const FilterBank bank = init_seasonal_bank(20, N, 19);
    // Pick the frequency of the bank's first kernel.
    const Eigen::RowVectorXd k0 = bank.kernels().row(0);
    const double omega = std::acos(std::clamp(k0(1) / k0(0), -1.0, 1.0));
    Eigen::MatrixXd Y(1, np);
    for (std::size_t t = 0; t < np; ++t) {
        Y(0, static_cast<Eigen::Index>(t)) = std::sin(omega * static_cast<double>(t));
    }
    BlockHeads h = make_heads(1, 20, np, BMode::kCanonicalLast, 1.0);
    const auto feats = block_forward(Y, bank, h).features[0];
    const auto post = static_cast<Eigen::Index>(np - N);
    h.A.row(0) = feats.rightCols(post).transpose().colPivHouseholderQr().solve(Y.rightCols(post).transpose()).transpose();
    const auto out = block_forward(Y, bank, h);
    EXPECT_LT((Y - out.component).rightCols(post).squaredNorm(), 0.1 * Y.rightCols(post).squaredNorm());
}

TEST(CascadeEngine, BackwardMatchesFiniteDifferences) {
    for (BMode mode : {BMode::kCanonicalLast, BMode::kDense}) {
        Cascade c = random_cascade(2, 9, 5, mode, 51);
        const Eigen::MatrixXd Y = random_matrix(2, 9, 52);
        const Eigen::MatrixXd W = random_matrix(2, 9, 53);   // weights on X_3
        const Eigen::VectorXd v = random_matrix(2, 1, 54);   // weights on y_hat
        auto loss = [&](const Cascade& cc) {
            const Decomposition d = cascade_forward(Y, cc);
            return d.residual.cwiseProduct(W).sum() + 0.5 * d.total_prediction().squaredNorm() +
                   v.dot(d.total_prediction());
        };
        const CascadeEngine engine(c);
        std::array<Eigen::MatrixXd, kNumBlocks> inputs;
        const Decomposition d = engine.forward(Y, &inputs);
        auto g = engine.zero_grad();
        engine.backward(inputs, d, W, d.total_prediction() + v, g);
        std::array<Eigen::MatrixXd, kNumBlocks> dK, dA;
        for (std::size_t k = 0; k < kNumBlocks; ++k) {
            dK[k] = Eigen::MatrixXd::Zero(c.banks[k].kernels().rows(), c.banks[k].kernels().cols());
            dA[k] = Eigen::MatrixXd::Zero(c.heads[k].A.rows(), c.heads[k].A.cols());
        }
        engine.finalize(g, dK, dA);

        const double h = 1e-6;
        for (std::size_t k = 0; k < kNumBlocks; ++k) {
            auto check = [&](Eigen::MatrixXd& P, const Eigen::MatrixXd& analytic) {
                for (Eigen::Index i = 0; i < P.size(); ++i) {
                    const double keep = P.data()[i];
                    P.data()[i] = keep + h;
                    const double up = loss(c);
                    P.data()[i] = keep - h;
                    const double down = loss(c);
                    P.data()[i] = keep;
                    EXPECT_NEAR(analytic.data()[i], (up - down) / (2 * h), 1e-6);
                }
            };
            check(c.banks[k].kernels(), dK[k]);
            check(c.heads[k].A, dA[k]);
            if (mode == BMode::kDense) {
                check(c.heads[k].B, g.B[k]);
            }
        }
    }
}
