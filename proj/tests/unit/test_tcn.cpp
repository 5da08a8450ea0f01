#include "stric/tcn.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace stric::tcn;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = d(rng);
    }
    return m;
}

} // namespace

TEST(TcnConfig, ReceptiveField) {
    TcnConfig c;
    c.layers = 3;
    c.kernel_size = 5;
    EXPECT_EQ(c.receptive_field(), 1u + 2u * 4u * 7u);
}

TEST(CausalConv, MatchesLoopOracle) {
    CausalConv conv;
    conv.dilation = 2;
    for (int k = 0; k < 3; ++k) {
        conv.taps.push_back(random_matrix(4, 3, 10 + k));
    }
    conv.bias = random_matrix(4, 1, 20);
    const Eigen::MatrixXd x = random_matrix(3, 11, 30);
    const Eigen::MatrixXd y = conv.forward(x);
    for (Eigen::Index o = 0; o < 4; ++o) {
        for (Eigen::Index t = 0; t < 11; ++t) {
            double ref = conv.bias(o);
            for (Eigen::Index k = 0; k < 3; ++k) {
                const Eigen::Index s = t - 2 * k;
                if (s < 0) {
                    continue;
                }
                for (Eigen::Index i = 0; i < 3; ++i) {
                    ref += conv.taps[static_cast<std::size_t>(k)](o, i) * x(i, s);
                }
            }
            EXPECT_NEAR(y(o, t), ref, 1e-12);
        }
    }
}

TEST(Network, SingleLinearLayerMatchesOracle) {
    // One block, identity activation, equal widths: out = conv2(conv1(x)) + x.
    TcnConfig cfg;
    cfg.layers = 1;
    cfg.channels = 2;
    cfg.kernel_size = 3;
    cfg.activation = Activation::kIdentity;
    const Network net(2, cfg, 5);
    const Eigen::MatrixXd x = random_matrix(2, 9, 6);
    const auto& b = net.blocks()[0];
    ASSERT_FALSE(b.has_projection);
    auto conv = [](const CausalConv& c, const Eigen::MatrixXd& in) {
        Eigen::MatrixXd out(c.bias.size(), in.cols());
        for (Eigen::Index o = 0; o < out.rows(); ++o) {
            for (Eigen::Index t = 0; t < in.cols(); ++t) {
                double s = c.bias(o);
                for (std::size_t k = 0; k < c.taps.size(); ++k) {
                    const Eigen::Index src = t - static_cast<Eigen::Index>(k * c.dilation);
                    if (src >= 0) {
                        for (Eigen::Index i = 0; i < in.rows(); ++i) {
                            s += c.taps[k](o, i) * in(i, src);
                        }
                    }
                }
                out(o, t) = s;
            }
        }
        return out;
    };
    const Eigen::MatrixXd ref = conv(b.conv2, conv(b.conv1, x)) + x;
    EXPECT_LT((net.forward(x) - ref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Network, ZeroInputZeroOutput) {
    TcnConfig cfg;
    cfg.layers = 3;
    cfg.channels = 6;
    const Network net(2, cfg, 1);
    const Eigen::MatrixXd out = net.forward(Eigen::MatrixXd::Zero(2, 20));
    EXPECT_EQ(out.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Network, CausalAndReceptiveField) {
    TcnConfig cfg;
    cfg.layers = 2;
    cfg.channels = 5;
    cfg.kernel_size = 2;
    const std::size_t rf = cfg.receptive_field();  // 1 + 2*1*3 = 7
    const Network net(3, cfg, 2);
    const Eigen::MatrixXd x = random_matrix(3, 30, 3);
    const Eigen::MatrixXd base = net.forward(x);
    for (Eigen::Index j = 0; j < 30; ++j) {
        Eigen::MatrixXd xp = x;
        xp.col(j).array() += 2.0;
        const Eigen::MatrixXd out = net.forward(xp);
        EXPECT_EQ(out.leftCols(j), base.leftCols(j));
        const Eigen::Index far = j + static_cast<Eigen::Index>(rf);
        if (far < 30) {
            EXPECT_EQ(out.rightCols(30 - far), base.rightCols(30 - far));
        }
    }
}

TEST(Network, BackwardMatchesFiniteDifferences) {
    TcnConfig cfg;
    cfg.layers = 2;
    cfg.channels = 3;
    cfg.kernel_size = 2;
    Network net(2, cfg, 8);
    const Eigen::MatrixXd x = random_matrix(2, 7, 9);
    const Eigen::MatrixXd W = random_matrix(3, 7, 10);
    NetworkCache cache;
    net.forward(x, &cache);
    Network grad = net.zeros_like();
    const Eigen::MatrixXd dx = net.backward(cache, W, grad);
    auto loss = [&](const Network& n, const Eigen::MatrixXd& in) { return n.forward(in).cwiseProduct(W).sum(); };
    const double h = 1e-6;
    for (std::size_t b = 0; b < net.blocks().size(); ++b) {
        auto& blk = net.blocks()[b];
        auto& gb = grad.blocks()[b];
        std::vector<std::pair<Eigen::MatrixXd*, Eigen::MatrixXd*>> mats{{&blk.conv1.taps[0], &gb.conv1.taps[0]},
                                                                       {&blk.conv2.taps[1], &gb.conv2.taps[1]}};
        if (blk.has_projection) {
            mats.push_back({&blk.projection, &gb.projection});
        }
        for (auto [P, G] : mats) {
            for (Eigen::Index i = 0; i < P->size(); ++i) {
                const double keep = P->data()[i];
                P->data()[i] = keep + h;
                const double up = loss(net, x);
                P->data()[i] = keep - h;
                const double down = loss(net, x);
                P->data()[i] = keep;
                EXPECT_NEAR(G->data()[i], (up - down) / (2 * h), 1e-5);
            }
        }
        for (Eigen::Index i = 0; i < blk.conv1.bias.size(); ++i) {
            const double keep = blk.conv1.bias(i);
            blk.conv1.bias(i) = keep + h;
            const double up = loss(net, x);
            blk.conv1.bias(i) = keep - h;
            const double down = loss(net, x);
            blk.conv1.bias(i) = keep;
            EXPECT_NEAR(gb.conv1.bias(i), (up - down) / (2 * h), 1e-5);
        }
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::MatrixXd xp = x;
        xp.data()[i] += h;
        Eigen::MatrixXd xm = x;
        xm.data()[i] -= h;
        EXPECT_NEAR(dx.data()[i], (loss(net, xp) - loss(net, xm)) / (2 * h), 1e-5);
    }
}

TEST(FeatureNorm, AlreadyNormalizedUnchanged) {
    Eigen::MatrixXd G = random_matrix(4, 50, 1);
    for (Eigen::Index f = 0; f < 4; ++f) {
        G.row(f).array() -= G.row(f).mean();
        G.row(f) /= std::sqrt(G.row(f).array().square().mean());
    }
    FeatureNorm norm(4);
    const auto out = feature_norm({G}, norm, NormMode::kTrain);
    EXPECT_LT((out[0] - G).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FeatureNorm, ScaleInvariantInTrainMode) {
    const std::vector<Eigen::MatrixXd> batch{random_matrix(3, 20, 2), random_matrix(3, 20, 3)};
    std::vector<Eigen::MatrixXd> scaled{10.0 * batch[0], 10.0 * batch[1]};
    FeatureNorm n1(3);
    FeatureNorm n2(3);
    const auto a = feature_norm(batch, n1, NormMode::kTrain);
    const auto b = feature_norm(scaled, n2, NormMode::kTrain);
    for (std::size_t w = 0; w < 2; ++w) {
        EXPECT_LT((a[w] - b[w]).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(FeatureNorm, PooledStatistics) {
    const std::vector<Eigen::MatrixXd> batch{random_matrix(3, 15, 4, 3.0), random_matrix(3, 15, 5, 3.0)};
    FeatureNorm norm(3);
    const auto out = feature_norm(batch, norm, NormMode::kTrain);
    for (Eigen::Index f = 0; f < 3; ++f) {
        double s = 0.0, ss = 0.0;
        for (const auto& m : out) {
            s += m.row(f).sum();
            ss += m.row(f).squaredNorm();
        }
        EXPECT_NEAR(s / 30.0, 0.0, 1e-12);
        EXPECT_NEAR(ss / 30.0, 1.0, 1e-9);
    }
}

TEST(FeatureNorm, RunningStatsConverge) {
    const std::vector<Eigen::MatrixXd> batch{random_matrix(3, 40, 6, 2.0)};
    FeatureNorm norm(3);
    std::vector<Eigen::MatrixXd> train_out;
    for (int i = 0; i < 300; ++i) {
        train_out = feature_norm(batch, norm, NormMode::kTrain);
    }
    const Eigen::MatrixXd eval_out = feature_norm_eval(batch[0], norm);
    EXPECT_LT((eval_out - train_out[0]).cwiseAbs().maxCoeff(), 1e-3);
    const auto eval_batch = feature_norm(batch, norm, NormMode::kEval);
    EXPECT_LT((eval_batch[0] - eval_out).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FeatureNorm, ZeroVarianceIsGuarded) {
    const std::vector<Eigen::MatrixXd> batch{Eigen::MatrixXd::Constant(2, 10, 3.0)};
    FeatureNorm norm(2);
    const auto out = feature_norm(batch, norm, NormMode::kTrain);
    EXPECT_TRUE(out[0].allFinite());
    EXPECT_EQ(out[0].cwiseAbs().maxCoeff(), 0.0);
}

TEST(FeatureNorm, BackwardMatchesFiniteDifferences) {
    std::vector<Eigen::MatrixXd> batch{random_matrix(3, 6, 7), random_matrix(3, 6, 8)};
    batch[1].row(2).setConstant(0.5);
    batch[0].row(2).setConstant(0.5);  // floored feature
    const std::vector<Eigen::MatrixXd> W{random_matrix(3, 6, 9), random_matrix(3, 6, 10)};
    FeatureNorm norm(3);
    norm.scale = random_matrix(3, 1, 11);
    norm.shift = random_matrix(3, 1, 12);
    auto loss = [&](const std::vector<Eigen::MatrixXd>& in, FeatureNorm nn) {
        const auto out = feature_norm(in, nn, NormMode::kTrain, nullptr, false);
        return out[0].cwiseProduct(W[0]).sum() + out[1].cwiseProduct(W[1]).sum();
    };
    NormCache cache;
    FeatureNorm work = norm;
    feature_norm(batch, work, NormMode::kTrain, &cache, false);
    Eigen::VectorXd ds = Eigen::VectorXd::Zero(3), db = Eigen::VectorXd::Zero(3);
    const auto dx = feature_norm_backward(W, norm, cache, ds, db);
    const double h = 1e-6;
    for (std::size_t w = 0; w < 2; ++w) {
        for (Eigen::Index i = 0; i < batch[w].size(); ++i) {
            auto up = batch;
            up[w].data()[i] += h;
            auto dn = batch;
            dn[w].data()[i] -= h;
            EXPECT_NEAR(dx[w].data()[i], (loss(up, norm) - loss(dn, norm)) / (2 * h), 1e-5);
        }
    }
    for (Eigen::Index f = 0; f < 3; ++f) {
        FeatureNorm up = norm, dn = norm;
        up.scale(f) += h;
        dn.scale(f) -= h;
        EXPECT_NEAR(ds(f), (loss(batch, up) - loss(batch, dn)) / (2 * h), 1e-5);
        up = norm;
        dn = norm;
        up.shift(f) += h;
        dn.shift(f) -= h;
        EXPECT_NEAR(db(f), (loss(batch, up) - loss(batch, dn)) / (2 * h), 1e-5);
    }
}

TEST(Readout, Examples) {
    const Eigen::MatrixXd G = random_matrix(4, 6, 13);
    TcnHeads heads;
    heads.A = random_matrix(2, 4, 14);
    heads.B = Eigen::MatrixXd::Zero(2, 6);
    heads.B.col(5).setOnes();
    const Readout r = tcn_readout(G, heads);
    EXPECT_LT((r.prediction - r.rows.col(5)).cwiseAbs().maxCoeff(), 1e-15);

    heads.A.setZero();
    EXPECT_EQ(tcn_readout(G, heads).prediction.cwiseAbs().maxCoeff(), 0.0);

    heads.A = random_matrix(2, 4, 15);
    heads.B = random_matrix(2, 6, 16);
    const Readout r2 = tcn_readout(G, heads);
    for (Eigen::Index i = 0; i < 2; ++i) {
        double pred = 0.0;
        for (Eigen::Index t = 0; t < 6; ++t) {
            double row = 0.0;
            for (Eigen::Index f = 0; f < 4; ++f) {
                row += heads.A(i, f) * G(f, t);
            }
            EXPECT_NEAR(r2.rows(i, t), row, 1e-12);
            pred += row * heads.B(i, t);
        }
        EXPECT_NEAR(r2.prediction(i), pred, 1e-12);
    }
    heads.B = random_matrix(2, 5, 17);
    EXPECT_THROW(tcn_readout(G, heads), std::invalid_argument);
}
