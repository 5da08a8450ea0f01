#include "stric/train.hpp"

#include "stric/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace stric::train {

namespace {

void check_finite(double value, const char* term) {
    if (!std::isfinite(value)) {
        throw NumericError(std::string("objective term '") + term + "' is not finite");
    }
}

double l1_sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

} // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("train: learning rate must be positive");
    }
    if (batch_size < 1 || max_epochs < 1 || patience < 1) {
        throw ConfigError("train: batch size, epochs and patience must be >= 1");
    }
    if (!(l1_weight >= 0.0) || !(kernel_weight >= 0.0)) {
        throw ConfigError("train: regularizer weights must be non-negative");
    }
    if (!(eta2 >= 0.0)) {
        throw ConfigError("train: eta2 must be non-negative (0 selects the warm-start estimate)");
    }
    if (!(divergence_threshold > 0.0)) {
        throw ConfigError("train: divergence threshold must be positive");
    }
}

std::vector<Eigen::MatrixXd> assemble_F(const std::vector<tcn::Readout>& readouts) {
    if (readouts.empty()) {
        throw std::invalid_argument("assemble_F: need at least one window");
    }
    const auto n = readouts.front().rows.rows();
    const auto np = readouts.front().rows.cols();
    const auto nf = static_cast<Eigen::Index>(readouts.size());
    std::vector<Eigen::MatrixXd> F(static_cast<std::size_t>(n), Eigen::MatrixXd(nf, np));
    for (Eigen::Index r = 0; r < nf; ++r) {
        const auto& rows = readouts[static_cast<std::size_t>(r)].rows;
        if (rows.rows() != n || rows.cols() != np) {
            throw std::invalid_argument("assemble_F: readout shapes differ between windows");
        }
        for (Eigen::Index c = 0; c < n; ++c) {
            F[static_cast<std::size_t>(c)].row(r) = rows.row(c);
        }
    }
    return F;
}

std::vector<Eigen::MatrixXd> assemble_F(const StricModel& model, const Eigen::MatrixXd& data, std::size_t start) {
    const std::size_t np = model.config.n_past;
    const std::size_t nf = model.config.n_future;
    if (start + nf - 1 + np > static_cast<std::size_t>(data.cols())) {
        throw DataError("assemble_F: item at column " + std::to_string(start) + " runs past the data");
    }
    std::vector<tcn::Readout> readouts;
    for (std::size_t r = 0; r < nf; ++r) {
        const Eigen::MatrixXd window =
            data.middleCols(static_cast<Eigen::Index>(start + r), static_cast<Eigen::Index>(np));
        readouts.push_back(predict_window(model, window).readout);
    }
    return assemble_F(readouts);
}

ObjectiveTerms full_objective(StricModel& model, const Eigen::MatrixXd& data, std::span<const std::size_t> items,
                              const TrainConfig& config, StricModel* grad, const ObjectiveOptions& options) {
    const auto& cfg = model.config;
    const std::size_t n = cfg.n_channels;
    const std::size_t np = cfg.n_past;
    const std::size_t nf = cfg.n_future;
    if (items.empty()) {
        throw std::invalid_argument("full_objective: empty batch");
    }
    if (static_cast<std::size_t>(data.rows()) != n) {
        throw DataError("full_objective: data has " + std::to_string(data.rows()) + " channels, model expects " +
                        std::to_string(n));
    }
    for (std::size_t s : items) {
        if (s + nf - 1 + np >= static_cast<std::size_t>(data.cols())) {
            throw DataError("full_objective: item at column " + std::to_string(s) + " has no target inside the data");
        }
    }

    const std::size_t windows = items.size() * nf;
    const ldl::CascadeEngine engine(model.cascade);
    std::vector<ldl::Decomposition> decs(windows);
    std::vector<std::array<Eigen::MatrixXd, ldl::kNumBlocks>> inputs(grad ? windows : 0);
    std::vector<tcn::NetworkCache> caches(grad ? windows : 0);
    std::vector<Eigen::MatrixXd> G(windows);
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t r = 0; r < nf; ++r) {
            const std::size_t w = i * nf + r;
            const Eigen::MatrixXd Y =
                data.middleCols(static_cast<Eigen::Index>(items[i] + r), static_cast<Eigen::Index>(np));
            decs[w] = engine.forward(Y, grad ? &inputs[w] : nullptr);
            G[w] = model.network.forward(decs[w].residual, grad ? &caches[w] : nullptr);
        }
    }
    tcn::NormCache norm_cache;
    const std::vector<Eigen::MatrixXd> Gn =
        tcn::feature_norm(G, model.norm, options.mode, grad ? &norm_cache : nullptr, options.update_running);
    std::vector<tcn::Readout> readouts(windows);
    for (std::size_t w = 0; w < windows; ++w) {
        readouts[w] = tcn::tcn_readout(Gn[w], model.heads);
    }

    const PriorValues prior = model.prior.values();
    const double lambda = prior.lambda;
    const double scale = 1.0 / static_cast<double>(items.size());

    std::vector<Eigen::VectorXd> d_pred;
    std::vector<Eigen::MatrixXd> d_rows;
    if (grad) {
        d_pred.assign(windows, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
        d_rows.assign(windows, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(np)));
    }

    ObjectiveTerms terms;
    double sq_error = 0.0;
    const auto nfi = static_cast<Eigen::Index>(nf);
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t c = 0; c < n; ++c) {
            const auto ci = static_cast<Eigen::Index>(c);
            Eigen::VectorXd target(nfi);
            Eigen::VectorXd pred(nfi);
            Eigen::MatrixXd F(nfi, static_cast<Eigen::Index>(np));
            for (std::size_t r = 0; r < nf; ++r) {
                const std::size_t w = i * nf + r;
                const auto ri = static_cast<Eigen::Index>(r);
                target(ri) = data(ci, static_cast<Eigen::Index>(items[i] + r + np));
                pred(ri) = decs[w].total_prediction()(ci) + readouts[w].prediction(ci);
                F.row(ri) = readouts[w].rows.row(ci);
            }
            const Eigen::VectorXd b = model.heads.B.row(ci).transpose();
            sq_error += (target - pred).squaredNorm();

            FadingGrad fg;
            if (cfg.use_fading) {
                const FadingTerms ft = fading_loss(target, pred, F, b, prior, grad ? &fg : nullptr);
                terms.data_fit += scale * ft.data_fit;
                terms.penalty += scale * ft.penalty;
                terms.log_det += scale * ft.log_det;
            } else {
                terms.data_fit += scale * (target - pred).squaredNorm() / prior.eta2;
                if (grad) {
                    fg.d_prediction = (-2.0 / prior.eta2) * (target - pred);
                }
            }
            if (!grad) {
                continue;
            }
            Eigen::RowVectorXd d_b = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(np));
            for (std::size_t r = 0; r < nf; ++r) {
                const std::size_t w = i * nf + r;
                const auto ri = static_cast<Eigen::Index>(r);
                const double g = scale * fg.d_prediction(ri);
                d_pred[w](ci) += g;
                d_rows[w].row(ci) += g * b.transpose();
                if (cfg.use_fading) {
                    d_rows[w].row(ci) += scale * fg.d_features.row(ri);
                }
                d_b += g * F.row(ri);
            }
            if (cfg.use_fading) {
                d_b += scale * fg.d_b.transpose();
                grad->prior.lambda_logit += scale * fg.d_log_lambda * (1.0 - lambda);
                grad->prior.log_kappa += scale * fg.d_log_kappa;
                if (model.prior.learn_eta2) {
                    grad->prior.log_eta2 += scale * fg.d_log_eta2;
                }
            }
            grad->heads.B.row(ci) += d_b;
        }
    }
    terms.fading = terms.data_fit + terms.penalty + terms.log_det;
    terms.mse = sq_error / static_cast<double>(windows * n);

    // Sparsity on every selector matrix and proximity of kernels to their
    // initialization.
    auto add_l1 = [&](Eigen::MatrixXd& A, Eigen::MatrixXd* dA) {
        terms.l1 += config.l1_weight * A.cwiseAbs().sum();
        if (dA) {
            *dA += config.l1_weight * A.unaryExpr(&l1_sign);
        }
    };
    if (cfg.use_ldl) {
        for (std::size_t k = 0; k < ldl::kNumBlocks; ++k) {
            add_l1(model.cascade.heads[k].A, grad ? &grad->cascade.heads[k].A : nullptr);
            const auto& bank = model.cascade.banks[k];
            const Eigen::MatrixXd diff = bank.kernels() - bank.init_snapshot();
            terms.kernel_proximity += config.kernel_weight * diff.squaredNorm();
            if (grad) {
                grad->cascade.banks[k].kernels() += 2.0 * config.kernel_weight * diff;
            }
        }
    }
    add_l1(model.heads.A, grad ? &grad->heads.A : nullptr);

    terms.total = terms.fading + terms.l1 + terms.kernel_proximity;
    check_finite(terms.data_fit, "data_fit");
    check_finite(terms.penalty, "fading_penalty");
    check_finite(terms.log_det, "log_det");
    check_finite(terms.l1, "l1");
    check_finite(terms.kernel_proximity, "kernel_proximity");

    if (!grad) {
        return terms;
    }

    std::vector<Eigen::MatrixXd> d_gn(windows);
    for (std::size_t w = 0; w < windows; ++w) {
        d_gn[w] = model.heads.A.transpose() * d_rows[w];
        grad->heads.A.noalias() += d_rows[w] * Gn[w].transpose();
    }
    const std::vector<Eigen::MatrixXd> d_g =
        tcn::feature_norm_backward(d_gn, model.norm, norm_cache, grad->norm.scale, grad->norm.shift);

    ldl::CascadeEngine::Grad cascade_grad = engine.zero_grad();
    for (std::size_t w = 0; w < windows; ++w) {
        const Eigen::MatrixXd d_residual = model.network.backward(caches[w], d_g[w], grad->network);
        engine.backward(inputs[w], decs[w], d_residual, d_pred[w], cascade_grad);
    }
    if (cfg.use_ldl) {
        std::array<Eigen::MatrixXd, ldl::kNumBlocks> d_kernels;
        std::array<Eigen::MatrixXd, ldl::kNumBlocks> d_A;
        for (std::size_t k = 0; k < ldl::kNumBlocks; ++k) {
            d_kernels[k] = Eigen::MatrixXd::Zero(model.cascade.banks[k].kernels().rows(),
                                                 model.cascade.banks[k].kernels().cols());
            d_A[k] = Eigen::MatrixXd::Zero(model.cascade.heads[k].A.rows(), model.cascade.heads[k].A.cols());
        }
        engine.finalize(cascade_grad, d_kernels, d_A);
        for (std::size_t k = 0; k < ldl::kNumBlocks; ++k) {
            grad->cascade.banks[k].kernels() += d_kernels[k];
            grad->cascade.heads[k].A += d_A[k];
            if (model.cascade.heads[k].b_mode == ldl::BMode::kDense) {
                grad->cascade.heads[k].B += cascade_grad.B[k];
            }
        }
    }
    return terms;
}

double warm_start_noise_variance(const Eigen::MatrixXd& data, std::size_t n_past, double ridge) {
    const auto np = static_cast<Eigen::Index>(n_past);
    const Eigen::Index rows = data.cols() - np;
    if (rows < 1) {
        throw DataError("warm start: series of length " + std::to_string(data.cols()) + " is shorter than n_p + 1");
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < data.rows(); ++c) {
        Eigen::MatrixXd X(rows, np);
        Eigen::VectorXd y(rows);
        for (Eigen::Index t = 0; t < rows; ++t) {
            X.row(t) = data.row(c).segment(t, np);
            y(t) = data(c, t + np);
        }
        Eigen::MatrixXd gram = X.transpose() * X;
        gram.diagonal().array() += ridge * static_cast<double>(rows);
        const Eigen::VectorXd w = gram.ldlt().solve(X.transpose() * y);
        total += (y - X * w).squaredNorm() / static_cast<double>(rows);
    }
    return std::max(total / static_cast<double>(data.rows()), 1e-4);
}

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam: parameter and gradient lists differ in length");
    }
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.values.size(), 0.0);
            v_.emplace_back(p.values.size(), 0.0);
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = m_[i];
        auto& v = v_[i];
        const auto p = params[i].values;
        const auto g = grads[i].values;
        if (p.size() != m.size() || g.size() != m.size()) {
            throw std::invalid_argument("adam: shape of '" + params[i].name + "' changed between steps");
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
        }
    }
}

std::vector<std::size_t> training_items(std::size_t length, std::size_t n_past, std::size_t n_future) {
    std::vector<std::size_t> items;
    for (std::size_t s = 0; s + n_future - 1 + n_past < length; s += n_future) {
        items.push_back(s);
    }
    return items;
}

double prediction_rmse(const StricModel& model, const Eigen::MatrixXd& data, std::size_t t_begin, std::size_t t_end) {
    if (t_end <= t_begin) {
        throw std::invalid_argument("prediction_rmse: empty range");
    }
    const Eigen::MatrixXd pred = one_step_predictions(model, data, t_begin, t_end);
    const auto cols = static_cast<Eigen::Index>(t_end - t_begin);
    const double sq = (data.middleCols(static_cast<Eigen::Index>(t_begin), cols) - pred).squaredNorm();
    return std::sqrt(sq / static_cast<double>(cols));
}

TrainResult train(StricModel& model, const series::TimeSeries& train_split, const series::TimeSeries* val_split,
                  const TrainConfig& config) {
    config.validate();
    model.config.validate();
    const std::size_t n = model.config.n_channels;
    const std::size_t np = model.config.n_past;
    const std::size_t nf = model.config.n_future;
    if (train_split.n_channels() != n) {
        throw DataError("train: series has " + std::to_string(train_split.n_channels()) +
                        " channels, model expects " + std::to_string(n));
    }
    const std::size_t t_train = train_split.length();
    const std::size_t t_val = val_split ? val_split->length() : 0;
    if (val_split && t_val > 0 && val_split->n_channels() != n) {
        throw DataError("train: validation split has the wrong channel count");
    }
    std::vector<std::size_t> items = training_items(t_train, np, nf);
    if (items.empty()) {
        throw DataError("train: training split of length " + std::to_string(t_train) + " needs at least n_p + n_f = " +
                        std::to_string(np + nf) + " samples");
    }

    Eigen::MatrixXd data(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t_train + t_val));
    data.leftCols(static_cast<Eigen::Index>(t_train)) = train_split.values;
    if (t_val > 0) {
        data.rightCols(static_cast<Eigen::Index>(t_val)) = val_split->values;
    }

    TrainResult result;
    result.eta2 = config.eta2 > 0.0 ? config.eta2 : warm_start_noise_variance(train_split.values, np);
    model.prior.log_eta2 = std::log(result.eta2);
    model.prior.learn_eta2 = config.learn_eta2 && model.config.use_fading;

    StricModel grad = model.zeros_like();
    Adam adam(config.learning_rate);
    std::mt19937_64 rng(derive_seed(config.seed, 100));
    const std::size_t per_batch = std::max<std::size_t>(1, config.batch_size / nf);

    StricModel best = model;
    double best_score = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    const ObjectiveOptions options{tcn::NormMode::kTrain, true};

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(items.begin(), items.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < items.size(); begin += per_batch) {
            const std::size_t count = std::min(per_batch, items.size() - begin);
            for (auto& p : parameters(grad)) {
                std::fill(p.values.begin(), p.values.end(), 0.0);
            }
            ObjectiveTerms terms;
            try {
                terms = full_objective(model, train_split.values,
                                       std::span<const std::size_t>(items).subspan(begin, count), config, &grad,
                                       options);
            } catch (const NumericError& e) {
                throw NumericError("train: epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches) +
                                   ": " + e.what());
            }
            if (!(terms.total < config.divergence_threshold)) {
                std::ostringstream msg;
                msg << "train: diverged at epoch " << epoch << ", batch " << batches << " (loss " << terms.total
                    << ", data_fit " << terms.data_fit << ", penalty " << terms.penalty << ", log_det "
                    << terms.log_det << ", lambda " << model.prior.lambda() << ", kappa " << model.prior.kappa()
                    << ")";
                throw NumericError(msg.str());
            }
            adam.step(parameters(model), parameters(grad));
            loss_sum += terms.total;
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_rmse = prediction_rmse(model, data, np, t_train);
        rec.val_rmse = t_val > 0 ? prediction_rmse(model, data, t_train, t_train + t_val) : rec.train_rmse;
        rec.lambda = model.prior.lambda();
        rec.kappa = model.prior.kappa();
        rec.loss = loss_sum / static_cast<double>(batches);
        result.history.push_back(rec);

        if (rec.val_rmse < best_score) {
            best_score = rec.val_rmse;
            best = model;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            result.stopped_early = true;
            break;
        }
    }
    model = std::move(best);
    result.best_val_rmse = best_score;
    return result;
}

void save_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write history to " + path);
    }
    out << "epoch,train_rmse,val_rmse,lambda,kappa,loss\n";
    for (const auto& r : history) {
        out << r.epoch << ',' << series::format_double(r.train_rmse) << ',' << series::format_double(r.val_rmse)
            << ',' << series::format_double(r.lambda) << ',' << series::format_double(r.kappa) << ','
            << series::format_double(r.loss) << '\n';
    }
}

} // namespace stric::train
