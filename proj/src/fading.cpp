#include "stric/fading.hpp"

#include "stric/error.hpp"

#include <cmath>
#include <string>

namespace stric::train {

namespace {

double logit(double p) { return std::log(p) - std::log1p(-p); }

} // namespace

FadingPrior FadingPrior::from_values(const PriorValues& v, bool learn_eta2) {
    if (!(v.lambda > 0.0 && v.lambda < 1.0)) {
        throw std::invalid_argument("fading prior: lambda must lie in (0, 1)");
    }
    if (!(v.kappa > 0.0) || !(v.eta2 > 0.0)) {
        throw std::invalid_argument("fading prior: kappa and eta^2 must be positive");
    }
    FadingPrior p;
    p.lambda_logit = logit(v.lambda);
    p.log_kappa = std::log(v.kappa);
    p.log_eta2 = std::log(v.eta2);
    p.learn_eta2 = learn_eta2;
    return p;
}

double FadingPrior::lambda() const { return 1.0 / (1.0 + std::exp(-lambda_logit)); }
double FadingPrior::kappa() const { return std::exp(log_kappa); }
double FadingPrior::eta2() const { return std::exp(log_eta2); }

Eigen::VectorXd log_prior_variances(std::size_t n_past, double lambda, double kappa) {
    const auto np = static_cast<Eigen::Index>(n_past);
    const double log_lambda = std::log(lambda);
    const double log_kappa = std::log(kappa);
    Eigen::VectorXd out(np);
    for (Eigen::Index j = 0; j < np; ++j) {
        out(j) = log_kappa + static_cast<double>(np - 1 - j) * log_lambda;
    }
    return out;
}

double fading_penalty(const Eigen::VectorXd& b, double lambda, double kappa) {
    const Eigen::VectorXd log_var = log_prior_variances(static_cast<std::size_t>(b.size()), lambda, kappa);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        if (b(j) != 0.0) {
            sum += std::exp(2.0 * std::log(std::abs(b(j))) - log_var(j));
        }
    }
    return sum;
}

double joint_neg_log_posterior(const Eigen::VectorXd& target, const Eigen::VectorXd& prediction,
                               const Eigen::VectorXd& b, const PriorValues& prior) {
    if (target.size() != prediction.size()) {
        throw std::invalid_argument("joint_neg_log_posterior: target and prediction lengths differ");
    }
    const Eigen::VectorXd log_var = log_prior_variances(static_cast<std::size_t>(b.size()), prior.lambda, prior.kappa);
    return (target - prediction).squaredNorm() / prior.eta2 +
           static_cast<double>(target.size()) * std::log(prior.eta2) + fading_penalty(b, prior.lambda, prior.kappa) +
           log_var.sum();
}

double fading_log_det(const Eigen::MatrixXd& features, const Eigen::VectorXd& log_var, double eta2,
                      Eigen::MatrixXd* inverse) {
    const auto nf = features.rows();
    const Eigen::VectorXd var = log_var.array().exp();
    Eigen::MatrixXd sigma = features * var.asDiagonal() * features.transpose();
    sigma.diagonal().array() += eta2;

    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        sigma.diagonal().array() += 1e-8 * sigma.trace() / static_cast<double>(nf);
        llt.compute(sigma);
        if (llt.info() != Eigen::Success) {
            throw NumericError("fading loss: covariance is not positive definite after jitter");
        }
    }
    const Eigen::MatrixXd L = llt.matrixL();
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    if (inverse) {
        *inverse = llt.solve(Eigen::MatrixXd::Identity(nf, nf));
    }
    return log_det;
}

FadingTerms fading_loss(const Eigen::VectorXd& target, const Eigen::VectorXd& prediction,
                        const Eigen::MatrixXd& features, const Eigen::VectorXd& b, const PriorValues& prior,
                        FadingGrad* grad) {
    const auto nf = features.rows();
    const auto np = features.cols();
    if (target.size() != nf || prediction.size() != nf || b.size() != np) {
        throw std::invalid_argument("fading_loss: shapes disagree (n_f=" + std::to_string(nf) +
                                    ", n_p=" + std::to_string(np) + ")");
    }
    if (!(prior.lambda > 0.0 && prior.lambda <= 1.0) || !(prior.kappa > 0.0) || !(prior.eta2 > 0.0)) {
        throw std::invalid_argument("fading_loss: need lambda in (0, 1], kappa > 0, eta^2 > 0");
    }

    const Eigen::VectorXd residual = target - prediction;
    const Eigen::VectorXd log_var = log_prior_variances(static_cast<std::size_t>(np), prior.lambda, prior.kappa);

    FadingTerms terms;
    terms.data_fit = residual.squaredNorm() / prior.eta2;

    // Per-column penalty contributions, needed again for the gradient.
    Eigen::VectorXd pen = Eigen::VectorXd::Zero(np);
    for (Eigen::Index j = 0; j < np; ++j) {
        if (b(j) != 0.0) {
            pen(j) = std::exp(2.0 * std::log(std::abs(b(j))) - log_var(j));
        }
    }
    terms.penalty = pen.sum();

    Eigen::MatrixXd sigma_inv;
    terms.log_det = fading_log_det(features, log_var, prior.eta2, grad ? &sigma_inv : nullptr);

    if (grad) {
        const Eigen::VectorXd var = log_var.array().exp();
        grad->d_prediction = (-2.0 / prior.eta2) * residual;
        const Eigen::MatrixXd sigma_inv_f = sigma_inv * features;
        grad->d_features = 2.0 * sigma_inv_f * var.asDiagonal();
        grad->d_b.resize(np);
        for (Eigen::Index j = 0; j < np; ++j) {
            grad->d_b(j) = b(j) == 0.0 ? 0.0 : 2.0 * b(j) * std::exp(-log_var(j));
        }
        // dL/d log Lambda_jj: Lambda_jj (F' Sigma^-1 F)_jj - b_j^2 / Lambda_jj.
        const Eigen::VectorXd d_log_var =
            var.cwiseProduct(features.cwiseProduct(sigma_inv_f).colwise().sum().transpose()) - pen;
        grad->d_log_kappa = d_log_var.sum();
        double d_log_lambda = 0.0;
        for (Eigen::Index j = 0; j < np; ++j) {
            d_log_lambda += static_cast<double>(np - 1 - j) * d_log_var(j);
        }
        grad->d_log_lambda = d_log_lambda;
        grad->d_log_eta2 = -terms.data_fit + prior.eta2 * sigma_inv.trace();
    }
    return terms;
}

} // namespace stric::train
