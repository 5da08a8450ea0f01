#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace stric::train {

/// Plain values of the fading prior. lambda may be set to exactly 1 to
/// recover the ridge penalty ||b||^2 / kappa.
struct PriorValues {
    double lambda = 0.99;
    double kappa = 1.0;
    double eta2 = 1.0;
};

/// Learnable fading prior. lambda lives on (0, 1) through a logistic
/// reparametrization and kappa, eta^2 on (0, inf) through logs.
struct FadingPrior {
    double lambda_logit = 0.0;
    double log_kappa = 0.0;
    double log_eta2 = 0.0;
    bool learn_eta2 = false;

    static FadingPrior from_values(const PriorValues& v, bool learn_eta2 = false);

    double lambda() const;
    double kappa() const;
    double eta2() const;
    PriorValues values() const { return {lambda(), kappa(), eta2()}; }
};

/// log Lambda_jj for a window of n_past columns. The most recent column
/// (n_past - 1) carries variance kappa; column j carries kappa lambda^(n_past-1-j).
Eigen::VectorXd log_prior_variances(std::size_t n_past, double lambda, double kappa);

/// b' Lambda^-1 b evaluated in log space.
double fading_penalty(const Eigen::VectorXd& b, double lambda, double kappa);

/// Value of the marginal-likelihood bound split into its three terms.
struct FadingTerms {
    double data_fit = 0.0;  // ||Y_f - Y_hat||^2 / eta^2
    double penalty = 0.0;   // b' Lambda^-1 b
    double log_det = 0.0;   // log det(F Lambda F' + eta^2 I)

    double total() const { return data_fit + penalty + log_det; }
};

/// Partial derivatives with Y_hat treated as an independent input; the
/// caller chains Y_hat = offset + F b. Scalars are w.r.t. log lambda,
/// log kappa and log eta^2.
struct FadingGrad {
    Eigen::VectorXd d_prediction;  // n_f
    Eigen::MatrixXd d_features;    // n_f x n_p, log-det term only
    Eigen::VectorXd d_b;           // n_p, penalty term only
    double d_log_lambda = 0.0;
    double d_log_kappa = 0.0;
    double d_log_eta2 = 0.0;
};

/// (1/eta^2)||Y_f - Y_hat||^2 + b' Lambda^-1 b + log det(F Lambda F' + eta^2 I).
/// The log-det uses a Cholesky factorization; a failed factorization is
/// retried once with 1e-8 trace/n_f jitter before throwing NumericError.
FadingTerms fading_loss(const Eigen::VectorXd& target, const Eigen::VectorXd& prediction,
                        const Eigen::MatrixXd& features, const Eigen::VectorXd& b, const PriorValues& prior,
                        FadingGrad* grad = nullptr);

/// Joint negative log posterior under the same prior:
/// (1/eta^2)||Y_f - Y_hat||^2 + n_f log eta^2 + b' Lambda^-1 b + log det Lambda.
/// Unbounded below as lambda -> 0 whenever b vanishes off the most recent lag.
double joint_neg_log_posterior(const Eigen::VectorXd& target, const Eigen::VectorXd& prediction,
                               const Eigen::VectorXd& b, const PriorValues& prior);

/// log det(F diag(exp(log_var)) F' + eta2 I) and, optionally, its inverse.
double fading_log_det(const Eigen::MatrixXd& features, const Eigen::VectorXd& log_var, double eta2,
                      Eigen::MatrixXd* inverse = nullptr);

} // namespace stric::train
