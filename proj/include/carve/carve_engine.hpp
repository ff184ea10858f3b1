#pragma once

#include <string>
#include <vector>

#include "carve/types.hpp"

namespace carve {

// One study's exported summary together with the validation rows restricted
// to that study's selected covariates. All columns centered.
struct CarveInput {
    StudySummary summary;
    Eigen::VectorXd val_y;      // n
    Eigen::MatrixXd val_d;      // n x s
    Eigen::MatrixXd val_x_sel;  // n x q
};

// Output of the carving pipeline for one study.
struct CarveFit {
    Eigen::VectorXd gamma_hat;   // s+q pooled least squares
    Eigen::MatrixXd sigma_hat;   // (s+q)^2 pooled covariance
    Eigen::VectorXd zeta;        // (0_s, lambda .* signs)
    Eigen::VectorXd z_hat;       // s+q optimizer
    Eigen::VectorXd alpha_carve; // s debiased treatment estimate
    Eigen::MatrixXd v_carve;     // s x s
    Eigen::MatrixXd v_split;     // s x s reference scale for refit-only
    double efficiency_bound = 0.0;
    double r = 0.0;
    double n_total = 0.0;
    int newton_iters = 0;
    double sigma2_scale = 1.0;   // residual-variance plug-in applied to both variances
    std::vector<double> newton_objectives;  // accepted objective values, non-increasing
    std::string study_id;
    int q = 0;
};

struct BarrierEval {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::VectorXd hessian;  // diagonal
};

struct CarveProgramResult {
    Eigen::VectorXd z_hat;
    int iterations = 0;
    double gradient_norm = 0.0;
    std::vector<double> objective_trace;
};

/// Least squares on the pooled moments: the study's scaled moments are
/// recombined with the validation cross products and solved in one shot.
Eigen::VectorXd pooled_ls(const CarveInput& input);

/// (n_k * Xi + [d, x_sel]' [d, x_sel]) / N.
Eigen::MatrixXd pooled_covariance(const CarveInput& input);

/// Log-barrier sum_j log(1 + 1/(s_j w_j)) enforcing sign(w) = signs, with
/// its gradient and diagonal Hessian. Requires signs[j]*w[j] > 0.
BarrierEval barrier_value_grad_hess(const Eigen::VectorXd& w, const Eigen::VectorXd& signs);

/// Damped Newton solve of the barrier-penalized quadratic program in
/// w = sqrt(N) z, started on the correct orthant with |w| clamped >= 1.
CarveProgramResult solve_carve_program(const Eigen::VectorXd& gamma_hat,
                                       const Eigen::MatrixXd& sigma_hat,
                                       const Eigen::VectorXd& zeta, double r, double n_total,
                                       const Eigen::VectorXd& signs);

/// alpha_hat plus the additive correction r/(1-r) * (alpha_hat
/// - e1' Sigma^-1 zeta / sqrt(N) - e1' z_hat). The treatment block is
/// everything ahead of the barrier coordinates, so signs fixes its size.
Eigen::VectorXd carved_estimate(const Eigen::VectorXd& gamma_hat, const Eigen::MatrixXd& sigma_hat,
                                const Eigen::VectorXd& zeta, const Eigen::VectorXd& z_hat,
                                double r, double n_total, const Eigen::VectorXd& signs);

/// Treatment block of the observed-information variance.
Eigen::MatrixXd carve_variance(const Eigen::MatrixXd& sigma_hat, const Eigen::VectorXd& z_hat,
                               double r, double n_total, const Eigen::VectorXd& signs);

/// Lower bound on the per-coordinate relative variance gain over the
/// refit-only scale; always in (0, r].
double efficiency_bound(const Eigen::MatrixXd& sigma_hat, const Eigen::VectorXd& z_hat, double r,
                        double n_total, const Eigen::VectorXd& signs);

/// Exact single-covariate carved estimate under a standardized design with
/// correlation rho and an equal split between the two samples, via stable
/// normal pdf/cdf ratios.
double closed_form_carve_1d(double alpha_hat, double beta_hat, double rho, double lambda,
                            double sign, double n_total);

/// Same correction for an arbitrary subsample ratio; the equal-split form
/// above is the r = 1/2 case.
double closed_form_carve_1d_at_ratio(double alpha_hat, double beta_hat, double rho, double lambda,
                                     double sign, double n_total, double r);

/// Full pipeline for one study: pooled fit, covariance, program solve,
/// estimate, variance and bound, with the residual-variance plug-in from
/// the validation rows.
CarveFit carve_study(const CarveInput& input);

/// JSON report for a fit (alpha_carve, v_carve, v_split, efficiency_bound,
/// z_hat, newton_iters, r, n_total).
std::string carve_fit_to_json(const CarveFit& fit);
CarveFit carve_fit_from_json(const std::string& text);

}  // namespace carve
