#pragma once

#include <utility>

#include "carve/types.hpp"

namespace carve {

// Solution of the scaled, weight-penalized LASSO
//   (1 / (2 r sqrt(N))) ||y - d*alpha - x*beta||^2 + ||lambda .* beta||_1
// with the treatment block left unpenalized.
struct LassoFit {
    Eigen::VectorXd alpha_l;  // s, treatment coefficients
    Eigen::VectorXd beta_l;   // p, exact zeros off the support
    Eigen::VectorXd lambda;   // p, weights the fit was computed under
    double r = 0.0;           // subsample ratio n / N
    double n_total = 0.0;     // N
    double objective = 0.0;   // value at the solution, on the scaled loss
    int sweeps = 0;
    bool converged = false;
};

// Randomization diagnostics: the gradient gap between the combined-data
// objective and the rescaled single-study objective at the LASSO solution,
// plus the inactive-block statistics that reconstruct it algebraically.
struct RandomizationDiag {
    Eigen::VectorXd omega;          // s + p, treatment block first
    Eigen::VectorXd gamma_hat_gap;  // p - q, unselected-covariate statistic
    Eigen::VectorXd subgradient;    // p - q, inactive subgradient, max-norm <= 1
};

/// Flat penalty weights c * sqrt(N) * sigma * sqrt(2 log(p) / n), sized so
/// that the effective threshold on the unscaled least-squares objective is
/// the usual sigma * sqrt(2 n log p).
Eigen::VectorXd default_lambda(long n, long p, double sigma, long n_total, double c);

/// Cyclic coordinate descent with exact unpenalized sweeps on the treatment
/// block. Entries of lambda must be nonnegative; 0 < r < 1 and N >= n.
LassoFit fit_weighted_lasso(const Dataset& data, const Eigen::VectorXd& lambda, double r,
                            double n_total);

/// Support, signs and penalty weights of the fitted coefficient vector.
SelectionSummary extract_selection(const LassoFit& fit, const Eigen::VectorXd& lambda);

/// Stationarity residual over the active set and treatment block (first),
/// and the clipped subgradient excess over the inactive set (second).
std::pair<double, double> kkt_residual(const LassoFit& fit, const Dataset& data,
                                       const Eigen::VectorXd& lambda, double r, double n_total);

/// Randomization variable and companions, computed from the defining
/// gradient gap. The validation data must carry all p covariate columns.
RandomizationDiag randomization_omega(const Dataset& existing, const Dataset& validation,
                                      const LassoFit& fit);

/// Rebuilds omega through the stationarity block identity from the pooled
/// estimate, the gap statistic and the inactive subgradient. Agrees with the
/// direct gradient computation up to floating-point error.
Eigen::VectorXd reconstruct_omega_kkt(const Dataset& existing, const Dataset& validation,
                                      const LassoFit& fit, const RandomizationDiag& diag);

/// Residual scale estimate with degrees-of-freedom correction by support
/// size, for penalty levels on real data where sigma is unknown.
double estimate_sigma(const Dataset& data, const LassoFit& fit);

namespace detail {

// Core solver on the unscaled objective 0.5 ||y - d a - x b||^2 + sum t_j |b_j|.
// d may have zero columns. Shared by the LASSO front end and the comparators.
struct CdResult {
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;
    int sweeps = 0;
    bool converged = false;
};

// tol_active / tol_inactive are stationarity tolerances on the unscaled
// objective, checked against freshly computed gradients before accepting.
CdResult lasso_coordinate_descent(const Eigen::VectorXd& y, const Eigen::MatrixXd& d,
                                  const Eigen::MatrixXd& x, const Eigen::VectorXd& thresholds,
                                  double tol_active, double tol_inactive, int max_sweeps = 10000);

}  // namespace detail

}  // namespace carve
