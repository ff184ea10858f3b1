#include "carve/lasso.hpp"

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carve/errors.hpp"

namespace carve {

namespace {

double soft_threshold(double g, double t) {
    if (g > t) return g - t;
    if (g < -t) return g + t;
    return 0.0;
}

Eigen::LLT<Eigen::MatrixXd> factor_treatment_gram(const Eigen::MatrixXd& gdd) {
    if (gdd.rows() > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gdd, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > 1e12) {
            throw DataError("degenerate design: treatment block is rank deficient");
        }
    }
    return Eigen::LLT<Eigen::MatrixXd>(gdd);
}

std::vector<int> complement_of(const std::vector<int>& selected, int p) {
    std::vector<int> out;
    size_t k = 0;
    for (int j = 0; j < p; ++j) {
        if (k < selected.size() && selected[k] == j) {
            ++k;
        } else {
            out.push_back(j);
        }
    }
    return out;
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = m.col(idx[static_cast<size_t>(j)]);
    return out;
}

std::vector<int> support_of(const Eigen::VectorXd& beta) {
    std::vector<int> out;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        if (beta[j] != 0.0) out.push_back(static_cast<int>(j));
    }
    return out;
}

// Selected-model least squares on the combined existing + validation rows.
Eigen::VectorXd pooled_gamma(const Eigen::MatrixXd& wk, const Eigen::VectorXd& yk,
                             const Eigen::MatrixXd& wv, const Eigen::VectorXd& yv) {
    const Eigen::MatrixXd m = wk.transpose() * wk + wv.transpose() * wv;
    const Eigen::VectorXd b = wk.transpose() * yk + wv.transpose() * yv;
    return m.ldlt().solve(b);
}

}  // namespace

namespace detail {

// Cyclic descent with exact least-squares sweeps on the unpenalized block.
// Below the Gram cutoff all cross products are cached and the coordinate
// gradients are maintained incrementally; otherwise the residual is carried.
// A sweep whose largest coefficient move falls under 1e-10 * (1 + |coef|)
// triggers a stationarity check on freshly computed gradients, which also
// resets any incremental rounding before further sweeps.
CdResult lasso_coordinate_descent(const Eigen::VectorXd& y, const Eigen::MatrixXd& d,
                                  const Eigen::MatrixXd& x, const Eigen::VectorXd& thresholds,
                                  double tol_active, double tol_inactive, int max_sweeps) {
    const Eigen::Index s = d.cols();
    const Eigen::Index p = x.cols();
    const bool use_gram = p <= 2000;
    const double delta_tol = 1e-10;

    CdResult res;
    res.alpha = Eigen::VectorXd::Zero(s);
    res.beta = Eigen::VectorXd::Zero(p);

    const Eigen::MatrixXd gdd = d.transpose() * d;
    const auto gdd_llt = factor_treatment_gram(gdd);

    Eigen::MatrixXd gxx, gxd;
    Eigen::VectorXd xty, dty, grad_x;  // grad_x = x'(y - d a - x b), Gram path
    Eigen::VectorXd xsq(p);
    Eigen::VectorXd resid;  // residual path
    dty = d.transpose() * y;
    if (use_gram) {
        gxx = x.transpose() * x;
        gxd = x.transpose() * d;
        xty = x.transpose() * y;
        grad_x = xty;
        xsq = gxx.diagonal();
    } else {
        resid = y;
        for (Eigen::Index j = 0; j < p; ++j) xsq[j] = x.col(j).squaredNorm();
    }

    auto refresh = [&]() {
        if (use_gram) {
            grad_x = xty - gxd * res.alpha - gxx * res.beta;
        } else {
            resid = y - d * res.alpha - x * res.beta;
        }
    };

    auto stationary = [&]() {
        refresh();
        const Eigen::VectorXd gx = use_gram ? grad_x : Eigen::VectorXd(x.transpose() * resid);
        if (s > 0) {
            const Eigen::VectorXd gd =
                use_gram ? Eigen::VectorXd(dty - gdd * res.alpha - gxd.transpose() * res.beta)
                         : Eigen::VectorXd(d.transpose() * resid);
            if (gd.cwiseAbs().maxCoeff() > tol_active) return false;
        }
        for (Eigen::Index j = 0; j < p; ++j) {
            if (res.beta[j] != 0.0) {
                const double sign = res.beta[j] > 0.0 ? 1.0 : -1.0;
                if (std::abs(gx[j] - thresholds[j] * sign) > tol_active) return false;
            } else if (std::abs(gx[j]) - thresholds[j] > tol_inactive) {
                return false;
            }
        }
        return true;
    };

    int sweeps = 0;
    while (sweeps < max_sweeps) {
        double max_delta = 0.0;

        if (s > 0) {
            const Eigen::VectorXd target =
                use_gram ? Eigen::VectorXd(dty - gxd.transpose() * res.beta)
                         : Eigen::VectorXd(d.transpose() * (resid + d * res.alpha));
            const Eigen::VectorXd alpha_new = gdd_llt.solve(target);
            const Eigen::VectorXd delta = alpha_new - res.alpha;
            const double step = delta.cwiseAbs().maxCoeff();
            if (step > 0.0) {
                if (use_gram) {
                    grad_x -= gxd * delta;
                } else {
                    resid -= d * delta;
                }
                res.alpha = alpha_new;
                max_delta = step;
            }
        }

        for (Eigen::Index j = 0; j < p; ++j) {
            if (xsq[j] <= 0.0) continue;  // constant column, centered away
            const double gj = use_gram ? grad_x[j] + xsq[j] * res.beta[j]
                                       : x.col(j).dot(resid) + xsq[j] * res.beta[j];
            const double bj = soft_threshold(gj, thresholds[j]) / xsq[j];
            const double delta = bj - res.beta[j];
            if (delta != 0.0) {
                if (use_gram) {
                    grad_x -= gxx.col(j) * delta;
                } else {
                    resid -= x.col(j) * delta;
                }
                res.beta[j] = bj;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        ++sweeps;
        if ((sweeps & 63) == 0) refresh();

        double max_coef = s > 0 ? res.alpha.cwiseAbs().maxCoeff() : 0.0;
        if (p > 0) max_coef = std::max(max_coef, res.beta.cwiseAbs().maxCoeff());
        if (max_delta <= delta_tol * (1.0 + max_coef) && stationary()) {
            res.converged = true;
            break;
        }
    }
    res.sweeps = sweeps;
    return res;
}

}  // namespace detail

Eigen::VectorXd default_lambda(long n, long p, double sigma, long n_total, double c) {
    if (p <= 1) throw DataError("default penalty requires p > 1");
    if (!(sigma > 0.0)) throw DataError("default penalty requires sigma > 0");
    if (n < 1 || n_total < 1) throw DataError("default penalty requires positive sample counts");
    if (c < 0.0) throw DataError("penalty multiplier must be nonnegative");
    const double level = c * std::sqrt(static_cast<double>(n_total)) * sigma *
                         std::sqrt(2.0 * std::log(static_cast<double>(p)) / static_cast<double>(n));
    return Eigen::VectorXd::Constant(p, level);
}

LassoFit fit_weighted_lasso(const Dataset& data, const Eigen::VectorXd& lambda, double r,
                            double n_total) {
    if (!data.centered) throw DataError("lasso requires centered data");
    if (lambda.size() != data.p()) throw DataError("penalty weight length must equal p");
    if ((lambda.array() < 0.0).any() || !lambda.allFinite()) {
        throw DataError("penalty weights must be nonnegative and finite");
    }
    if (!(r > 0.0 && r < 1.0)) throw DataError("subsample ratio must lie in (0,1)");
    if (n_total < static_cast<double>(data.n())) throw DataError("N must be at least n");

    const double scale = r * std::sqrt(n_total);
    auto cd = detail::lasso_coordinate_descent(data.y, data.d, data.x, scale * lambda,
                                               0.5e-6 * scale, 0.5e-8 * scale);

    LassoFit fit;
    fit.alpha_l = cd.alpha;
    fit.beta_l = cd.beta;
    fit.lambda = lambda;
    fit.r = r;
    fit.n_total = n_total;
    fit.sweeps = cd.sweeps;
    fit.converged = cd.converged;

    const Eigen::VectorXd resid = data.y - data.d * cd.alpha - data.x * cd.beta;
    fit.objective = 0.5 * resid.squaredNorm() / scale + lambda.dot(cd.beta.cwiseAbs());

    if (!cd.converged) {
        Eigen::VectorXd iterate(cd.alpha.size() + cd.beta.size());
        iterate << cd.alpha, cd.beta;
        throw SolverError("lasso coordinate descent did not converge within " +
                              std::to_string(cd.sweeps) + " sweeps",
                          iterate);
    }
    return fit;
}

SelectionSummary extract_selection(const LassoFit& fit, const Eigen::VectorXd& lambda) {
    SelectionSummary sel;
    sel.selected = support_of(fit.beta_l);
    const Eigen::Index q = static_cast<Eigen::Index>(sel.selected.size());
    sel.lambda.resize(q);
    sel.signs.resize(q);
    for (Eigen::Index k = 0; k < q; ++k) {
        const int j = sel.selected[static_cast<size_t>(k)];
        sel.lambda[k] = lambda[j];
        sel.signs[k] = fit.beta_l[j] > 0.0 ? 1.0 : -1.0;
    }
    return sel;
}

std::pair<double, double> kkt_residual(const LassoFit& fit, const Dataset& data,
                                       const Eigen::VectorXd& lambda, double r, double n_total) {
    const double inv_scale = 1.0 / (r * std::sqrt(n_total));
    const Eigen::VectorXd resid = data.y - data.d * fit.alpha_l - data.x * fit.beta_l;
    const Eigen::VectorXd gd = inv_scale * (data.d.transpose() * resid);
    const Eigen::VectorXd gx = inv_scale * (data.x.transpose() * resid);

    double active = gd.size() > 0 ? gd.cwiseAbs().maxCoeff() : 0.0;
    double inactive = 0.0;
    for (Eigen::Index j = 0; j < fit.beta_l.size(); ++j) {
        if (fit.beta_l[j] != 0.0) {
            const double sign = fit.beta_l[j] > 0.0 ? 1.0 : -1.0;
            active = std::max(active, std::abs(gx[j] - lambda[j] * sign));
        } else {
            inactive = std::max(inactive, std::abs(gx[j]) - lambda[j]);
        }
    }
    return {active, std::max(inactive, 0.0)};
}

RandomizationDiag randomization_omega(const Dataset& existing, const Dataset& validation,
                                      const LassoFit& fit) {
    if (validation.p() != existing.p()) {
        throw DataError(
            "randomization diagnostic unavailable: validation data must carry all covariate "
            "columns of the existing study");
    }
    if (validation.s() != existing.s()) throw DataError("treatment dimension mismatch");
    if (!existing.centered || !validation.centered) throw DataError("data must be centered");

    const double r = fit.r;
    const double sqrt_n = std::sqrt(fit.n_total);
    const Eigen::Index s = existing.s();
    const Eigen::Index p = existing.p();

    const Eigen::VectorXd resid_k =
        existing.y - existing.d * fit.alpha_l - existing.x * fit.beta_l;
    const Eigen::VectorXd resid_v =
        validation.y - validation.d * fit.alpha_l - validation.x * fit.beta_l;

    RandomizationDiag diag;
    diag.omega.resize(s + p);
    diag.omega.head(s) = ((1.0 - r) / (r * sqrt_n)) * (existing.d.transpose() * resid_k) -
                         (1.0 / sqrt_n) * (validation.d.transpose() * resid_v);
    diag.omega.tail(p) = ((1.0 - r) / (r * sqrt_n)) * (existing.x.transpose() * resid_k) -
                         (1.0 / sqrt_n) * (validation.x.transpose() * resid_v);

    const auto selected = support_of(fit.beta_l);
    const auto inactive = complement_of(selected, static_cast<int>(p));

    Eigen::MatrixXd wk(existing.n(), s + static_cast<Eigen::Index>(selected.size()));
    wk << existing.d, columns(existing.x, selected);
    Eigen::MatrixXd wv(validation.n(), wk.cols());
    wv << validation.d, columns(validation.x, selected);
    const Eigen::VectorXd gamma = pooled_gamma(wk, existing.y, wv, validation.y);

    const Eigen::MatrixXd uk = columns(existing.x, inactive);
    const Eigen::MatrixXd uv = columns(validation.x, inactive);
    diag.gamma_hat_gap = (uk.transpose() * (existing.y - wk * gamma) +
                          uv.transpose() * (validation.y - wv * gamma)) /
                         fit.n_total;

    diag.subgradient.resize(static_cast<Eigen::Index>(inactive.size()));
    const Eigen::VectorXd gx = existing.x.transpose() * resid_k;
    for (size_t k = 0; k < inactive.size(); ++k) {
        const int j = inactive[k];
        if (!(fit.lambda[j] > 0.0)) {
            throw DataError("randomization diagnostic requires positive inactive penalties");
        }
        diag.subgradient[static_cast<Eigen::Index>(k)] = gx[j] / (fit.lambda[j] * r * sqrt_n);
    }
    return diag;
}

Eigen::VectorXd reconstruct_omega_kkt(const Dataset& existing, const Dataset& validation,
                                      const LassoFit& fit, const RandomizationDiag& diag) {
    const Eigen::Index s = existing.s();
    const Eigen::Index p = existing.p();
    const double sqrt_n = std::sqrt(fit.n_total);

    const auto selected = support_of(fit.beta_l);
    const auto inactive = complement_of(selected, static_cast<int>(p));
    const Eigen::Index q = static_cast<Eigen::Index>(selected.size());

    Eigen::MatrixXd wk(existing.n(), s + q);
    wk << existing.d, columns(existing.x, selected);
    Eigen::MatrixXd wv(validation.n(), s + q);
    wv << validation.d, columns(validation.x, selected);
    const Eigen::MatrixXd uk = columns(existing.x, inactive);
    const Eigen::MatrixXd uv = columns(validation.x, inactive);

    const Eigen::MatrixXd sigma = (wk.transpose() * wk + wv.transpose() * wv) / fit.n_total;
    const Eigen::MatrixXd sigma_off = (uk.transpose() * wk + uv.transpose() * wv) / fit.n_total;
    const Eigen::VectorXd gamma = pooled_gamma(wk, existing.y, wv, validation.y);

    Eigen::VectorXd gamma_lasso(s + q);
    gamma_lasso.head(s) = fit.alpha_l;
    for (Eigen::Index k = 0; k < q; ++k) {
        gamma_lasso[s + k] = fit.beta_l[selected[static_cast<size_t>(k)]];
    }

    Eigen::VectorXd zeta = Eigen::VectorXd::Zero(s + q);
    for (Eigen::Index k = 0; k < q; ++k) {
        const int j = selected[static_cast<size_t>(k)];
        zeta[s + k] = fit.lambda[j] * (fit.beta_l[j] > 0.0 ? 1.0 : -1.0);
    }

    const Eigen::VectorXd shift = sqrt_n * (gamma_lasso - gamma);
    const Eigen::VectorXd omega_sel = sigma * shift + zeta;

    Eigen::VectorXd lambda_z(static_cast<Eigen::Index>(inactive.size()));
    for (size_t k = 0; k < inactive.size(); ++k) {
        lambda_z[static_cast<Eigen::Index>(k)] =
            fit.lambda[inactive[k]] * diag.subgradient[static_cast<Eigen::Index>(k)];
    }
    const Eigen::VectorXd omega_inact =
        sigma_off * shift - sqrt_n * diag.gamma_hat_gap + lambda_z;

    Eigen::VectorXd omega(s + p);
    omega.head(s) = omega_sel.head(s);
    for (Eigen::Index k = 0; k < q; ++k) {
        omega[s + selected[static_cast<size_t>(k)]] = omega_sel[s + k];
    }
    for (size_t k = 0; k < inactive.size(); ++k) {
        omega[s + inactive[k]] = omega_inact[static_cast<Eigen::Index>(k)];
    }
    return omega;
}

double estimate_sigma(const Dataset& data, const LassoFit& fit) {
    const Eigen::Index q = (fit.beta_l.array() != 0.0).count();
    const Eigen::Index df = data.n() - data.s() - q;
    if (df < 1) throw DataError("not enough observations for a residual scale estimate");
    const Eigen::VectorXd resid = data.y - data.d * fit.alpha_l - data.x * fit.beta_l;
    return std::sqrt(resid.squaredNorm() / static_cast<double>(df));
}

}  // namespace carve
