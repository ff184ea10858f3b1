#include "carve/carve_engine.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "json.hpp"

#include "carve/core_model.hpp"
#include "carve/errors.hpp"
#include "carve/normal.hpp"

namespace carve {

namespace {

void check_input(const CarveInput& input) {
    const auto violations = validate_summary(input.summary);
    if (!violations.empty()) {
        std::string msg = "invalid summary for study '" + input.summary.study_id + "':";
        for (const auto& v : violations) msg += " " + v + ";";
        throw DataError(msg);
    }
    const Eigen::Index n = input.val_y.size();
    if (input.val_d.rows() != n || input.val_x_sel.rows() != n) {
        throw DataError("validation row counts disagree");
    }
    if (input.val_d.cols() != input.summary.s) {
        throw DataError("validation treatment dimension does not match summary");
    }
    if (input.val_x_sel.cols() != input.summary.selection.q()) {
        throw DataError("validation covariates must be restricted to the selected set");
    }
    if (n < 2) throw DataError("validation sample too small");

    // Columns are expected to be centered before carving.
    const double y_scale = std::sqrt(input.val_y.squaredNorm() / static_cast<double>(n));
    if (std::abs(input.val_y.mean()) > 1e-8 * (1.0 + y_scale)) {
        throw DataError("validation data must be centered");
    }
}

Eigen::MatrixXd assemble_pooled_gram(const CarveInput& input) {
    const Eigen::Index s = input.summary.s;
    const Eigen::Index q = input.summary.selection.q();
    const double nk = static_cast<double>(input.summary.moments.n);

    Eigen::MatrixXd w(input.val_y.size(), s + q);
    w << input.val_d, input.val_x_sel;
    return nk * input.summary.moments.Xi + w.transpose() * w;
}

void check_condition(const Eigen::MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12) {
        std::ostringstream msg;
        msg << "degenerate design in " << what << ": condition estimate "
            << (lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
        throw DataError(msg.str());
    }
}

Eigen::VectorXd make_zeta(const SelectionSummary& sel, Eigen::Index s) {
    Eigen::VectorXd zeta = Eigen::VectorXd::Zero(s + sel.q());
    zeta.tail(sel.q()) = sel.lambda.cwiseProduct(sel.signs);
    return zeta;
}

}  // namespace

Eigen::VectorXd pooled_ls(const CarveInput& input) {
    check_input(input);
    const Eigen::Index s = input.summary.s;
    const Eigen::Index q = input.summary.selection.q();
    const double nk = static_cast<double>(input.summary.moments.n);

    const Eigen::MatrixXd m = assemble_pooled_gram(input);
    check_condition(m, "pooled least squares");

    Eigen::MatrixXd w(input.val_y.size(), s + q);
    w << input.val_d, input.val_x_sel;
    const Eigen::VectorXd b = nk * input.summary.moments.xi + w.transpose() * input.val_y;
    return m.ldlt().solve(b);
}

Eigen::MatrixXd pooled_covariance(const CarveInput& input) {
    check_input(input);
    const double n_total = static_cast<double>(input.summary.moments.n) +
                           static_cast<double>(input.val_y.size());
    const Eigen::MatrixXd m = assemble_pooled_gram(input);
    check_condition(m, "pooled covariance");
    return m / n_total;
}

BarrierEval barrier_value_grad_hess(const Eigen::VectorXd& w, const Eigen::VectorXd& signs) {
    if (w.size() != signs.size()) throw DataError("barrier dimensions disagree");
    BarrierEval out;
    out.gradient.resize(w.size());
    out.hessian.resize(w.size());
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        const double u = signs[j] * w[j];
        if (!(u > 0.0)) {
            throw SolverError("barrier evaluated outside its domain");
        }
        out.value += std::log1p(1.0 / u);
        out.gradient[j] = -signs[j] / (u * (u + 1.0));
        out.hessian[j] = 1.0 / (u * u) - 1.0 / ((1.0 + u) * (1.0 + u));
    }
    return out;
}

CarveProgramResult solve_carve_program(const Eigen::VectorXd& gamma_hat,
                                       const Eigen::MatrixXd& sigma_hat,
                                       const Eigen::VectorXd& zeta, double r, double n_total,
                                       const Eigen::VectorXd& signs) {
    if (!(r > 0.0 && r < 1.0)) throw DataError("subsample ratio must lie in (0,1)");
    const Eigen::Index dim = gamma_hat.size();
    const Eigen::Index q = signs.size();
    const Eigen::Index s = dim - q;
    if (s < 0 || sigma_hat.rows() != dim || zeta.size() != dim) {
        throw DataError("carve program dimensions disagree");
    }

    const double kappa = r / (1.0 - r);
    const double sqrt_n = std::sqrt(n_total);
    const Eigen::LDLT<Eigen::MatrixXd> sigma_ldlt(sigma_hat);
    const Eigen::VectorXd target = sqrt_n * gamma_hat - sigma_ldlt.solve(zeta);

    // Work in w = sqrt(N) z. Start on the correct orthant, clamped away from
    // the barrier singularity.
    Eigen::VectorXd w(dim);
    w.head(s) = sqrt_n * gamma_hat.head(s);
    for (Eigen::Index j = 0; j < q; ++j) {
        const double v = signs[j] * sqrt_n * gamma_hat[s + j];
        w[s + j] = signs[j] * std::max(v, 1.0);
    }

    auto objective = [&](const Eigen::VectorXd& u) {
        const Eigen::VectorXd diff = u - target;
        const BarrierEval b = barrier_value_grad_hess(u.tail(q), signs);
        return kappa * 0.5 * diff.dot(sigma_hat * diff) + b.value;
    };
    auto feasible = [&](const Eigen::VectorXd& u) {
        for (Eigen::Index j = 0; j < q; ++j) {
            if (!(signs[j] * u[s + j] > 0.0)) return false;
        }
        return true;
    };

    CarveProgramResult res;
    double fval = objective(w);
    res.objective_trace.push_back(fval);

    const int max_iters = 100;
    for (int iter = 0; iter < max_iters; ++iter) {
        const BarrierEval b = barrier_value_grad_hess(w.tail(q), signs);
        Eigen::VectorXd grad = kappa * (sigma_hat * (w - target));
        grad.tail(q) += b.gradient;
        res.gradient_norm = grad.norm();
        if (res.gradient_norm <= 1e-9 * (1.0 + std::abs(fval))) {
            res.iterations = iter;
            res.z_hat = w / sqrt_n;
            return res;
        }

        Eigen::MatrixXd hess = kappa * sigma_hat;
        hess.diagonal().tail(q) += b.hessian;
        const Eigen::VectorXd step = hess.ldlt().solve(-grad);
        const double slope = grad.dot(step);

        double t = 1.0;
        bool accepted = false;
        for (int halvings = 0; halvings < 80; ++halvings) {
            const Eigen::VectorXd candidate = w + t * step;
            if (feasible(candidate)) {
                const double fnew = objective(candidate);
                if (fnew <= fval + 1e-4 * t * slope) {
                    w = candidate;
                    fval = fnew;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted) {
            throw SolverError("carve program line search failed", w / sqrt_n);
        }
        res.objective_trace.push_back(fval);
    }
    throw SolverError("carve program did not converge within " + std::to_string(max_iters) +
                          " Newton iterations",
                      w / sqrt_n);
}

Eigen::VectorXd carved_estimate(const Eigen::VectorXd& gamma_hat, const Eigen::MatrixXd& sigma_hat,
                                const Eigen::VectorXd& zeta, const Eigen::VectorXd& z_hat,
                                double r, double n_total, const Eigen::VectorXd& signs) {
    const Eigen::Index s = gamma_hat.size() - signs.size();
    if (s < 1) throw DataError("carved estimate requires at least one treatment coordinate");
    const double kappa = r / (1.0 - r);
    const Eigen::VectorXd sigma_inv_zeta = sigma_hat.ldlt().solve(zeta);
    return gamma_hat.head(s) +
           kappa * (gamma_hat.head(s) - sigma_inv_zeta.head(s) / std::sqrt(n_total) -
                    z_hat.head(s));
}

Eigen::MatrixXd carve_variance(const Eigen::MatrixXd& sigma_hat, const Eigen::VectorXd& z_hat,
                               double r, double n_total, const Eigen::VectorXd& signs) {
    const Eigen::Index dim = sigma_hat.rows();
    const Eigen::Index q = signs.size();
    const Eigen::Index s = dim - q;
    if (s < 1) throw DataError("variance requires at least one treatment coordinate");

    const double sqrt_n = std::sqrt(n_total);
    Eigen::VectorXd curvature = Eigen::VectorXd::Zero(dim);
    if (q > 0) {
        const BarrierEval b = barrier_value_grad_hess(sqrt_n * z_hat.tail(q), signs);
        curvature.tail(q) = b.hessian;
    }

    const double inv_1mr = 1.0 / (1.0 - r);
    Eigen::MatrixXd inner = inv_1mr * r * sigma_hat;
    inner.diagonal() += curvature;

    const Eigen::MatrixXd sigma_inv = sigma_hat.ldlt().solve(Eigen::MatrixXd::Identity(dim, dim));
    const Eigen::MatrixXd inner_inv = inner.ldlt().solve(Eigen::MatrixXd::Identity(dim, dim));
    if (!inner_inv.allFinite()) {
        throw SolverError("variance inner matrix solve failed");
    }
    const Eigen::MatrixXd full = inv_1mr * sigma_inv - inv_1mr * inv_1mr * r * r * inner_inv;
    return full.topLeftCorner(s, s);
}

double efficiency_bound(const Eigen::MatrixXd& sigma_hat, const Eigen::VectorXd& z_hat, double r,
                        double n_total, const Eigen::VectorXd& signs) {
    const Eigen::Index q = signs.size();
    double b_max = 0.0;
    if (q > 0) {
        const BarrierEval b =
            barrier_value_grad_hess(std::sqrt(n_total) * z_hat.tail(q), signs);
        b_max = b.hessian.maxCoeff();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_hat, Eigen::EigenvaluesOnly);
    const double lambda_min = eig.eigenvalues().minCoeff();
    const double inv_1mr = 1.0 / (1.0 - r);
    return inv_1mr * r * r / (inv_1mr * r + b_max / lambda_min);
}

double closed_form_carve_1d_at_ratio(double alpha_hat, double beta_hat, double rho, double lambda,
                                     double sign, double n_total, double r) {
    if (!(std::abs(rho) < 1.0)) throw DataError("correlation must lie in (-1,1)");
    if (!(lambda > 0.0)) throw DataError("penalty must be positive");
    if (sign != 1.0 && sign != -1.0) throw DataError("sign must be +1 or -1");
    if (!(r > 0.0 && r < 1.0)) throw DataError("subsample ratio must lie in (0,1)");
    if (rho == 0.0) return alpha_hat;

    const double c = 1.0 - rho * rho;
    const double sqrt_c = std::sqrt(c);
    const double sqrt_n = std::sqrt(n_total);
    const double ratio = std::sqrt(r / (1.0 - r));
    if (sign > 0.0) {
        const double t = ratio * (lambda - c * sqrt_n * beta_hat) / sqrt_c;
        return alpha_hat + ratio * (rho / (sqrt_c * sqrt_n)) * normal::mills(t);
    }
    const double t = ratio * (lambda + c * sqrt_n * beta_hat) / sqrt_c;
    return alpha_hat - ratio * (rho / (sqrt_c * sqrt_n)) * normal::mills(t);
}

double closed_form_carve_1d(double alpha_hat, double beta_hat, double rho, double lambda,
                            double sign, double n_total) {
    return closed_form_carve_1d_at_ratio(alpha_hat, beta_hat, rho, lambda, sign, n_total, 0.5);
}

CarveFit carve_study(const CarveInput& input) {
    check_input(input);
    const Eigen::Index s = input.summary.s;
    const Eigen::Index q = input.summary.selection.q();
    const Eigen::Index n_val = input.val_y.size();
    const double n_total =
        static_cast<double>(input.summary.moments.n) + static_cast<double>(n_val);
    const double r = static_cast<double>(input.summary.moments.n) / n_total;

    CarveFit fit;
    fit.study_id = input.summary.study_id;
    fit.q = static_cast<int>(q);
    fit.r = r;
    fit.n_total = n_total;

    fit.gamma_hat = pooled_ls(input);
    fit.sigma_hat = pooled_covariance(input);
    fit.zeta = make_zeta(input.summary.selection, s);

    auto program = solve_carve_program(fit.gamma_hat, fit.sigma_hat, fit.zeta, r, n_total,
                                       input.summary.selection.signs);
    fit.z_hat = program.z_hat;
    fit.newton_iters = program.iterations;
    fit.newton_objectives = std::move(program.objective_trace);

    fit.alpha_carve = carved_estimate(fit.gamma_hat, fit.sigma_hat, fit.zeta, fit.z_hat, r,
                                      n_total, input.summary.selection.signs);

    fit.v_carve =
        carve_variance(fit.sigma_hat, fit.z_hat, r, n_total, input.summary.selection.signs);
    const Eigen::MatrixXd sigma_inv =
        fit.sigma_hat.ldlt().solve(Eigen::MatrixXd::Identity(s + q, s + q));
    fit.v_split = (1.0 / (1.0 - r)) * sigma_inv.topLeftCorner(s, s);
    fit.efficiency_bound =
        efficiency_bound(fit.sigma_hat, fit.z_hat, r, n_total, input.summary.selection.signs);

    // Residual-variance plug-in from the validation rows; the theory is
    // derived at unit noise, so both variance reports get rescaled.
    const Eigen::Index df = n_val - s - q;
    if (df < 1) {
        throw DataError("validation sample too small for a residual variance estimate");
    }
    Eigen::MatrixXd w(n_val, s + q);
    w << input.val_d, input.val_x_sel;
    const Eigen::VectorXd resid = input.val_y - w * fit.gamma_hat;
    fit.sigma2_scale = resid.squaredNorm() / static_cast<double>(df);
    fit.v_carve *= fit.sigma2_scale;
    fit.v_split *= fit.sigma2_scale;
    return fit;
}

namespace {

nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
    }
    return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
    return v;
}

}  // namespace

std::string carve_fit_to_json(const CarveFit& fit) {
    nlohmann::ordered_json j;
    j["study_id"] = fit.study_id;
    j["alpha_carve"] = std::vector<double>(fit.alpha_carve.data(),
                                           fit.alpha_carve.data() + fit.alpha_carve.size());
    j["v_carve"] = matrix_to_json(fit.v_carve);
    j["v_split"] = matrix_to_json(fit.v_split);
    j["efficiency_bound"] = fit.efficiency_bound;
    j["z_hat"] = std::vector<double>(fit.z_hat.data(), fit.z_hat.data() + fit.z_hat.size());
    j["newton_iters"] = fit.newton_iters;
    j["r"] = fit.r;
    j["n_total"] = fit.n_total;
    return j.dump(2) + "\n";
}

CarveFit carve_fit_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("cannot parse fit report: ") + e.what());
    }
    CarveFit fit;
    try {
        fit.study_id = j.value("study_id", std::string());
        fit.alpha_carve = vector_from_json(j.at("alpha_carve"));
        fit.v_carve = matrix_from_json(j.at("v_carve"));
        fit.v_split = matrix_from_json(j.at("v_split"));
        fit.efficiency_bound = j.at("efficiency_bound").get<double>();
        fit.z_hat = vector_from_json(j.at("z_hat"));
        fit.newton_iters = j.at("newton_iters").get<int>();
        fit.r = j.at("r").get<double>();
        fit.n_total = j.at("n_total").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("fit report missing fields: ") + e.what());
    }
    return fit;
}

}  // namespace carve
