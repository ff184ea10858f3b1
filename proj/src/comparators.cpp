#include "carve/comparators.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "carve/errors.hpp"
#include "carve/lasso.hpp"

namespace carve {

namespace {

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = m.col(idx[static_cast<size_t>(j)]);
    return out;
}

// Least squares with the classical variance of the leading s coefficients.
void ols_with_variance(const Eigen::MatrixXd& w, const Eigen::VectorXd& y, Eigen::Index s,
                       ComparatorFit& out) {
    const Eigen::Index n = y.size();
    const Eigen::Index k = w.cols();
    if (n <= k) {
        throw DataError("insufficient sample: need more observations than regressors");
    }
    const Eigen::MatrixXd gram = w.transpose() * w;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12) {
        throw DataError("degenerate design: refit columns are collinear");
    }
    const Eigen::MatrixXd gram_inv = gram.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::VectorXd theta = gram_inv * (w.transpose() * y);
    const Eigen::VectorXd resid = y - w * theta;
    const double sigma2 = resid.squaredNorm() / static_cast<double>(n - k);
    out.alpha = theta.head(s);
    out.variance = sigma2 * gram_inv.topLeftCorner(s, s);
}

}  // namespace

ComparatorFit split_estimate(const Eigen::VectorXd& val_y, const Eigen::MatrixXd& val_d,
                             const Eigen::MatrixXd& val_x_sel, const SelectionSummary& selection) {
    const Eigen::Index n = val_y.size();
    const Eigen::Index s = val_d.cols();
    const Eigen::Index q = val_x_sel.cols();
    if (val_d.rows() != n || val_x_sel.rows() != n) throw DataError("row counts disagree");
    if (q != selection.q()) throw DataError("selection size does not match covariate columns");

    ComparatorFit out;
    out.method = ComparatorMethod::Split;
    Eigen::MatrixXd w(n, s + q);
    w << val_d, val_x_sel;
    ols_with_variance(w, val_y, s, out);
    return out;
}

ComparatorFit post_double_selection(const Dataset& data, const Eigen::VectorXd& lambda_y,
                                    const Eigen::VectorXd& lambda_d) {
    if (data.s() != 1) throw DataError("double selection is implemented for a scalar treatment");
    if (!data.centered) throw DataError("double selection requires centered data");
    if (lambda_y.size() != data.p() || lambda_d.size() != data.p()) {
        throw DataError("penalty weight length must equal p");
    }

    // Same loss scaling as the carved pipeline at r -> 1, N = n: the
    // effective threshold on the plain least-squares objective is
    // sqrt(n) * lambda.
    const double scale = std::sqrt(static_cast<double>(data.n()));
    const Eigen::MatrixXd no_treatment(data.n(), 0);

    auto fit_y = detail::lasso_coordinate_descent(data.y, data.d, data.x, scale * lambda_y,
                                                  0.5e-6 * scale, 0.5e-8 * scale);
    if (!fit_y.converged) throw SolverError("outcome lasso did not converge");
    auto fit_d = detail::lasso_coordinate_descent(data.d.col(0), no_treatment, data.x,
                                                  scale * lambda_d, 0.5e-6 * scale,
                                                  0.5e-8 * scale);
    if (!fit_d.converged) throw SolverError("treatment lasso did not converge");

    std::vector<int> sel_union;
    for (Eigen::Index j = 0; j < data.p(); ++j) {
        if (fit_y.beta[j] != 0.0 || fit_d.beta[j] != 0.0) sel_union.push_back(static_cast<int>(j));
    }

    ComparatorFit out;
    out.method = ComparatorMethod::Pds;
    out.selected_union = sel_union;
    Eigen::MatrixXd w(data.n(), 1 + static_cast<Eigen::Index>(sel_union.size()));
    w << data.d, columns(data.x, sel_union);
    ols_with_variance(w, data.y, 1, out);
    return out;
}

}  // namespace carve
