#include "carve/core_model.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "carve/errors.hpp"

namespace carve {

Dataset center_columns(const Dataset& data) {
    if (data.n() < 2) {
        throw DataError("degenerate sample: centering requires at least 2 observations, got " +
                        std::to_string(data.n()));
    }
    if (data.d.rows() != data.n() || data.x.rows() != data.n()) {
        throw DataError("row count mismatch between y, d and x");
    }
    if (data.s() < 1) {
        throw DataError("at least one treatment column is required");
    }
    Dataset out = data;
    out.y.array() -= out.y.mean();
    out.d.rowwise() -= out.d.colwise().mean();
    out.x.rowwise() -= out.x.colwise().mean();
    out.centered = true;
    return out;
}

namespace {

void check_model_indices(const Dataset& data, const std::vector<int>& model) {
    int prev = -1;
    for (int j : model) {
        if (j < 0 || j >= data.p()) {
            throw DataError("invalid selection: covariate index " + std::to_string(j) +
                            " out of range for p = " + std::to_string(data.p()));
        }
        if (j <= prev) {
            throw DataError("invalid selection: indices must be strictly increasing");
        }
        prev = j;
    }
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = m.col(idx[static_cast<size_t>(j)]);
    return out;
}

}  // namespace

MomentSummary compute_moment_summary(const Dataset& data, const std::vector<int>& model) {
    if (!data.centered) {
        throw DataError("moments must be computed from centered data");
    }
    check_model_indices(data, model);

    const Eigen::Index s = data.s();
    const Eigen::Index q = static_cast<Eigen::Index>(model.size());
    const double inv_n = 1.0 / static_cast<double>(data.n());
    const Eigen::MatrixXd xe = select_columns(data.x, model);

    MomentSummary out;
    out.n = static_cast<long>(data.n());
    out.xi.resize(s + q);
    out.xi.head(s) = inv_n * (data.d.transpose() * data.y);
    out.xi.tail(q) = inv_n * (xe.transpose() * data.y);

    out.Xi.resize(s + q, s + q);
    out.Xi.topLeftCorner(s, s) = inv_n * (data.d.transpose() * data.d);
    out.Xi.topRightCorner(s, q) = inv_n * (data.d.transpose() * xe);
    out.Xi.bottomLeftCorner(q, s) = out.Xi.topRightCorner(s, q).transpose();
    out.Xi.bottomRightCorner(q, q) = inv_n * (xe.transpose() * xe);
    return out;
}

MomentSummary compute_moment_summary(const Dataset& data, const SelectionSummary& selection) {
    return compute_moment_summary(data, selection.selected);
}

std::vector<std::string> validate_summary(const StudySummary& summary) {
    std::vector<std::string> violations;
    const auto& sel = summary.selection;
    const auto& mom = summary.moments;
    const int q = sel.q();

    if (summary.s < 1) violations.push_back("s must be at least 1");
    if (summary.p < 0) violations.push_back("p must be nonnegative");
    if (mom.n < 1) violations.push_back("moment sample count must be at least 1");

    int prev = -1;
    for (int j : sel.selected) {
        if (j < 0 || j >= summary.p) {
            violations.push_back("selected index out of range");
            break;
        }
        if (j <= prev) {
            violations.push_back("selected indices must be strictly increasing");
            break;
        }
        prev = j;
    }
    if (sel.lambda.size() != q) violations.push_back("lambda length must match selection size");
    if (sel.signs.size() != q) violations.push_back("signs length must match selection size");
    for (Eigen::Index j = 0; j < sel.lambda.size(); ++j) {
        if (!(sel.lambda[j] > 0.0)) {
            violations.push_back("penalty weights must be positive");
            break;
        }
    }
    for (Eigen::Index j = 0; j < sel.signs.size(); ++j) {
        if (sel.signs[j] != 1.0 && sel.signs[j] != -1.0) {
            violations.push_back("signs must be \xc2\xb1" "1");
            break;
        }
    }

    const Eigen::Index dim = summary.s + q;
    if (mom.xi.size() != dim || mom.Xi.rows() != dim || mom.Xi.cols() != dim) {
        violations.push_back("moments dimension must equal s + selection size");
        return violations;  // remaining checks assume consistent shapes
    }
    if (!mom.xi.allFinite() || !mom.Xi.allFinite() || !sel.lambda.allFinite()) {
        violations.push_back("summary contains non-finite values");
        return violations;
    }
    if (dim > 0) {
        const double scale = mom.Xi.cwiseAbs().maxCoeff();
        const double asym = (mom.Xi - mom.Xi.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-12 * scale) violations.push_back("Xi not symmetric");

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
            0.5 * (mom.Xi + mom.Xi.transpose()), Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(mom.Xi.trace(), 0.0)) {
            violations.push_back("Xi not positive semidefinite");
        }
    }
    return violations;
}

StudySummary make_study_summary(const Dataset& data, const SelectionSummary& selection) {
    StudySummary out;
    out.selection = selection;
    out.moments = compute_moment_summary(data, selection);
    out.p = static_cast<int>(data.p());
    out.s = static_cast<int>(data.s());
    out.study_id = data.study_id;
    out.format_version = 1;
    return out;
}

StudySite::StudySite(Dataset data, SelectionSummary selection) {
    if (!data.centered) data = center_columns(data);
    summary_ = make_study_summary(data, selection);
    raw_ = std::move(data);
}

StudySite::StudySite(StudySummary summary) : summary_(std::move(summary)) {}

MomentSummary StudySite::moments_for(const std::vector<int>& model) const {
    if (raw_) return compute_moment_summary(*raw_, model);
    if (model == summary_.selection.selected) return summary_.moments;
    throw CapabilityError("site '" + summary_.study_id +
                          "' retained only summary statistics for its selected model and "
                          "cannot serve moments for a different model");
}

}  // namespace carve
