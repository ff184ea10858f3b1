#pragma once

#include <string>
#include <vector>

#include "carve/types.hpp"

namespace carve {

enum class ComparatorMethod { Split, Pds };

struct ComparatorFit {
    Eigen::VectorXd alpha;     // s
    Eigen::MatrixXd variance;  // s x s
    ComparatorMethod method = ComparatorMethod::Split;
    std::vector<int> selected_union;  // controls used (pds only)
};

/// Refit-only baseline: least squares of the validation response on the
/// treatment and the selected covariates, ignoring the existing study.
ComparatorFit split_estimate(const Eigen::VectorXd& val_y, const Eigen::MatrixXd& val_d,
                             const Eigen::MatrixXd& val_x_sel, const SelectionSummary& selection);

/// Double-selection baseline for a scalar treatment: LASSO of y on the
/// covariates (treatment unpenalized) and of d on the covariates, then
/// least squares on the union of the two supports. Penalty weights are on
/// the same scale as default_lambda evaluated at N = n.
ComparatorFit post_double_selection(const Dataset& data, const Eigen::VectorXd& lambda_y,
                                    const Eigen::VectorXd& lambda_d);

}  // namespace carve
