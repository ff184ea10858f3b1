#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace carve {

// One study's raw data: response, treatment(s) and covariates with matching
// row counts. Columns are mean-centered once before any analysis; `centered`
// records that this has happened.
struct Dataset {
    Eigen::VectorXd y;   // n
    Eigen::MatrixXd d;   // n x s
    Eigen::MatrixXd x;   // n x p
    std::string study_id;
    bool centered = false;

    Eigen::Index n() const { return y.size(); }
    Eigen::Index s() const { return d.cols(); }
    Eigen::Index p() const { return x.cols(); }
};

// Model-selection metadata exported by a study: the selected covariate
// indices (strictly increasing, 0-based), the penalty weights and the signs
// of the fitted coefficients on the selected set.
struct SelectionSummary {
    std::vector<int> selected;
    Eigen::VectorXd lambda;
    Eigen::VectorXd signs;  // entries in {-1,+1}

    int q() const { return static_cast<int>(selected.size()); }
};

// First two sample moments of (treatment, selected covariates) against the
// response, scaled by 1/n. xi stacks the treatment block on top of the
// covariate block; Xi is partitioned the same way.
struct MomentSummary {
    long n = 0;          // sample count behind the moments
    Eigen::VectorXd xi;  // (s+q)
    Eigen::MatrixXd Xi;  // (s+q) x (s+q), symmetric PSD
};

// Everything that leaves a study site: selection metadata plus moments,
// together with the ambient dimensions.
struct StudySummary {
    SelectionSummary selection;
    MomentSummary moments;
    int p = 0;
    int s = 0;
    std::string study_id;
    int format_version = 1;
};

}  // namespace carve
