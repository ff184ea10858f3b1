#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace carve {

struct TruncatedMoments {
    Eigen::VectorXd mean;
    Eigen::VectorXd std_error;  // per-coordinate uncertainty of the estimate
    long accepted = 0;          // draws behind a sampled estimate, 0 for quadrature
};

enum class TruncationMethod { Auto, Integrate, Sample };

/// Mean of a Gaussian restricted to a signed orthant. `signs` holds +1/-1
/// for constrained coordinates and 0 for free ones. Dimensions up to 2 are
/// integrated with nested adaptive quadrature; dimension 3 is estimated by
/// rejection sampling with at least `min_accepted` accepted draws. The
/// method can be forced for cross-checks.
TruncatedMoments truncated_gaussian_mean_oracle(const Eigen::VectorXd& mean,
                                                const Eigen::MatrixXd& cov,
                                                const Eigen::VectorXd& signs,
                                                std::uint64_t seed = 1,
                                                TruncationMethod method = TruncationMethod::Auto,
                                                long min_accepted = 1000000);

}  // namespace carve
