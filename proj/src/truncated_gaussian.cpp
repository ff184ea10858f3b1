#include "carve/truncated_gaussian.hpp"

#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "carve/errors.hpp"
#include "carve/rng.hpp"

namespace carve {

namespace {

using VecFn = std::function<Eigen::VectorXd(double)>;

Eigen::VectorXd simpson(const VecFn& f, double a, double b, const Eigen::VectorXd& fa,
                        const Eigen::VectorXd& fm, const Eigen::VectorXd& fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

void adaptive_simpson_rec(const VecFn& f, double a, double b, const Eigen::VectorXd& fa,
                          const Eigen::VectorXd& fm, const Eigen::VectorXd& fb,
                          const Eigen::VectorXd& whole, double tol, int depth,
                          Eigen::VectorXd& acc) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const Eigen::VectorXd flm = f(lm);
    const Eigen::VectorXd frm = f(rm);
    const Eigen::VectorXd left = simpson(f, a, m, fa, flm, fm);
    const Eigen::VectorXd right = simpson(f, m, b, fm, frm, fb);
    const Eigen::VectorXd err = left + right - whole;
    if (depth <= 0 || err.cwiseAbs().maxCoeff() <= 15.0 * tol) {
        acc += left + right + err / 15.0;
        return;
    }
    adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1, acc);
    adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1, acc);
}

Eigen::VectorXd adaptive_simpson(const VecFn& f, double a, double b, double tol, int dim_out) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim_out);
    if (!(b > a)) return acc;
    const Eigen::VectorXd fa = f(a);
    const Eigen::VectorXd fb = f(b);
    const Eigen::VectorXd fm = f(0.5 * (a + b));
    adaptive_simpson_rec(f, a, b, fa, fm, fb, simpson(f, a, b, fa, fm, fb), tol, 44, acc);
    return acc;
}

struct Range {
    double lo, hi;
};

Range coordinate_range(double mu, double sd, double sign) {
    const double span = 13.5 * sd;
    if (sign > 0.0) return {std::max(0.0, mu - span), std::max(mu, 0.0) + span};
    if (sign < 0.0) return {std::min(mu, 0.0) - span, std::min(0.0, mu + span)};
    return {mu - span, mu + span};
}

TruncatedMoments integrate_truncated(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                     const Eigen::VectorXd& signs) {
    const Eigen::Index d = mean.size();
    const Eigen::MatrixXd prec = cov.inverse();

    std::vector<Range> ranges;
    for (Eigen::Index i = 0; i < d; ++i) {
        ranges.push_back(coordinate_range(mean[i], std::sqrt(cov(i, i)), signs[i]));
    }

    // Scale of the unnormalized density over the region, for tolerance
    // anchoring: evaluated at the region-clamped mean.
    Eigen::VectorXd probe = mean;
    for (Eigen::Index i = 0; i < d; ++i) {
        probe[i] = std::min(std::max(probe[i], ranges[static_cast<size_t>(i)].lo),
                            ranges[static_cast<size_t>(i)].hi);
        if (signs[i] > 0.0) probe[i] = std::max(probe[i], 1e-8 * std::sqrt(cov(i, i)));
        if (signs[i] < 0.0) probe[i] = std::min(probe[i], -1e-8 * std::sqrt(cov(i, i)));
    }
    auto density = [&](const Eigen::VectorXd& w) {
        const Eigen::VectorXd diff = w - mean;
        return std::exp(-0.5 * diff.dot(prec * diff));
    };
    const double peak = std::max(density(probe), 1e-300);

    Eigen::VectorXd integral;
    if (d == 1) {
        auto f = [&](double w0) {
            Eigen::VectorXd v(2);
            const double g = density(Eigen::VectorXd::Constant(1, w0));
            v << g, g * w0;
            return v;
        };
        const auto& r0 = ranges[0];
        integral = adaptive_simpson(f, r0.lo, r0.hi, peak * (r0.hi - r0.lo) * 1e-13, 2);
    } else {
        const auto& r0 = ranges[0];
        const auto& r1 = ranges[1];
        const double tol_inner = peak * (r1.hi - r1.lo) * 1e-13;
        auto outer = [&](double w0) {
            auto inner = [&](double w1) {
                Eigen::VectorXd w(2);
                w << w0, w1;
                const double g = density(w);
                Eigen::VectorXd v(3);
                v << g, g * w0, g * w1;
                return v;
            };
            return adaptive_simpson(inner, r1.lo, r1.hi, tol_inner, 3);
        };
        integral = adaptive_simpson(outer, r0.lo, r0.hi,
                                    peak * (r0.hi - r0.lo) * (r1.hi - r1.lo) * 1e-12, 3);
    }

    if (!(integral[0] > 0.0) || !integral.allFinite()) {
        throw SolverError("truncated-moment quadrature collapsed; region mass too small");
    }
    TruncatedMoments out;
    out.mean = integral.tail(d) / integral[0];
    out.std_error = 1e-9 * (Eigen::VectorXd::Ones(d) + out.mean.cwiseAbs());
    return out;
}

TruncatedMoments sample_truncated(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                  const Eigen::VectorXd& signs, std::uint64_t seed,
                                  long min_accepted) {
    const Eigen::Index d = mean.size();
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw DataError("covariance must be positive definite");
    const Eigen::MatrixXd chol = llt.matrixL();

    Rng rng(seed);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(d);
    long accepted = 0;
    long attempts = 0;
    const long rate_check = 20000000;

    while (accepted < min_accepted) {
        ++attempts;
        const Eigen::VectorXd w = mean + chol * rng.normal_vector(d);
        bool ok = true;
        for (Eigen::Index i = 0; i < d; ++i) {
            if (signs[i] != 0.0 && !(signs[i] * w[i] > 0.0)) {
                ok = false;
                break;
            }
        }
        if (ok) {
            ++accepted;
            sum += w;
            sumsq += w.cwiseProduct(w);
        }
        if (attempts >= rate_check &&
            static_cast<double>(accepted) < 1e-6 * static_cast<double>(attempts)) {
            throw SolverError("truncated-moment sampler infeasible: acceptance rate below 1e-6");
        }
    }

    TruncatedMoments out;
    out.accepted = accepted;
    out.mean = sum / static_cast<double>(accepted);
    out.std_error.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double var = sumsq[i] / static_cast<double>(accepted) - out.mean[i] * out.mean[i];
        out.std_error[i] = std::sqrt(std::max(var, 0.0) / static_cast<double>(accepted));
    }
    return out;
}

}  // namespace

TruncatedMoments truncated_gaussian_mean_oracle(const Eigen::VectorXd& mean,
                                                const Eigen::MatrixXd& cov,
                                                const Eigen::VectorXd& signs, std::uint64_t seed,
                                                TruncationMethod method, long min_accepted) {
    const Eigen::Index d = mean.size();
    if (d < 1 || d > 3) throw DataError("oracle supports dimensions 1 to 3");
    if (cov.rows() != d || cov.cols() != d || signs.size() != d) {
        throw DataError("oracle dimensions disagree");
    }
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * cov.cwiseAbs().maxCoeff()) {
        throw DataError("covariance must be symmetric");
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        if (signs[i] != 0.0 && signs[i] != 1.0 && signs[i] != -1.0) {
            throw DataError("orthant spec entries must be -1, 0 or +1");
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw DataError("covariance must be positive definite");

    if ((signs.array() == 0.0).all()) {
        TruncatedMoments out;
        out.mean = mean;
        out.std_error = Eigen::VectorXd::Zero(d);
        return out;
    }

    switch (method) {
        case TruncationMethod::Integrate:
            if (d > 2) throw DataError("quadrature supported up to dimension 2");
            return integrate_truncated(mean, cov, signs);
        case TruncationMethod::Sample:
            return sample_truncated(mean, cov, signs, seed, min_accepted);
        case TruncationMethod::Auto:
        default:
            if (d <= 2) return integrate_truncated(mean, cov, signs);
            return sample_truncated(mean, cov, signs, seed, min_accepted);
    }
}

}  // namespace carve
