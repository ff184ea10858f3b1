#pragma once

#include <cmath>

namespace carve::normal {

inline double pdf(double z) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

inline double sf(double z) { return 0.5 * std::erfc(z * M_SQRT1_2); }

// Inverse Mills ratio pdf(z)/sf(z). erfc stays in the normal double range up
// to z ~ 37; beyond that the asymptotic tail expansion takes over.
inline double mills(double z) {
    if (z > 37.0) {
        const double t2 = 1.0 / (z * z);
        const double series = 1.0 + t2 * (-1.0 + t2 * (3.0 + t2 * (-15.0 + t2 * (105.0 - 945.0 * t2))));
        return z / series;
    }
    return pdf(z) / sf(z);
}

}  // namespace carve::normal
