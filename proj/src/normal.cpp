#include "scfm/normal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace scfm {

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_sf(double x) {
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

double normal_quantile(double p) {
    p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    // erfc_inv keeps full relative precision for small p; mirror the upper half.
    if (p <= 0.5) {
        return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
    }
    return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - p));
}

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

} // namespace scfm
