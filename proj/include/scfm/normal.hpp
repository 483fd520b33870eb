#ifndef SCFM_NORMAL_HPP
#define SCFM_NORMAL_HPP

namespace scfm {

/// Lower clamp applied to probabilities before inversion; its quantile is the
/// most negative value the Gaussian scale ever produces (about -7.03).
inline constexpr double kProbClamp = 1e-12;

double normal_cdf(double x);

/// Upper tail 1 - Phi(x), accurate far into the right tail.
double normal_sf(double x);

/// Standard normal quantile. The argument is clamped to [1e-12, 1 - 1e-12].
double normal_quantile(double p);

double normal_pdf(double x);

} // namespace scfm

#endif
