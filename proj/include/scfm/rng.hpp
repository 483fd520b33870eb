#ifndef SCFM_RNG_HPP
#define SCFM_RNG_HPP

#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace scfm {

/**
 * Seeded variate stream.
 *
 * The engine is `std::mt19937_64` seeded through `std::seed_seq` from the
 * (seed, stream_id) pair; both algorithms are fixed by the standard, so a
 * given pair produces the same sequence on every platform. Child streams for
 * parallel work are derived with `child()`, never by sharing one stream.
 */
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Independent stream keyed by (seed, hash(stream_id, key)).
    RngStream child(std::uint64_t key) const;

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double std_normal();

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

double sample_std_normal(RngStream& rng);

/// One draw from N(mu, sigma^2) restricted to (lo, hi]; either bound may be
/// infinite. The returned value always satisfies lo < x <= hi.
double sample_truncated_normal(double mu, double sigma, double lo, double hi, RngStream& rng);

/// Gamma with shape/rate parametrization.
double sample_gamma(double shape, double rate, RngStream& rng);

/// If Y ~ Gamma(a, rate b) then 1/Y ~ IG(a, b).
double sample_inverse_gamma(double a, double b, RngStream& rng);

double sample_exponential(double rate, RngStream& rng);

/**
 * Generalized inverse Gaussian with density proportional to
 * y^(kappa - 1) exp(-(rho * y + chi / y) / 2) on y > 0.
 *
 * Proper when rho > 0 and either chi > 0, or chi == 0 with kappa > 0 (the
 * Gamma(kappa, rate rho/2) limit).
 */
double sample_gig(double kappa, double rho, double chi, RngStream& rng);

/// Absolute loadings are floored at this value inside shrinkage updates.
inline constexpr double kAbsLoadingFloor = 1e-10;

/**
 * Draws R_jh ~ giG(alpha - 1, 1, 2|w_jh|) independently and returns R / sum(R).
 * Weights below kAbsLoadingFloor are floored so every giG stays proper.
 */
Eigen::MatrixXd sample_dirichlet_like_phi(const Eigen::MatrixXd& abs_weights, double alpha, RngStream& rng);

/// Multivariate normal draw given the lower Cholesky factor of the covariance.
Eigen::VectorXd sample_mvn_chol(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower, RngStream& rng);

} // namespace scfm

#endif
