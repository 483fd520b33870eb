#include "scfm/rng.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numbers>
#include <string>

#include "scfm/errors.hpp"
#include "scfm/normal.hpp"

namespace scfm {

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
    return std::mt19937_64(seq);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ArgumentError(std::string(what) + " must be positive and finite, got " + std::to_string(v));
    }
}

// Standard normal restricted to (a, b] with a >= 5.
double upper_tail_normal(double a, double b, RngStream& rng) {
    if (std::isfinite(b) && (b - a) * a <= 1.0) {
        // uniform proposal: acceptance stays above ~1/e on short intervals
        for (;;) {
            const double x = a + (b - a) * rng.uniform();
            if (std::log(rng.uniform()) <= -0.5 * (x * x - a * a)) {
                return x;
            }
        }
    }
    // exponential proposal with the optimal rate for a one-sided tail
    const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (;;) {
        const double x = a - std::log(rng.uniform()) / rate;
        if (x > b) {
            continue;
        }
        const double d = x - rate;
        if (std::log(rng.uniform()) <= -0.5 * d * d) {
            return x;
        }
    }
}

double standard_truncated_normal(double a, double b, RngStream& rng) {
    constexpr double kTailCut = 5.0;
    if (a >= kTailCut) {
        return upper_tail_normal(a, b, rng);
    }
    if (b <= -kTailCut) {
        return -upper_tail_normal(-b, -a, rng);
    }
    const double u = rng.uniform();
    if (a >= 0.0) {
        // invert through upper-tail probabilities to keep precision
        const double pa = normal_sf(a);
        const double pb = normal_sf(b);
        return -normal_quantile(pb + (pa - pb) * u);
    }
    const double pa = normal_cdf(a);
    const double pb = normal_cdf(b);
    return normal_quantile(pa + (pb - pa) * u);
}

// Hörmann & Leydold (2014). All three routines draw from the two-parameter
// form with density x^(lambda - 1) exp(-omega/2 (x + 1/x)), lambda >= 0.
double gig_mode(double lambda, double omega) {
    if (lambda >= 1.0) {
        return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega;
    }
    return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

double gig_rou_noshift(double lambda, double omega, RngStream& rng) {
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
    const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) / omega;
    const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
    for (;;) {
        const double u = um * rng.uniform();
        const double v = rng.uniform();
        const double x = u / v;
        if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) {
            return x;
        }
    }
}

double gig_rou_shift(double lambda, double omega, RngStream& rng) {
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);

    // the bounding rectangle's u-extent comes from the real roots of a cubic
    const double a = -(2.0 * (lambda + 1.0) / omega + xm);
    const double b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    const double c = xm;
    const double p = b - a * a / 3.0;
    const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    const double fi = std::acos(std::clamp(-q / 2.0 * std::sqrt(-27.0 / (p * p * p)), -1.0, 1.0));
    const double fak = 2.0 * std::sqrt(-p / 3.0);
    const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
    const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * std::numbers::pi) - a / 3.0;
    const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
    const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);

    for (;;) {
        const double u = uminus + rng.uniform() * (uplus - uminus);
        const double v = rng.uniform();
        const double x = u / v + xm;
        if (x <= 0.0) {
            continue;
        }
        if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) {
            return x;
        }
    }
}

// 0 <= lambda < 1 with small omega, where the density is not T-concave.
double gig_concave_rejection(double lambda, double omega, RngStream& rng) {
    const double xm = gig_mode(lambda, omega);
    const double x0 = omega / (1.0 - lambda);
    const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
    double area[3];
    double k1 = 0.0;
    double k2 = 0.0;
    area[0] = k0 * x0;
    if (x0 >= 2.0 / omega) {
        area[1] = 0.0;
        k2 = std::pow(x0, lambda - 1.0);
        area[2] = k2 * 2.0 * std::exp(-omega * x0 / 2.0) / omega;
    } else {
        k1 = std::exp(-omega);
        area[1] = (lambda == 0.0) ? k1 * std::log(2.0 / (omega * omega))
                                  : k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda));
        k2 = std::pow(2.0 / omega, lambda - 1.0);
        area[2] = k2 * 2.0 * std::exp(-1.0) / omega;
    }
    const double total = area[0] + area[1] + area[2];

    for (;;) {
        double v = total * rng.uniform();
        double x = 0.0;
        double hx = 0.0;
        if (v <= area[0]) {
            x = x0 * v / area[0];
            hx = k0;
        } else {
            v -= area[0];
            if (v <= area[1]) {
                if (lambda == 0.0) {
                    x = omega * std::exp(std::exp(omega) * v);
                    hx = k1 / x;
                } else {
                    x = std::pow(std::pow(x0, lambda) + (lambda / k1 * v), 1.0 / lambda);
                    hx = k1 * std::pow(x, lambda - 1.0);
                }
            } else {
                v -= area[1];
                const double edge = std::max(x0, 2.0 / omega);
                x = -2.0 / omega * std::log(std::exp(-omega / 2.0 * edge) - omega / (2.0 * k2) * v);
                hx = k2 * std::exp(-omega / 2.0 * x);
            }
        }
        const double u = rng.uniform() * hx;
        if (std::log(u) <= (lambda - 1.0) * std::log(x) - omega / 2.0 * (x + 1.0 / x)) {
            return x;
        }
    }
}

} // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::child(std::uint64_t key) const {
    return RngStream(seed_, splitmix64(stream_id_ ^ splitmix64(key)));
}

double RngStream::std_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Marsaglia polar method
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

double sample_std_normal(RngStream& rng) {
    return rng.std_normal();
}

double sample_truncated_normal(double mu, double sigma, double lo, double hi, RngStream& rng) {
    require_positive(sigma, "truncated normal sigma");
    if (!(lo < hi)) {
        throw ArgumentError("truncated normal needs lo < hi, got lo=" + std::to_string(lo) + " hi=" + std::to_string(hi));
    }
    const double a = (lo - mu) / sigma;
    const double b = (hi - mu) / sigma;
    double x = mu + sigma * standard_truncated_normal(a, b, rng);
    if (!(x > lo)) {
        x = std::nextafter(lo, kInf);
    }
    if (x > hi) {
        x = hi;
    }
    return x;
}

double sample_gamma(double shape, double rate, RngStream& rng) {
    require_positive(shape, "gamma shape");
    require_positive(rate, "gamma rate");
    if (shape < 1.0) {
        // boost: G(a) = G(a + 1) * U^(1/a), done in logs to postpone underflow
        const double g = sample_gamma(shape + 1.0, 1.0, rng);
        const double x = std::exp(std::log(g) + std::log(rng.uniform()) / shape);
        return std::max(x, DBL_MIN) / rate;
    }
    // Marsaglia & Tsang
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = rng.std_normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v / rate;
        }
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v / rate;
        }
    }
}

double sample_inverse_gamma(double a, double b, RngStream& rng) {
    return 1.0 / sample_gamma(a, b, rng);
}

double sample_exponential(double rate, RngStream& rng) {
    require_positive(rate, "exponential rate");
    return -std::log(rng.uniform()) / rate;
}

double sample_gig(double kappa, double rho, double chi, RngStream& rng) {
    require_positive(rho, "giG rho");
    if (!(chi >= 0.0) || !std::isfinite(chi) || !std::isfinite(kappa)) {
        throw ArgumentError("giG needs finite kappa and chi >= 0");
    }
    constexpr double kChiTol = 10.0 * DBL_EPSILON;
    if (chi < kChiTol) {
        if (kappa > 0.0) {
            return sample_gamma(kappa, rho / 2.0, rng);
        }
        if (chi == 0.0) {
            throw ArgumentError("giG is improper for kappa <= 0 with chi == 0");
        }
    }

    const double lambda = std::abs(kappa);
    const double scale = std::sqrt(chi / rho);
    const double omega = std::sqrt(rho * chi);

    double x = 0.0;
    if (lambda > 2.0 || omega > 3.0) {
        x = gig_rou_shift(lambda, omega, rng);
    } else if (lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2) {
        x = gig_rou_noshift(lambda, omega, rng);
    } else {
        x = gig_concave_rejection(lambda, omega, rng);
    }
    // GIG(-l, omega, omega) is the reciprocal of GIG(l, omega, omega)
    const double y = (kappa < 0.0) ? scale / x : scale * x;
    return std::clamp(y, DBL_MIN, DBL_MAX);
}

Eigen::MatrixXd sample_dirichlet_like_phi(const Eigen::MatrixXd& abs_weights, double alpha, RngStream& rng) {
    require_positive(alpha, "DL concentration alpha");
    Eigen::MatrixXd r(abs_weights.rows(), abs_weights.cols());
    for (Eigen::Index h = 0; h < r.cols(); ++h) {
        for (Eigen::Index j = 0; j < r.rows(); ++j) {
            const double w = std::max(std::abs(abs_weights(j, h)), kAbsLoadingFloor);
            r(j, h) = sample_gig(alpha - 1.0, 1.0, 2.0 * w, rng);
        }
    }
    return r / r.sum();
}

Eigen::VectorXd sample_mvn_chol(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower, RngStream& rng) {
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        z(i) = rng.std_normal();
    }
    return mean + chol_lower.triangularView<Eigen::Lower>() * z;
}

} // namespace scfm
