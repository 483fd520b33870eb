#include "scfm/simulate.hpp"

#include <cmath>
#include <span>
#include <string>

#include "scfm/csv.hpp"
#include "scfm/errors.hpp"
#include "scfm/model.hpp"
#include "scfm/normal.hpp"

namespace scfm {

SimTruth gen_truth(Eigen::Index n, Eigen::Index p, Eigen::Index k, std::vector<EmpiricalCdf> marginals, RngStream& rng) {
    if (n < 2 || p < 1 || k < 1) {
        throw ArgumentError("simulation needs n >= 2, p >= 1 and k >= 1");
    }
    if (marginals.size() != static_cast<std::size_t>(p)) {
        throw ArgumentError("expected " + std::to_string(p) + " marginals, got " + std::to_string(marginals.size()));
    }
    SimTruth t;
    t.Lambda_true.resize(p, k);
    for (Eigen::Index h = 0; h < k; ++h) {
        for (Eigen::Index j = 0; j < p; ++j) {
            // Laplace(0, 1) as a signed unit exponential
            const double e = sample_exponential(1.0, rng);
            t.Lambda_true(j, h) = rng.uniform() < 0.5 ? -e : e;
        }
    }
    t.sigma2_true.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        t.sigma2_true(j) = 0.3 + 0.7 * rng.uniform();
    }
    t.U_true.resize(n, k);
    for (Eigen::Index h = 0; h < k; ++h) {
        for (Eigen::Index i = 0; i < n; ++i) {
            t.U_true(i, h) = rng.std_normal();
        }
    }
    t.marginals = std::move(marginals);
    return t;
}

CountMatrix gen_data(const SimTruth& truth, RngStream& rng) {
    const Eigen::Index n = truth.U_true.rows();
    const Eigen::Index p = truth.Lambda_true.rows();
    const Eigen::VectorXd inv_sd = compute_psi(truth.Lambda_true, truth.sigma2_true).array().rsqrt();
    const Eigen::VectorXd noise_sd = truth.sigma2_true.array().sqrt();
    const Eigen::MatrixXd signal = truth.U_true * truth.Lambda_true.transpose();
    CountMatrix x;
    x.values.resize(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const EmpiricalCdf& cdf = truth.marginals[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < n; ++i) {
            const double z = (signal(i, j) + noise_sd(j) * rng.std_normal()) * inv_sd(j);
            x.values(i, j) = cdf.pseudo_inverse(normal_cdf(z));
        }
    }
    fill_default_names(x);
    return x;
}

std::vector<EmpiricalCdf> synthetic_marginals(Eigen::Index p, FractionRange zero_frac, FractionRange one_frac,
                                              double tail_shape, RngStream& rng, Eigen::Index sample_size) {
    auto valid = [](FractionRange r) { return r.lo >= 0.0 && r.lo <= r.hi && r.hi < 1.0; };
    if (!valid(zero_frac) || !valid(one_frac) || !(zero_frac.hi + one_frac.hi < 1.0)) {
        throw ArgumentError("zero and one fractions must be ordered ranges in [0, 1) with zero + one < 1");
    }
    if (!(tail_shape > 0.0) || sample_size < 1 || p < 1) {
        throw ArgumentError("tail shape, sample size and gene count must be positive");
    }
    std::vector<EmpiricalCdf> out;
    out.reserve(static_cast<std::size_t>(p));
    std::vector<double> sample(static_cast<std::size_t>(sample_size));
    const auto size = static_cast<double>(sample_size);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double fz = zero_frac.lo + (zero_frac.hi - zero_frac.lo) * rng.uniform();
        const double fo = one_frac.lo + (one_frac.hi - one_frac.lo) * rng.uniform();
        const auto zeros = static_cast<std::size_t>(std::llround(fz * size));
        const auto ones = static_cast<std::size_t>(std::llround(fo * size));
        for (std::size_t i = 0; i < sample.size(); ++i) {
            if (i < zeros) {
                sample[i] = 0.0;
            } else if (i < zeros + ones) {
                sample[i] = 1.0;
            } else {
                sample[i] = 2.0 + std::floor(std::exp(1.0 + tail_shape * rng.std_normal()));
            }
        }
        out.push_back(fit_empirical_cdf(sample));
    }
    return out;
}

std::vector<EmpiricalCdf> marginals_from_matrix(const CountMatrix& reference) {
    std::vector<EmpiricalCdf> out;
    for (Eigen::Index j = 0; j < reference.n_genes(); ++j) {
        const Eigen::VectorXd col = reference.values.col(j);
        out.push_back(fit_empirical_cdf(std::span<const double>(col.data(), static_cast<std::size_t>(col.size()))));
    }
    return out;
}

} // namespace scfm
