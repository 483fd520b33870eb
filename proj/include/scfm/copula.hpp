#ifndef SCFM_COPULA_HPP
#define SCFM_COPULA_HPP

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "scfm/ingest.hpp"

namespace scfm {

/**
 * Rescaled empirical CDF F(x) = n/(n+1) * #{x_i <= x} / n, stored as a step
 * function over the distinct observed values. Tied values share one support
 * point. The top step is n/(n+1), so Phi^-1 of any evaluation stays finite.
 */
class EmpiricalCdf {
public:
    EmpiricalCdf() = default;
    EmpiricalCdf(std::vector<double> support, std::vector<double> cum_prob, std::size_t n);

    double operator()(double x) const;

    /// Smallest support value v with F(v) >= u; the maximum when u exceeds the top step.
    double pseudo_inverse(double u) const;

    const std::vector<double>& support() const { return support_; }
    const std::vector<double>& cum_prob() const { return cum_prob_; }
    std::size_t sample_size() const { return n_; }

private:
    std::vector<double> support_;
    std::vector<double> cum_prob_;
    std::size_t n_ = 0;
};

EmpiricalCdf fit_empirical_cdf(std::span<const double> column);

/// Convenience wrapper around EmpiricalCdf::pseudo_inverse with argument checking.
double cdf_pseudo_inverse(const EmpiricalCdf& cdf, double u);

/// Largest count treated as an inflated low level.
struct SegmentationScheme {
    int m = 1;
};

/**
 * Per-entry split of a count matrix. `level(i, j)` is d in 0..m for a low
 * count, or kObserved when x_ij > m; `zhat(i, j)` holds Phi^-1(F_j(x_ij)) for
 * observed entries and NaN otherwise.
 */
struct PseudoData {
    static constexpr int kObserved = -1;

    Eigen::MatrixXi level;
    Eigen::MatrixXd zhat;
    std::vector<EmpiricalCdf> cdfs;
    int m = 1;

    Eigen::Index n() const { return level.rows(); }
    Eigen::Index p() const { return level.cols(); }
    bool observed(Eigen::Index i, Eigen::Index j) const { return level(i, j) == kObserved; }
};

PseudoData build_pseudodata(const CountMatrix& x, SegmentationScheme seg);

/**
 * Maps a Gaussian-scale value to the observation it induces: d when z lies in
 * (delta_d, delta_{d+1}] with delta_0 = -inf, and x_star above delta_{m+1}.
 * `deltas` holds delta_1 .. delta_{m+1}.
 */
double segment(double x_star, std::span<const double> deltas, double z, int m);

} // namespace scfm

#endif
