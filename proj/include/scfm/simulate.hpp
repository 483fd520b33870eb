#ifndef SCFM_SIMULATE_HPP
#define SCFM_SIMULATE_HPP

#include <vector>

#include <Eigen/Dense>

#include "scfm/copula.hpp"
#include "scfm/ingest.hpp"
#include "scfm/rng.hpp"

namespace scfm {

/// Known factor structure behind a synthetic dataset.
struct SimTruth {
    Eigen::MatrixXd Lambda_true; // p x k, entries DE(1)
    Eigen::VectorXd sigma2_true; // p, U(0.3, 1)
    Eigen::MatrixXd U_true;      // n x k, N(0, 1)
    std::vector<EmpiricalCdf> marginals;
};

SimTruth gen_truth(Eigen::Index n, Eigen::Index p, Eigen::Index k, std::vector<EmpiricalCdf> marginals, RngStream& rng);

/**
 * Cells from the truth: w = Lambda u + eps, z_j = w_j / sqrt(psi_j) so every
 * coordinate is standard normal, then x_ij = F_j^-(Phi(z_ij)).
 */
CountMatrix gen_data(const SimTruth& truth, RngStream& rng);

/// Closed interval for a per-gene fraction; lo == hi fixes it.
struct FractionRange {
    double lo = 0.0;
    double hi = 0.0;
};

/**
 * Stand-in marginals when no reference dataset is available. Each gene gets
 * the empirical CDF of `sample_size` values: a zero share and a one share
 * drawn from their ranges, and a heavy tail 2 + floor(exp(1 + tail_shape * Z)).
 */
std::vector<EmpiricalCdf> synthetic_marginals(Eigen::Index p, FractionRange zero_frac, FractionRange one_frac,
                                              double tail_shape, RngStream& rng, Eigen::Index sample_size = 10000);

/// Marginals fitted to every gene of a reference matrix.
std::vector<EmpiricalCdf> marginals_from_matrix(const CountMatrix& reference);

} // namespace scfm

#endif
