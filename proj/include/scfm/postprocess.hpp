#ifndef SCFM_POSTPROCESS_HPP
#define SCFM_POSTPROCESS_HPP

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scfm/copula.hpp"
#include "scfm/model.hpp"
#include "scfm/rng.hpp"

namespace scfm {

/// Posterior summary of one chain.
struct FitResult {
    Eigen::MatrixXd lambda_mean; // p x k_max
    Eigen::VectorXd sigma2_mean;
    Eigen::MatrixXd scores_mean; // n x k_max
    Eigen::MatrixXd delta_mean;  // p x (m+1)
    Eigen::VectorXd psi_mean;
    int k_hat = 0;
    std::vector<Eigen::Index> significant_factor_indices; // 0-based, by descending column norm
    std::vector<std::string> warnings;
};

/**
 * Number of significant columns in one loading draw: the size of the
 * high-norm cluster in the within-cluster-SSE optimal 2-partition of the
 * column l2-norms. Norm spread below 1e-8 counts every column as significant.
 */
int khat_one_iteration(const Eigen::MatrixXd& lambda);

/// Most frequent value, ties resolved toward the smaller one.
int mode_smallest(std::span<const int> values);

/// Mode of khat_one_iteration over the stored draws.
int estimate_k(const Chain& chain);

/// Indices of the k_hat largest-norm columns, descending, ties to the lower index.
std::vector<Eigen::Index> select_factors(const Eigen::MatrixXd& lambda_mean, int k_hat);

/// Posterior means, k_hat, significant factors and chain-health warnings.
FitResult summarize_chain(const Chain& chain);

/// Average ranks (1-based) with ties sharing their mean rank.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& x);

double pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Strict upper triangle of the pairwise Euclidean row-distance matrix.
Eigen::VectorXd pairwise_row_distances(const Eigen::MatrixXd& a);

/**
 * Spearman correlation between the pairwise row distances of A and of B.
 * Rows must match and number at least 3; column counts may differ.
 */
double distance_spearman(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Columns of `m` in the given order.
Eigen::MatrixXd take_columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols);

/// Rows divided by sqrt(psi): the loadings of the copula correlation matrix.
Eigen::MatrixXd correlation_scale_loadings(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& sigma2);

/**
 * One posterior predictive cell from a stored draw: z ~ N(0, C) with C the
 * draw's correlation matrix (working scale) or Lambda Lambda^T + Sigma
 * (identity scale), then each coordinate mapped through the segmentation
 * with F_j^-(Phi(z_j)) above the top threshold.
 */
Eigen::VectorXd ppc_sample(const Draw& draw, const std::vector<EmpiricalCdf>& cdfs, int m, ScaleMode mode, RngStream& rng);

/// `per_draw` predictive cells for every stored draw, stacked by rows.
Eigen::MatrixXd ppc_replicates(const Chain& chain, const std::vector<EmpiricalCdf>& cdfs, int per_draw, RngStream& rng);

/// Type-7 (linear interpolation) sample quantile of a sorted sample.
double sample_quantile(std::span<const double> sorted, double prob);

/// Quantile pairs at probabilities 1/(Q+1) .. Q/(Q+1).
std::vector<std::pair<double, double>> qq_table(std::span<const double> observed, std::span<const double> predictive,
                                                int n_quantiles);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|; ties handled exactly.
double ks_statistic(std::span<const double> a, std::span<const double> b);

} // namespace scfm

#endif
