#include "scfm/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "scfm/errors.hpp"
#include "scfm/normal.hpp"

namespace scfm {

int khat_one_iteration(const Eigen::MatrixXd& lambda) {
    const Eigen::Index k = lambda.cols();
    if (k <= 1) {
        return static_cast<int>(k);
    }
    Eigen::VectorXd norms = lambda.colwise().norm().transpose();
    std::sort(norms.begin(), norms.end());
    if (norms(k - 1) - norms(0) < 1e-8) {
        return static_cast<int>(k);
    }
    // exact 2-means in one dimension: the optimal clusters are contiguous in
    // sorted order, so scan every split with prefix sums
    Eigen::VectorXd sum(k + 1), sq(k + 1);
    sum(0) = 0.0;
    sq(0) = 0.0;
    for (Eigen::Index h = 0; h < k; ++h) {
        sum(h + 1) = sum(h) + norms(h);
        sq(h + 1) = sq(h) + norms(h) * norms(h);
    }
    auto sse = [&](Eigen::Index a, Eigen::Index b) {
        const double s = sum(b) - sum(a);
        return (sq(b) - sq(a)) - s * s / static_cast<double>(b - a);
    };
    Eigen::Index best_split = 1;
    double best = sse(1, k);
    for (Eigen::Index split = 2; split < k; ++split) {
        const double total = sse(0, split) + sse(split, k);
        // near-ties keep the smaller split, i.e. the larger significant group
        if (total < best - 1e-12 * std::max(1.0, best)) {
            best = total;
            best_split = split;
        }
    }
    return static_cast<int>(k - best_split);
}

int mode_smallest(std::span<const int> values) {
    if (values.empty()) {
        throw ArgumentError("mode of an empty sequence");
    }
    std::map<int, int> counts;
    for (int v : values) {
        ++counts[v];
    }
    int best = counts.begin()->first;
    int best_count = 0;
    for (const auto& [value, count] : counts) {
        if (count > best_count) { // ascending keys: strict > keeps the smaller value on ties
            best = value;
            best_count = count;
        }
    }
    return best;
}

int estimate_k(const Chain& chain) {
    if (chain.draws.empty()) {
        throw ArgumentError("cannot estimate k from a chain without stored draws");
    }
    std::vector<int> per_draw;
    per_draw.reserve(chain.draws.size());
    for (const Draw& d : chain.draws) {
        per_draw.push_back(khat_one_iteration(d.Lambda));
    }
    return mode_smallest(per_draw);
}

std::vector<Eigen::Index> select_factors(const Eigen::MatrixXd& lambda_mean, int k_hat) {
    const Eigen::Index k = lambda_mean.cols();
    if (k_hat < 0 || k_hat > k) {
        throw ArgumentError("k_hat=" + std::to_string(k_hat) + " exceeds the " + std::to_string(k) + " available factors");
    }
    const Eigen::VectorXd norms = lambda_mean.colwise().norm().transpose();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });
    order.resize(static_cast<std::size_t>(k_hat));
    return order;
}

FitResult summarize_chain(const Chain& chain) {
    if (chain.draws.empty()) {
        throw ArgumentError("chain has no stored draws");
    }
    FitResult fit;
    const auto& first = chain.draws.front();
    fit.lambda_mean = Eigen::MatrixXd::Zero(first.Lambda.rows(), first.Lambda.cols());
    fit.sigma2_mean = Eigen::VectorXd::Zero(first.sigma2.size());
    fit.delta_mean = Eigen::MatrixXd::Zero(first.delta.rows(), first.delta.cols());
    fit.psi_mean = Eigen::VectorXd::Zero(first.sigma2.size());
    for (const Draw& d : chain.draws) {
        fit.lambda_mean += d.Lambda;
        fit.sigma2_mean += d.sigma2;
        fit.delta_mean += d.delta;
        fit.psi_mean += compute_psi(d.Lambda, d.sigma2);
    }
    const auto s = static_cast<double>(chain.draws.size());
    fit.lambda_mean /= s;
    fit.sigma2_mean /= s;
    fit.delta_mean /= s;
    fit.psi_mean /= s;
    fit.scores_mean = chain.scores_mean;
    fit.k_hat = estimate_k(chain);
    fit.significant_factor_indices = select_factors(fit.lambda_mean, fit.k_hat);

    // no sign alignment is applied, so report columns whose sign keeps flipping
    for (Eigen::Index h : fit.significant_factor_indices) {
        int flips = 0;
        double prev = 0.0;
        for (const Draw& d : chain.draws) {
            const double sgn = d.Lambda.col(h).dot(fit.lambda_mean.col(h)) >= 0.0 ? 1.0 : -1.0;
            if (prev != 0.0 && sgn != prev) {
                ++flips;
            }
            prev = sgn;
        }
        if (static_cast<double>(flips) > 0.1 * s) {
            fit.warnings.push_back("factor " + std::to_string(h + 1) + " changed sign in " + std::to_string(flips) + " of " +
                                   std::to_string(chain.draws.size()) + " draws; its posterior mean is unreliable");
        }
    }
    return fit;
}

Eigen::VectorXd average_ranks(const Eigen::VectorXd& x) {
    const Eigen::Index n = x.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a) < x(b); });
    Eigen::VectorXd ranks(n);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x(order[j + 1]) == x(order[i])) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            ranks(order[t]) = avg;
        }
        i = j + 1;
    }
    return ranks;
}

double pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd ca = a.array() - a.mean();
    const Eigen::VectorXd cb = b.array() - b.mean();
    const double va = ca.squaredNorm();
    const double vb = cb.squaredNorm();
    if (!(va > 0.0) || !(vb > 0.0)) {
        throw NumericalError("correlation is undefined for a constant vector");
    }
    return ca.dot(cb) / std::sqrt(va * vb);
}

Eigen::VectorXd pairwise_row_distances(const Eigen::MatrixXd& a) {
    const Eigen::Index r = a.rows();
    Eigen::VectorXd out(r * (r - 1) / 2);
    Eigen::Index t = 0;
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = i + 1; j < r; ++j) {
            out(t++) = (a.row(i) - a.row(j)).norm();
        }
    }
    return out;
}

double distance_spearman(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows()) {
        throw ArgumentError("distance Spearman needs equal row counts, got " + std::to_string(a.rows()) + " and " +
                            std::to_string(b.rows()));
    }
    if (a.rows() < 3) {
        throw ArgumentError("distance Spearman is undefined for fewer than 3 rows");
    }
    return pearson_correlation(average_ranks(pairwise_row_distances(a)), average_ranks(pairwise_row_distances(b)));
}

Eigen::MatrixXd take_columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
    }
    return out;
}

Eigen::MatrixXd correlation_scale_loadings(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& sigma2) {
    return compute_psi(lambda, sigma2).array().rsqrt().matrix().asDiagonal() * lambda;
}

namespace {

Eigen::MatrixXd predictive_cholesky(const Draw& draw, ScaleMode mode) {
    Eigen::MatrixXd cov;
    if (mode == ScaleMode::Working) {
        cov = compute_correlation(draw.Lambda, draw.sigma2);
    } else {
        cov = draw.Lambda * draw.Lambda.transpose();
        cov.diagonal() += draw.sigma2;
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("predictive covariance of a stored draw is not positive definite");
    }
    return llt.matrixL();
}

Eigen::VectorXd map_predictive(const Eigen::VectorXd& z, const Draw& draw, const std::vector<EmpiricalCdf>& cdfs, int m) {
    Eigen::VectorXd x(z.size());
    std::vector<double> deltas(static_cast<std::size_t>(m + 1));
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        for (int d = 0; d <= m; ++d) {
            deltas[static_cast<std::size_t>(d)] = draw.delta(j, d);
        }
        const double above = cdfs[static_cast<std::size_t>(j)].pseudo_inverse(normal_cdf(z(j)));
        x(j) = segment(above, deltas, z(j), m);
    }
    return x;
}

Eigen::VectorXd gaussian_draw(const Eigen::MatrixXd& chol, RngStream& rng) {
    Eigen::VectorXd e(chol.rows());
    for (Eigen::Index j = 0; j < e.size(); ++j) {
        e(j) = rng.std_normal();
    }
    return chol.triangularView<Eigen::Lower>() * e;
}

} // namespace

Eigen::VectorXd ppc_sample(const Draw& draw, const std::vector<EmpiricalCdf>& cdfs, int m, ScaleMode mode, RngStream& rng) {
    const Eigen::MatrixXd chol = predictive_cholesky(draw, mode);
    return map_predictive(gaussian_draw(chol, rng), draw, cdfs, m);
}

Eigen::MatrixXd ppc_replicates(const Chain& chain, const std::vector<EmpiricalCdf>& cdfs, int per_draw, RngStream& rng) {
    if (per_draw < 1) {
        throw ArgumentError("need at least one predictive replicate per draw");
    }
    if (cdfs.size() != static_cast<std::size_t>(chain.p)) {
        throw ArgumentError("chain has " + std::to_string(chain.p) + " genes but " + std::to_string(cdfs.size()) +
                            " marginals were supplied");
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(chain.draws.size()) * per_draw, chain.p);
    Eigen::Index row = 0;
    for (const Draw& d : chain.draws) {
        const Eigen::MatrixXd chol = predictive_cholesky(d, chain.hp.scale_mode);
        for (int r = 0; r < per_draw; ++r) {
            out.row(row++) = map_predictive(gaussian_draw(chol, rng), d, cdfs, chain.hp.m).transpose();
        }
    }
    return out;
}

double sample_quantile(std::span<const double> sorted, double prob) {
    if (sorted.empty()) {
        throw ArgumentError("quantile of an empty sample");
    }
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<std::pair<double, double>> qq_table(std::span<const double> observed, std::span<const double> predictive,
                                                int n_quantiles) {
    if (n_quantiles < 2) {
        throw ArgumentError("need at least 2 quantiles");
    }
    std::vector<double> a(observed.begin(), observed.end());
    std::vector<double> b(predictive.begin(), predictive.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::pair<double, double>> out;
    out.reserve(static_cast<std::size_t>(n_quantiles));
    for (int q = 1; q <= n_quantiles; ++q) {
        const double prob = static_cast<double>(q) / static_cast<double>(n_quantiles + 1);
        out.emplace_back(sample_quantile(a, prob), sample_quantile(b, prob));
    }
    return out;
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) {
        throw ArgumentError("KS statistic needs two nonempty samples");
    }
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const auto nx = static_cast<double>(x.size());
    const auto ny = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double best = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == v) {
            ++i;
        }
        while (j < y.size() && y[j] == v) {
            ++j;
        }
        best = std::max(best, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }
    return best;
}

} // namespace scfm
