#include "scfm/copula.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scfm/errors.hpp"
#include "scfm/normal.hpp"

namespace scfm {

EmpiricalCdf::EmpiricalCdf(std::vector<double> support, std::vector<double> cum_prob, std::size_t n)
    : support_(std::move(support)), cum_prob_(std::move(cum_prob)), n_(n) {}

double EmpiricalCdf::operator()(double x) const {
    const auto it = std::upper_bound(support_.begin(), support_.end(), x);
    if (it == support_.begin()) {
        return 0.0;
    }
    return cum_prob_[static_cast<std::size_t>(it - support_.begin()) - 1];
}

double EmpiricalCdf::pseudo_inverse(double u) const {
    const auto it = std::lower_bound(cum_prob_.begin(), cum_prob_.end(), u);
    if (it == cum_prob_.end()) {
        return support_.back();
    }
    return support_[static_cast<std::size_t>(it - cum_prob_.begin())];
}

EmpiricalCdf fit_empirical_cdf(std::span<const double> column) {
    if (column.empty()) {
        throw ArgumentError("empirical CDF needs at least one value");
    }
    std::vector<double> sorted(column.begin(), column.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    std::vector<double> support;
    std::vector<double> cum;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) {
            continue;
        }
        support.push_back(sorted[i]);
        // n/(n+1) * (i+1)/n
        cum.push_back(static_cast<double>(i + 1) / (n + 1.0));
    }
    return EmpiricalCdf(std::move(support), std::move(cum), sorted.size());
}

double cdf_pseudo_inverse(const EmpiricalCdf& cdf, double u) {
    if (!(u >= 0.0 && u < 1.0)) {
        throw ArgumentError("pseudo-inverse argument must lie in [0, 1), got " + std::to_string(u));
    }
    return cdf.pseudo_inverse(u);
}

PseudoData build_pseudodata(const CountMatrix& x, SegmentationScheme seg) {
    if (seg.m < 0) {
        throw ArgumentError("inflation cap m must be nonnegative");
    }
    const Eigen::Index n = x.n_cells();
    const Eigen::Index p = x.n_genes();
    PseudoData pd;
    pd.m = seg.m;
    pd.level.resize(n, p);
    pd.zhat.setConstant(n, p, std::numeric_limits<double>::quiet_NaN());
    pd.cdfs.reserve(static_cast<std::size_t>(p));
    const double cap = static_cast<double>(seg.m);
    for (Eigen::Index j = 0; j < p; ++j) {
        const Eigen::VectorXd col = x.values.col(j);
        pd.cdfs.push_back(fit_empirical_cdf(std::span<const double>(col.data(), static_cast<std::size_t>(n))));
        const auto& cdf = pd.cdfs.back();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = col(i);
            if (v > cap) {
                pd.level(i, j) = PseudoData::kObserved;
                pd.zhat(i, j) = normal_quantile(cdf(v));
            } else {
                if (v != std::round(v)) {
                    throw DataError("inflated region must be integer counts: gene " + x.gene_names[static_cast<std::size_t>(j)] +
                                    ", cell " + std::to_string(i + 1) + " has " + std::to_string(v));
                }
                pd.level(i, j) = static_cast<int>(std::lround(v));
            }
        }
    }
    return pd;
}

double segment(double x_star, std::span<const double> deltas, double z, int m) {
    for (int d = 0; d <= m; ++d) {
        if (z <= deltas[static_cast<std::size_t>(d)]) {
            return static_cast<double>(d);
        }
    }
    return x_star;
}

} // namespace scfm
