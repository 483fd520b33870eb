#include <doctest.h>

#include <cmath>
#include <vector>

#include "scfm/copula.hpp"
#include "scfm/errors.hpp"
#include "scfm/normal.hpp"
#include "scfm/rng.hpp"

using namespace scfm;

namespace {

CountMatrix column(std::vector<double> v) {
    CountMatrix m;
    m.values = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    fill_default_names(m);
    return m;
}

const std::vector<double> kCol = {0, 0, 1, 3};

} // namespace

TEST_CASE("empirical cdf values") {
    const auto f = fit_empirical_cdf(kCol);
    CHECK(f(0) == doctest::Approx(0.4));
    CHECK(f(1) == doctest::Approx(0.6));
    CHECK(f(3) == doctest::Approx(0.8));
    CHECK(f(2) == doctest::Approx(0.6));
    CHECK(f(-1) == 0.0);
    CHECK(f(100) == doctest::Approx(0.8));

    const std::vector<double> one = {5};
    CHECK(fit_empirical_cdf(one)(5) == doctest::Approx(0.5));

    const std::vector<double> tied = {2, 2, 2};
    const auto t = fit_empirical_cdf(tied);
    CHECK(t.support().size() == 1);
    CHECK(t(2) == doctest::Approx(0.75));

    CHECK_THROWS_AS(fit_empirical_cdf(std::vector<double>{}), ArgumentError);
}

TEST_CASE("pseudo inverse") {
    const auto f = fit_empirical_cdf(kCol);
    CHECK(cdf_pseudo_inverse(f, 0.3) == 0);
    CHECK(cdf_pseudo_inverse(f, 0.4) == 0);
    CHECK(cdf_pseudo_inverse(f, 0.5) == 1);
    CHECK(cdf_pseudo_inverse(f, 0.95) == 3);
    CHECK(cdf_pseudo_inverse(f, 0.0) == 0);
    CHECK_THROWS_AS(cdf_pseudo_inverse(f, 1.0), ArgumentError);
    CHECK_THROWS_AS(cdf_pseudo_inverse(f, -0.1), ArgumentError);
}

TEST_CASE("normal quantile against reference values") {
    CHECK(normal_quantile(0.8) == doctest::Approx(0.8416212335729143).epsilon(1e-12));
    CHECK(normal_quantile(0.5) == 0.0);
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-10));
    CHECK(std::isfinite(normal_quantile(0.0)));
    CHECK(std::isfinite(normal_quantile(1.0)));
    for (double x : {-7.0, -3.0, -0.3, 0.0, 1.7, 5.5}) {
        CHECK(normal_quantile(normal_cdf(x)) == doctest::Approx(x).epsilon(1e-9));
    }
}

TEST_CASE("pseudodata with m=1") {
    const auto pd = build_pseudodata(column(kCol), SegmentationScheme{1});
    CHECK(pd.level(0, 0) == 0);
    CHECK(pd.level(1, 0) == 0);
    CHECK(pd.level(2, 0) == 1);
    CHECK(pd.observed(3, 0));
    CHECK(pd.zhat(3, 0) == doctest::Approx(0.8416212335729143).epsilon(1e-12));
    CHECK(std::isnan(pd.zhat(0, 0)));
}

TEST_CASE("pseudodata with m=0 keeps ones observed") {
    const auto pd = build_pseudodata(column(kCol), SegmentationScheme{0});
    CHECK(pd.level(0, 0) == 0);
    CHECK(pd.level(1, 0) == 0);
    CHECK(pd.observed(2, 0));
    CHECK(pd.zhat(2, 0) == doctest::Approx(normal_quantile(0.6)));
    CHECK(pd.observed(3, 0));
}

TEST_CASE("pseudodata above the cap is all observed and finite") {
    const auto pd = build_pseudodata(column({4, 9, 2, 2, 7}), SegmentationScheme{1});
    for (Eigen::Index i = 0; i < pd.n(); ++i) {
        CHECK(pd.observed(i, 0));
        CHECK(std::isfinite(pd.zhat(i, 0)));
    }
    // sample maximum sits at Phi^-1(n/(n+1))
    CHECK(pd.zhat(1, 0) == doctest::Approx(normal_quantile(5.0 / 6.0)));
    CHECK(pd.zhat(2, 0) == pd.zhat(3, 0));
}

TEST_CASE("non-integer inflated values are rejected") {
    CHECK_THROWS_WITH_AS(build_pseudodata(column({0, 0.5, 3}), SegmentationScheme{1}),
                         doctest::Contains("inflated region must be integer counts"), DataError);
}

TEST_CASE("pseudodata is monotone in the counts") {
    RngStream rng(3, 0);
    std::vector<double> v(200);
    for (double& x : v) {
        x = std::floor(std::exp(1.5 * rng.std_normal()));
    }
    const auto pd = build_pseudodata(column(v), SegmentationScheme{1});
    for (std::size_t a = 0; a < v.size(); ++a) {
        for (std::size_t b = 0; b < v.size(); ++b) {
            if (v[a] > 1 && v[b] > 1 && v[a] < v[b]) {
                CHECK(pd.zhat(static_cast<Eigen::Index>(a), 0) < pd.zhat(static_cast<Eigen::Index>(b), 0));
            }
        }
    }
}

TEST_CASE("segment map") {
    const std::vector<double> d = {-0.5, 0.8};
    CHECK(segment(4, d, -0.9, 1) == 0);
    CHECK(segment(4, d, 0.1, 1) == 1);
    CHECK(segment(4, d, 1.7, 1) == 4);
    CHECK(segment(4, d, -0.5, 1) == 0);
    CHECK(segment(4, d, 0.8, 1) == 1);
}

TEST_CASE("segmenting with the empirical thresholds reproduces the low-count mask") {
    const auto x = column({0, 3, 1, 0, 5, 1, 2, 0});
    const auto pd = build_pseudodata(x, SegmentationScheme{1});
    const auto& f = pd.cdfs[0];
    const std::vector<double> deltas = {normal_quantile(f(0)), normal_quantile(f(1))};
    for (Eigen::Index i = 0; i < x.n_cells(); ++i) {
        const double xi = x.values(i, 0);
        const double z = normal_quantile(f(xi));
        CHECK(segment(xi, deltas, z, 1) == xi);
        CHECK((pd.level(i, 0) != PseudoData::kObserved) == (xi <= 1));
    }
}
