#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>

#include "gir.hpp"
#include "ks.hpp"
#include "sampler_oracles.hpp"
#include "scfm/copula.hpp"
#include "scfm/errors.hpp"
#include "scfm/gibbs.hpp"
#include "scfm/normal.hpp"
#include "scfm/rng.hpp"

using namespace scfm;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Hyperparams small_hp(int k, int m = 1) {
    Hyperparams hp;
    hp.k_max = k;
    hp.m = m;
    hp.iterations = 10;
    hp.burn_in = 5;
    return hp;
}

// n x p pseudodata from explicit levels; observed entries take `zhat`.
PseudoData make_pd(const Eigen::MatrixXi& level, const Eigen::MatrixXd& zhat, int m) {
    PseudoData pd;
    pd.level = level;
    pd.zhat = zhat;
    pd.m = m;
    return pd;
}

ModelState blank_state(Eigen::Index n, Eigen::Index p, Eigen::Index k, int m) {
    ModelState s;
    s.Lambda = Eigen::MatrixXd::Zero(p, k);
    s.sigma2 = Eigen::VectorXd::Ones(p);
    s.U = Eigen::MatrixXd::Zero(n, k);
    s.delta = Eigen::MatrixXd::Zero(p, m + 1);
    s.phi = Eigen::MatrixXd::Constant(p, k, 1.0 / static_cast<double>(p * k));
    s.tau = 1.0;
    s.Xi = Eigen::MatrixXd::Ones(p, k);
    s.W = Eigen::MatrixXd::Zero(n, p);
    return s;
}

CountMatrix counts(const Eigen::MatrixXd& v) {
    CountMatrix c;
    c.values = v;
    fill_default_names(c);
    return c;
}

} // namespace

TEST_CASE("init is deterministic and respects the data") {
    Eigen::MatrixXd x(4, 2);
    x << 0, 2, 0, 3, 1, 5, 3, 4;
    const auto pd = build_pseudodata(counts(x), SegmentationScheme{1});
    for (auto mode : {InitMode::Prior, InitMode::Spectral}) {
        auto hp = small_hp(2);
        hp.init_mode = mode;
        RngStream a(3, 0), b(3, 0);
        const auto s1 = init_state(pd, hp, a);
        const auto s2 = init_state(pd, hp, b);
        CHECK(s1.Lambda == s2.Lambda);
        CHECK(s1.W == s2.W);
        CHECK(s1.U == s2.U);
        CHECK_NOTHROW(check_invariants(s1, pd, hp));
        CHECK(s1.tau == doctest::Approx(2 * 2 * 0.5));
        CHECK(s1.phi.sum() == doctest::Approx(1.0));
    }
    RngStream rng(3, 0);
    auto hp = small_hp(2);
    hp.init_mode = InitMode::Prior;
    const auto s = init_state(pd, hp, rng);
    CHECK(s.sigma2 == Eigen::VectorXd::Ones(2));
    // gene 1 counts {0:2, 1:1, observed:1}
    CHECK(s.delta(0, 0) == doctest::Approx(normal_quantile(0.8 * 2.5 / 4.0)));
    CHECK(std::abs(s.delta(0, 0)) < 1e-12);
    CHECK(s.delta(0, 1) == doctest::Approx(normal_quantile(0.8 * 3.0 / 4.0)));
    CHECK(s.delta(0, 0) < s.delta(0, 1));
    // gene 2 has no zeros or ones: thresholds sit far below its observed part
    const double min_obs = pd.zhat.col(1).minCoeff();
    CHECK(s.delta(1, 0) < min_obs - 1.0);
    CHECK(s.delta(1, 0) < s.delta(1, 1));
    CHECK(s.delta(1, 1) < min_obs);
    // level-0 latent entries start one unit below delta_1
    CHECK(s.W(0, 0) == doctest::Approx(s.delta(0, 0) - 1.0));
    CHECK(s.W(2, 0) == doctest::Approx(0.5 * (s.delta(0, 0) + s.delta(0, 1))));
}

TEST_CASE("latent draws respect their intervals") {
    Eigen::MatrixXi level(2, 1);
    level << 0, 1;
    const auto pd = make_pd(level, Eigen::MatrixXd::Constant(2, 1, kNaN), 1);
    auto s = blank_state(2, 1, 1, 1);
    s.delta << -0.5, 0.8;
    const auto hp = small_hp(1);
    RngStream rng(1, 0);
    std::vector<double> low, mid;
    for (int t = 0; t < 20000; ++t) {
        step_latent(s, pd, hp, rng);
        REQUIRE(s.W(0, 0) <= -0.5);
        REQUIRE(s.W(1, 0) > -0.5);
        REQUIRE(s.W(1, 0) <= 0.8);
        low.push_back(s.W(0, 0));
        mid.push_back(s.W(1, 0));
    }
    // Lambda = 0 and sigma2 = 1: standard normal restricted to each interval
    const double p_low = normal_cdf(-0.5);
    const double d_low = testing::ks_one_sample(low, [&](double x) { return std::min(normal_cdf(x) / p_low, 1.0); });
    const double span = normal_cdf(0.8) - normal_cdf(-0.5);
    const double d_mid = testing::ks_one_sample(mid, [&](double x) { return std::clamp((normal_cdf(x) - normal_cdf(-0.5)) / span, 0.0, 1.0); });
    CHECK(testing::ks_p_value(d_low, low.size()) > 0.001);
    CHECK(testing::ks_p_value(d_mid, mid.size()) > 0.001);
}

TEST_CASE("working scale rescales latent bounds by sqrt(psi)") {
    Eigen::MatrixXi level(1, 1);
    level << 1;
    const auto pd = make_pd(level, Eigen::MatrixXd::Constant(1, 1, kNaN), 1);
    auto s = blank_state(1, 1, 1, 1);
    s.delta << -0.5, 0.8;
    s.Lambda << std::sqrt(3.0); // psi = 4
    auto hp = small_hp(1);
    hp.scale_mode = ScaleMode::Working;
    RngStream rng(2, 0);
    for (int t = 0; t < 2000; ++t) {
        step_latent(s, pd, hp, rng);
        REQUIRE(s.W(0, 0) > -1.0);
        REQUIRE(s.W(0, 0) <= 1.6);
    }
}

TEST_CASE("threshold draw follows the uniform full conditional") {
    // gene 1: level-0 max -1.1, level-1 entries in (-1.0, -0.5), observed min 0.2
    Eigen::MatrixXi level(5, 1);
    level << 0, 0, 1, 1, PseudoData::kObserved;
    Eigen::MatrixXd zhat = Eigen::MatrixXd::Constant(5, 1, kNaN);
    zhat(4, 0) = 0.2;
    const auto pd = make_pd(level, zhat, 1);
    auto s = blank_state(5, 1, 1, 1);
    s.W << -2.0, -1.1, -1.0, -0.5, 0.2;
    const auto hp = small_hp(1);
    RngStream rng(3, 0);
    std::vector<double> d1, d2;
    for (int t = 0; t < 20000; ++t) {
        step_thresholds(s, pd, hp, rng);
        REQUIRE(s.delta(0, 0) > -1.1);
        REQUIRE(s.delta(0, 0) < -1.0);
        REQUIRE(s.delta(0, 1) > -0.5);
        REQUIRE(s.delta(0, 1) < 0.2);
        d1.push_back(s.delta(0, 0));
        d2.push_back(s.delta(0, 1));
    }
    const double k1 = testing::ks_one_sample(d1, [](double x) { return std::clamp((x + 1.1) / 0.1, 0.0, 1.0); });
    const double k2 = testing::ks_one_sample(d2, [](double x) { return std::clamp((x + 0.5) / 0.7, 0.0, 1.0); });
    CHECK(testing::ks_p_value(k1, d1.size()) > 0.001);
    CHECK(testing::ks_p_value(k2, d2.size()) > 0.001);
}

TEST_CASE("thresholds without a level-1 set are ordered uniform") {
    Eigen::MatrixXi level(3, 1);
    level << 0, PseudoData::kObserved, PseudoData::kObserved;
    Eigen::MatrixXd zhat = Eigen::MatrixXd::Constant(3, 1, kNaN);
    zhat(1, 0) = 0.5;
    zhat(2, 0) = 0.6;
    const auto pd = make_pd(level, zhat, 1);
    auto s = blank_state(3, 1, 1, 1);
    s.W << 0.0, 0.5, 0.6;
    const auto hp = small_hp(1);
    RngStream rng(4, 0);
    std::vector<double> lower, upper;
    for (int t = 0; t < 20000; ++t) {
        step_thresholds(s, pd, hp, rng);
        REQUIRE(s.delta(0, 0) > 0.0);
        REQUIRE(s.delta(0, 0) <= s.delta(0, 1));
        REQUIRE(s.delta(0, 1) < 0.5);
        lower.push_back(s.delta(0, 0));
        upper.push_back(s.delta(0, 1));
    }
    // min and max of two uniforms on (0, 0.5)
    const double k1 = testing::ks_one_sample(lower, [](double x) { x = std::clamp(2 * x, 0.0, 1.0); return 1 - (1 - x) * (1 - x); });
    const double k2 = testing::ks_one_sample(upper, [](double x) { x = std::clamp(2 * x, 0.0, 1.0); return x * x; });
    CHECK(testing::ks_p_value(k1, lower.size()) > 0.001);
    CHECK(testing::ks_p_value(k2, upper.size()) > 0.001);
}

TEST_CASE("gene with no observed part is capped at the ceiling") {
    Eigen::MatrixXi level(4, 1);
    level << 0, 1, 1, 0;
    const auto pd = make_pd(level, Eigen::MatrixXd::Constant(4, 1, kNaN), 1);
    auto s = blank_state(4, 1, 1, 1);
    s.W << -1.0, 0.0, 0.3, -0.4;
    const auto hp = small_hp(1);
    RngStream rng(5, 0);
    for (int t = 0; t < 2000; ++t) {
        step_thresholds(s, pd, hp, rng);
        REQUIRE(s.delta(0, 1) >= 0.3);
        REQUIRE(s.delta(0, 1) <= threshold_ceiling(4));
    }
}

TEST_CASE("noise variance update is the conjugate inverse gamma") {
    const auto pd = make_pd(Eigen::MatrixXi::Constant(2, 1, PseudoData::kObserved), Eigen::MatrixXd::Zero(2, 1), 1);
    auto s = blank_state(2, 1, 1, 1);
    s.W << 1.0, -1.0;
    auto hp = small_hp(1);
    hp.a_sigma = 0.1;
    hp.b_sigma = 0.1;
    RngStream rng(6, 0);
    std::vector<double> draws;
    for (int t = 0; t < 20000; ++t) {
        step_sigma(s, pd, hp, rng);
        draws.push_back(s.sigma2(0));
    }
    // IG(1.1, 1.1)
    const double d = testing::ks_one_sample(draws, [](double x) { return x <= 0 ? 0.0 : boost::math::gamma_q(1.1, 1.1 / x); });
    CHECK(testing::ks_p_value(d, draws.size()) > 0.001);

    s.W.setZero();
    hp.a_sigma = 3.0;
    hp.b_sigma = 2.0;
    double mean = 0.0;
    const int count = 100000;
    for (int t = 0; t < count; ++t) {
        step_sigma(s, pd, hp, rng);
        mean += s.sigma2(0) / count;
    }
    // IG(4, 2) has mean 2/3
    CHECK(std::abs(mean / (2.0 / 3.0) - 1.0) < 0.01);
}

TEST_CASE("score update matches the dense conjugate oracle") {
    RngStream setup(7, 0);
    const Eigen::Index n = 5, p = 4, k = 3;
    auto s = blank_state(n, p, k, 1);
    for (Eigen::Index i = 0; i < s.Lambda.size(); ++i) {
        s.Lambda(i) = setup.std_normal();
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        s.sigma2(j) = 0.2 + setup.uniform();
    }
    for (Eigen::Index i = 0; i < s.W.size(); ++i) {
        s.W(i) = setup.std_normal();
    }
    const auto hp = small_hp(static_cast<int>(k));
    RngStream rng(8, 0);
    RngStream replay = rng;
    step_scores(s, hp, rng);

    const Eigen::MatrixXd sinv = s.sigma2.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd prec = s.Lambda.transpose() * sinv * s.Lambda + Eigen::MatrixXd::Identity(k, k);
    const Eigen::MatrixXd upper = prec.llt().matrixU();
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd mean = prec.inverse() * s.Lambda.transpose() * sinv * s.W.row(i).transpose();
        Eigen::VectorXd eps(k);
        for (Eigen::Index h = 0; h < k; ++h) {
            eps(h) = replay.std_normal();
        }
        const Eigen::VectorXd expect = mean + upper.triangularView<Eigen::Upper>().solve(eps);
        CHECK((s.U.row(i).transpose() - expect).norm() < 1e-10);
    }
}

TEST_CASE("score update scalar case and zero loadings") {
    const auto hp = small_hp(1);
    auto s = blank_state(1, 1, 1, 1);
    s.Lambda << 1.0;
    s.W << 2.0;
    RngStream rng(9, 0);
    double m = 0, v = 0;
    const int count = 100000;
    for (int t = 0; t < count; ++t) {
        step_scores(s, hp, rng);
        m += s.U(0, 0);
        v += s.U(0, 0) * s.U(0, 0);
    }
    m /= count;
    v = v / count - m * m;
    CHECK(std::abs(m - 1.0) < 0.01);
    CHECK(std::abs(v - 0.5) < 0.01);

    s.Lambda << 0.0;
    m = 0;
    v = 0;
    for (int t = 0; t < count; ++t) {
        step_scores(s, hp, rng);
        m += s.U(0, 0);
        v += s.U(0, 0) * s.U(0, 0);
    }
    CHECK(std::abs(m / count) < 0.01);
    CHECK(std::abs(v / count - 1.0) < 0.02);
}

TEST_CASE("loading update matches the dense conjugate oracle") {
    RngStream setup(10, 0);
    const Eigen::Index n = 6, p = 3, k = 2;
    auto s = blank_state(n, p, k, 1);
    for (Eigen::Index i = 0; i < s.U.size(); ++i) {
        s.U(i) = setup.std_normal();
    }
    for (Eigen::Index i = 0; i < s.W.size(); ++i) {
        s.W(i) = setup.std_normal();
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        s.sigma2(j) = 0.3 + setup.uniform();
        for (Eigen::Index h = 0; h < k; ++h) {
            s.Xi(j, h) = 0.5 + setup.uniform();
            s.phi(j, h) = 0.1 + setup.uniform();
        }
    }
    s.phi /= s.phi.sum();
    s.tau = 2.5;
    const auto pd = make_pd(Eigen::MatrixXi::Constant(n, p, 0), Eigen::MatrixXd::Constant(n, p, kNaN), 1);
    const auto hp = small_hp(static_cast<int>(k));
    RngStream rng(11, 0);
    RngStream replay = rng;
    step_loadings(s, pd, hp, rng);
    for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::MatrixXd d_inv = Eigen::MatrixXd::Zero(k, k);
        for (Eigen::Index h = 0; h < k; ++h) {
            d_inv(h, h) = 1.0 / (s.Xi(j, h) * s.tau * s.tau * s.phi(j, h) * s.phi(j, h));
        }
        const Eigen::MatrixXd prec = s.U.transpose() * s.U / s.sigma2(j) + d_inv;
        const Eigen::VectorXd mean = prec.inverse() * (s.U.transpose() * s.W.col(j)) / s.sigma2(j);
        Eigen::VectorXd eps(k);
        for (Eigen::Index h = 0; h < k; ++h) {
            eps(h) = replay.std_normal();
        }
        const Eigen::VectorXd noise = s.Lambda.row(j).transpose() - mean;
        CHECK(std::abs(noise.dot(prec * noise) - eps.squaredNorm()) < 1e-10);
        // the exact draw: mean + U^-1 eps with prec = U^T U
        const Eigen::MatrixXd upper = prec.llt().matrixU();
        CHECK((noise - upper.triangularView<Eigen::Upper>().solve(eps)).norm() < 1e-10);
    }
}

TEST_CASE("loading update scalar case and prior draw") {
    const auto hp = small_hp(1);
    const auto pd = make_pd(Eigen::MatrixXi::Constant(1, 1, PseudoData::kObserved), Eigen::MatrixXd::Constant(1, 1, 3.0), 1);
    auto s = blank_state(1, 1, 1, 1);
    s.U << 1.0;
    s.W << 3.0;
    s.phi << 1.0;
    RngStream rng(12, 0);
    double m = 0, v = 0;
    const int count = 100000;
    for (int t = 0; t < count; ++t) {
        step_loadings(s, pd, hp, rng);
        m += s.Lambda(0, 0);
        v += s.Lambda(0, 0) * s.Lambda(0, 0);
    }
    m /= count;
    v = v / count - m * m;
    CHECK(std::abs(m - 1.5) < 0.01);
    CHECK(std::abs(v - 0.5) < 0.01);

    s.U << 0.0;
    s.tau = 2.0; // D = 4
    m = 0;
    v = 0;
    for (int t = 0; t < count; ++t) {
        step_loadings(s, pd, hp, rng);
        m += s.Lambda(0, 0);
        v += s.Lambda(0, 0) * s.Lambda(0, 0);
    }
    CHECK(std::abs(m / count) < 0.02);
    CHECK(std::abs(v / count / 4.0 - 1.0) < 0.02);
}

TEST_CASE("shrinkage hyperparameters") {
    auto hp = small_hp(1);
    auto s = blank_state(1, 1, 1, 1);
    s.Lambda << 0.7;
    s.phi = Eigen::MatrixXd::Constant(1, 1, 1.0);
    RngStream rng(13, 0);
    for (auto mode : {DlMode::Elementwise, DlMode::Columnwise}) {
        hp.dl_mode = mode;
        step_dl_hyper(s, hp, rng);
        CHECK(s.phi(0, 0) == 1.0);
    }

    hp = small_hp(3);
    s = blank_state(1, 4, 3, 1);
    for (auto mode : {DlMode::Elementwise, DlMode::Columnwise}) {
        hp.dl_mode = mode;
        s.Lambda.setZero();
        step_dl_hyper(s, hp, rng);
        CHECK(s.phi.sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK((s.phi.array() > 0).all());
        CHECK((s.Xi.array() > 0).all());
        CHECK(s.tau > 0);
        CHECK(s.phi.rows() == (mode == DlMode::Elementwise ? 4 : 1));
    }
}

namespace {

// giG(1/2, 1, chi) is the reciprocal of an inverse Gaussian with mean
// chi^{-1/2} and shape 1
double gig_half_cdf(double x, double chi) {
    const double y = 1.0 / x;
    const double mu = 1.0 / std::sqrt(chi);
    const double r = std::sqrt(1.0 / y);
    const double a = r * (y / mu + 1.0);
    const double log_tail = a < 30.0 ? std::log(normal_cdf(-a)) : -0.5 * a * a - std::log(a * std::sqrt(2.0 * M_PI));
    const double ig_cdf = normal_cdf(r * (y / mu - 1.0)) + std::exp(2.0 / mu + log_tail);
    return std::clamp(1.0 - ig_cdf, 0.0, 1.0);
}

} // namespace

TEST_CASE("xi draws follow giG(1/2, 1, chi) given the fresh tau and phi") {
    for (auto mode : {DlMode::Elementwise, DlMode::Columnwise}) {
        auto hp = small_hp(2);
        hp.dl_mode = mode;
        auto s = blank_state(1, 2, 2, 1);
        s.Lambda << 0.8, -0.3, 1.5, 0.05;
        RngStream rng(14, 0);
        std::vector<double> pit;
        for (int t = 0; t < 20000; ++t) {
            step_dl_hyper(s, hp, rng);
            const double l = s.Lambda(1, 0);
            const double phi = s.phi_at(1, 0);
            pit.push_back(gig_half_cdf(s.Xi(1, 0), l * l / (s.tau * s.tau * phi * phi)));
        }
        const double d = testing::ks_one_sample(pit, [](double u) { return std::clamp(u, 0.0, 1.0); });
        INFO(to_string(mode));
        CHECK(testing::ks_p_value(d, pit.size()) > 0.001);
    }
}

TEST_CASE("shrinkage block alone preserves its prior") {
    for (auto mode : {DlMode::Elementwise, DlMode::Columnwise}) {
        auto hp = testing::gir_hyperparams(mode);
        hp.k_max = 3;
        const auto report = testing::run_dl_block_gir(hp, 4, 100000, 100000, 21);
        for (const auto& st : report.stats) {
            INFO(to_string(mode) << " " << st.name << " prior " << st.prior_mean << " chain " << st.chain_mean << " z " << st.z());
            CHECK(std::abs(st.z()) < 3.0);
        }
    }
}

TEST_CASE("run_chain bookkeeping and determinism") {
    Eigen::MatrixXd x(6, 3);
    x << 0, 1, 4, 2, 0, 0, 1, 3, 5, 0, 0, 1, 7, 2, 0, 1, 1, 9;
    const auto pd = build_pseudodata(counts(x), SegmentationScheme{1});
    auto hp = small_hp(2);
    RngStream a(1, 0), b(1, 0);
    const auto c1 = run_chain(pd, hp, a);
    const auto c2 = run_chain(pd, hp, b);
    CHECK(c1.draws.size() == 5);
    CHECK(c1.k_hat_per_iter.size() == 10);
    for (std::size_t d = 0; d < c1.draws.size(); ++d) {
        CHECK(c1.draws[d].Lambda == c2.draws[d].Lambda);
        CHECK(c1.draws[d].delta == c2.draws[d].delta);
        CHECK(c1.draws[d].tau == c2.draws[d].tau);
        CHECK_FALSE(c1.draws[d].U.has_value());
    }
    CHECK(c1.scores_mean == c2.scores_mean);
    hp.thin = 2;
    hp.save_scores = true;
    RngStream c(1, 0);
    const auto thinned = run_chain(pd, hp, c);
    CHECK(thinned.draws.size() == 2);
    CHECK(thinned.draws[0].U.has_value());
}

TEST_CASE("sweeps keep the state invariants in every mode") {
    Eigen::MatrixXd x(8, 3);
    x << 0, 1, 4, 2, 0, 0, 1, 3, 5, 0, 0, 1, 7, 2, 0, 1, 1, 9, 0, 0, 0, 1, 0, 1;
    const auto pd = build_pseudodata(counts(x), SegmentationScheme{1});
    for (auto dl : {DlMode::Elementwise, DlMode::Columnwise}) {
        for (auto sc : {ScaleMode::Identity, ScaleMode::Working}) {
            auto hp = small_hp(2);
            hp.dl_mode = dl;
            hp.scale_mode = sc;
            RngStream rng(2, 0);
            auto s = init_state(pd, hp, rng);
            for (int t = 0; t < 200; ++t) {
                gibbs_sweep(s, pd, hp, rng);
                REQUIRE_NOTHROW(check_invariants(s, pd, hp));
            }
        }
    }
}

TEST_CASE("m = 0 keeps a single threshold per gene") {
    Eigen::MatrixXd x(6, 2);
    x << 0, 1, 1, 0, 2, 0, 0, 3, 5, 1, 1, 0;
    const auto pd = build_pseudodata(counts(x), SegmentationScheme{0});
    CHECK((pd.level.array() <= 0).all());
    auto hp = small_hp(2, 0);
    RngStream rng(3, 0);
    auto s = init_state(pd, hp, rng);
    CHECK(s.delta.cols() == 1);
    for (int t = 0; t < 50; ++t) {
        gibbs_sweep(s, pd, hp, rng);
        CHECK(s.delta.cols() == 1);
    }
    CHECK_THROWS_AS(init_state(pd, small_hp(2, 1), rng), ArgumentError);
}

TEST_CASE("getting it right on the tiny model") {
    for (auto mode : {DlMode::Elementwise, DlMode::Columnwise}) {
        const auto report = testing::run_gir(testing::gir_hyperparams(mode), 100000, 50000, 1);
        for (const auto& st : report.stats) {
            INFO(to_string(mode) << " " << st.name << " prior " << st.prior_mean << " chain " << st.chain_mean << " z " << st.z());
            CHECK(std::abs(st.z()) < 3.0);
        }
    }
}
