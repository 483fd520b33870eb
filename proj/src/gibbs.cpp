#include "scfm/gibbs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>

#include "scfm/csv.hpp"
#include "scfm/errors.hpp"
#include "scfm/normal.hpp"
#include "scfm/postprocess.hpp"

namespace scfm {

namespace {

constexpr double kThresholdGap = 1e-6;
constexpr double kMinPriorVariance = 1e-300;

std::string fmt(double v) {
    return format_double(v);
}

// Interval (lo, hi] of a low-count level on the z scale.
double level_lower(const ModelState& s, Eigen::Index j, int d) {
    return d == 0 ? -kInf : s.delta(j, d - 1);
}

double level_upper(const ModelState& s, Eigen::Index j, int d) {
    return s.delta(j, d);
}

// Keeps z fixed while the per-gene scale moves from `from` to `to`.
void rescale_latent(ModelState& state, const PseudoData& pd, const Eigen::VectorXd& from, const Eigen::VectorXd& to) {
    for (Eigen::Index j = 0; j < pd.p(); ++j) {
        const double ratio = to(j) / from(j);
        for (Eigen::Index i = 0; i < pd.n(); ++i) {
            state.W(i, j) = pd.observed(i, j) ? to(j) * pd.zhat(i, j) : state.W(i, j) * ratio;
        }
    }
}

// Samples the ordered uniform on {l_d < delta_d < u_d, delta nondecreasing}.
void draw_ordered_uniform(std::vector<double>& lo, std::vector<double>& hi, std::vector<double>& out,
                          Eigen::Index gene, RngStream& rng) {
    const std::size_t count = lo.size();
    // ordering tightens each coordinate's interval without changing the region
    for (std::size_t d = 1; d < count; ++d) {
        lo[d] = std::max(lo[d], lo[d - 1]);
    }
    for (std::size_t d = count - 1; d-- > 0;) {
        hi[d] = std::min(hi[d], hi[d + 1]);
    }
    for (std::size_t d = 0; d < count; ++d) {
        if (!(lo[d] < hi[d])) {
            throw NumericalError("empty threshold region for gene " + std::to_string(gene + 1) + ", level " +
                                 std::to_string(d + 1) + ": (" + fmt(lo[d]) + ", " + fmt(hi[d]) + ")");
        }
    }
    constexpr int kMaxTries = 10000;
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
        bool ordered = true;
        for (std::size_t d = 0; d < count; ++d) {
            out[d] = lo[d] + (hi[d] - lo[d]) * rng.uniform();
            if (d > 0 && out[d] < out[d - 1]) {
                ordered = false;
                break;
            }
        }
        if (ordered) {
            return;
        }
    }
    // single-site updates leave the same conditional invariant; `out` must
    // start feasible, so seed it with evenly spread points first
    for (std::size_t d = 0; d < count; ++d) {
        const double left = (d == 0) ? lo[0] : std::max(lo[d], out[d - 1]);
        out[d] = left + (hi[d] - left) / static_cast<double>(count - d + 1);
    }
    for (std::size_t d = 0; d < count; ++d) {
        const double left = (d == 0) ? lo[d] : std::max(lo[d], out[d - 1]);
        const double right = (d + 1 == count) ? hi[d] : std::min(hi[d], out[d + 1]);
        out[d] = left + (right - left) * rng.uniform();
    }
}

} // namespace

Eigen::VectorXd latent_scale(const ModelState& state, ScaleMode mode) {
    if (mode == ScaleMode::Identity) {
        return Eigen::VectorXd::Ones(state.Lambda.rows());
    }
    return compute_psi(state.Lambda, state.sigma2).array().sqrt();
}

void refresh_observed(ModelState& state, const PseudoData& pd, ScaleMode mode) {
    const Eigen::VectorXd s = latent_scale(state, mode);
    for (Eigen::Index j = 0; j < pd.p(); ++j) {
        for (Eigen::Index i = 0; i < pd.n(); ++i) {
            if (pd.observed(i, j)) {
                state.W(i, j) = s(j) * pd.zhat(i, j);
            }
        }
    }
}

namespace {

// Principal-factor start: loadings from the leading eigenpairs of the latent
// correlation, with the mean trailing eigenvalue taken as noise, and scores
// at their conditional mean. The random perturbation already in s is kept.
void spectral_start(const Eigen::MatrixXd& z, ModelState& s) {
    const Eigen::Index n = z.rows();
    const Eigen::Index p = z.cols();
    const Eigen::Index k = s.Lambda.cols();
    const Eigen::MatrixXd centered = z.rowwise() - z.colwise().mean();
    const Eigen::VectorXd sd = (centered.colwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt().transpose();
    if ((sd.array() <= 0.0).any() || !sd.allFinite()) {
        return;
    }
    const Eigen::MatrixXd zs = centered * sd.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd corr = (zs.transpose() * zs) / static_cast<double>(n - 1);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    const Eigen::Index used = std::min(k, p);
    // eigenvalues come in ascending order
    double noise = 0.0;
    if (p > used) {
        noise = eig.eigenvalues().head(p - used).mean();
    }
    for (Eigen::Index h = 0; h < used; ++h) {
        const Eigen::Index col = p - 1 - h;
        const double strength = std::sqrt(std::max(eig.eigenvalues()(col) - noise, 0.0));
        s.Lambda.col(h) += strength * eig.eigenvectors().col(col);
    }
    s.sigma2 = (1.0 - s.Lambda.rowwise().squaredNorm().array()).max(0.05).matrix();
    const Eigen::MatrixXd lt_sinv = s.Lambda.transpose() * s.sigma2.cwiseInverse().asDiagonal();
    Eigen::MatrixXd prec = lt_sinv * s.Lambda;
    prec.diagonal().array() += 1.0;
    s.U = (Eigen::LLT<Eigen::MatrixXd>(prec).solve(lt_sinv * z.transpose())).transpose();
}

} // namespace

ModelState init_state(const PseudoData& pd, const Hyperparams& hp, RngStream& rng) {
    hp.validate();
    if (hp.m != pd.m) {
        throw ArgumentError("hyperparameter m=" + std::to_string(hp.m) + " does not match pseudodata m=" + std::to_string(pd.m));
    }
    const Eigen::Index n = pd.n();
    const Eigen::Index p = pd.p();
    const Eigen::Index k = hp.k_max;
    const int levels = hp.m + 1;

    ModelState s;
    s.Lambda.resize(p, k);
    for (Eigen::Index h = 0; h < k; ++h) {
        for (Eigen::Index j = 0; j < p; ++j) {
            s.Lambda(j, h) = 0.1 * rng.std_normal();
        }
    }
    s.sigma2 = Eigen::VectorXd::Ones(p);
    s.U.resize(n, k);
    for (Eigen::Index h = 0; h < k; ++h) {
        for (Eigen::Index i = 0; i < n; ++i) {
            s.U(i, h) = rng.std_normal();
        }
    }
    if (hp.dl_mode == DlMode::Elementwise) {
        s.phi = Eigen::MatrixXd::Constant(p, k, 1.0 / static_cast<double>(p * k));
    } else {
        s.phi = Eigen::MatrixXd::Constant(1, k, 1.0 / static_cast<double>(k));
    }
    s.tau = static_cast<double>(p * k) * hp.alpha;
    s.Xi = Eigen::MatrixXd::Ones(p, k);

    const double floor = threshold_floor();
    const double ceiling = threshold_ceiling(n);
    s.delta.resize(p, levels);
    for (Eigen::Index j = 0; j < p; ++j) {
        const EmpiricalCdf& cdf = pd.cdfs[static_cast<std::size_t>(j)];
        double top = ceiling;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (pd.observed(i, j)) {
                top = std::min(top, pd.zhat(i, j));
            }
        }
        for (int d = 1; d <= levels; ++d) {
            // midpoint of the CDF step between d-1 and d
            const double mid = 0.5 * (cdf(d - 1.0) + cdf(static_cast<double>(d)));
            double v = normal_quantile(mid);
            v = std::min(v, top - kThresholdGap * (levels + 1 - d));
            v = std::max(v, floor + kThresholdGap * d);
            if (d > 1) {
                v = std::max(v, s.delta(j, d - 2) + kThresholdGap);
            }
            s.delta(j, d - 1) = v;
        }
    }

    Eigen::MatrixXd z(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (pd.observed(i, j)) {
                z(i, j) = pd.zhat(i, j);
                continue;
            }
            const int d = pd.level(i, j);
            const double hi = level_upper(s, j, d);
            z(i, j) = (d == 0) ? hi - 1.0 : 0.5 * (level_lower(s, j, d) + hi);
        }
    }
    if (hp.init_mode == InitMode::Spectral) {
        spectral_start(z, s);
    }
    s.W = z * latent_scale(s, hp.scale_mode).asDiagonal();
    return s;
}

void step_latent(ModelState& state, const PseudoData& pd, const Hyperparams& hp, RngStream& rng) {
    const Eigen::VectorXd scale = latent_scale(state, hp.scale_mode);
    const Eigen::MatrixXd mean = state.U * state.Lambda.transpose(); // n x p
    for (Eigen::Index j = 0; j < pd.p(); ++j) {
        const double sd = std::sqrt(state.sigma2(j));
        for (Eigen::Index i = 0; i < pd.n(); ++i) {
            if (pd.observed(i, j)) {
                state.W(i, j) = scale(j) * pd.zhat(i, j);
                continue;
            }
            const int d = pd.level(i, j);
            const double lo = (d == 0) ? -kInf : scale(j) * level_lower(state, j, d);
            const double hi = scale(j) * level_upper(state, j, d);
            state.W(i, j) = sample_truncated_normal(mean(i, j), sd, lo, hi, rng);
        }
    }
}

void step_thresholds(ModelState& state, const PseudoData& pd, const Hyperparams& hp, RngStream& rng) {
    const Eigen::VectorXd scale = latent_scale(state, hp.scale_mode);
    const auto levels = static_cast<std::size_t>(hp.m + 1);
    const double floor = threshold_floor();
    const double ceiling = threshold_ceiling(pd.n());
    // lo[d] bounds delta_{d+1} from below (max z at level d), hi[d] from above
    std::vector<double> lo(levels), hi(levels), out(levels);
    for (Eigen::Index j = 0; j < pd.p(); ++j) {
        std::fill(lo.begin(), lo.end(), floor);
        std::fill(hi.begin(), hi.end(), ceiling);
        for (Eigen::Index i = 0; i < pd.n(); ++i) {
            if (pd.observed(i, j)) {
                hi[levels - 1] = std::min(hi[levels - 1], pd.zhat(i, j));
                continue;
            }
            const auto d = static_cast<std::size_t>(pd.level(i, j));
            const double z = state.W(i, j) / scale(j);
            lo[d] = std::max(lo[d], z);
            if (d > 0) {
                hi[d - 1] = std::min(hi[d - 1], z);
            }
        }
        draw_ordered_uniform(lo, hi, out, j, rng);
        for (std::size_t d = 0; d < levels; ++d) {
            state.delta(j, static_cast<Eigen::Index>(d)) = out[d];
        }
    }
}

void step_sigma(ModelState& state, const PseudoData& pd, const Hyperparams& hp, RngStream& rng) {
    const Eigen::VectorXd before = latent_scale(state, hp.scale_mode);
    const Eigen::MatrixXd resid = state.W - state.U * state.Lambda.transpose();
    const double shape = hp.a_sigma + 0.5 * static_cast<double>(pd.n());
    for (Eigen::Index j = 0; j < pd.p(); ++j) {
        state.sigma2(j) = sample_inverse_gamma(shape, hp.b_sigma + 0.5 * resid.col(j).squaredNorm(), rng);
    }
    if (hp.scale_mode == ScaleMode::Working) {
        rescale_latent(state, pd, before, latent_scale(state, hp.scale_mode));
    }
}

void step_scores(ModelState& state, const Hyperparams& hp, RngStream& rng) {
    const Eigen::Index k = hp.k_max;
    const Eigen::VectorXd inv_sigma2 = state.sigma2.cwiseInverse();
    const Eigen::MatrixXd lambda_scaled = inv_sigma2.asDiagonal() * state.Lambda; // Sigma^-1 Lambda
    Eigen::MatrixXd precision = state.Lambda.transpose() * lambda_scaled;
    precision.diagonal().array() += 1.0;
    const Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("score precision matrix is not positive definite");
    }
    // rows of W Sigma^-1 Lambda are the canonical means
    Eigen::MatrixXd means = llt.solve((state.W * lambda_scaled).transpose()); // k x n
    Eigen::VectorXd eps(k);
    for (Eigen::Index i = 0; i < state.U.rows(); ++i) {
        for (Eigen::Index h = 0; h < k; ++h) {
            eps(h) = rng.std_normal();
        }
        // L^T x = eps gives x ~ N(0, precision^-1)
        llt.matrixU().solveInPlace(eps);
        state.U.row(i) = (means.col(i) + eps).transpose();
    }
}

void step_loadings(ModelState& state, const PseudoData& pd, const Hyperparams& hp, RngStream& rng) {
    const Eigen::VectorXd before = latent_scale(state, hp.scale_mode);
    const Eigen::Index k = hp.k_max;
    const Eigen::MatrixXd utu = state.U.transpose() * state.U;
    const Eigen::MatrixXd utw = state.U.transpose() * state.W; // k x p
    const double tau2 = state.tau * state.tau;
    Eigen::VectorXd eps(k);
    for (Eigen::Index j = 0; j < pd.p(); ++j) {
        const double inv_s2 = 1.0 / state.sigma2(j);
        Eigen::MatrixXd precision = inv_s2 * utu;
        for (Eigen::Index h = 0; h < k; ++h) {
            const double phi = state.phi_at(j, h);
            const double prior_var = std::max(state.Xi(j, h) * tau2 * phi * phi, kMinPriorVariance);
            precision(h, h) += 1.0 / prior_var;
        }
        const Eigen::LLT<Eigen::MatrixXd> llt(precision);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("loading precision for gene " + std::to_string(j + 1) + " is not positive definite");
        }
        const Eigen::VectorXd mean = llt.solve(inv_s2 * utw.col(j));
        for (Eigen::Index h = 0; h < k; ++h) {
            eps(h) = rng.std_normal();
        }
        llt.matrixU().solveInPlace(eps);
        state.Lambda.row(j) = (mean + eps).transpose();
    }
    if (hp.scale_mode == ScaleMode::Working) {
        rescale_latent(state, pd, before, latent_scale(state, hp.scale_mode));
    }
}

void step_dl_hyper(ModelState& state, const Hyperparams& hp, RngStream& rng) {
    const Eigen::Index p = state.Lambda.rows();
    const Eigen::Index k = state.Lambda.cols();
    const Eigen::MatrixXd abs_l = state.Lambda.cwiseAbs().cwiseMax(kAbsLoadingFloor);
    const auto pk = static_cast<double>(p * k);

    double tau_order = 0.0;
    if (hp.dl_mode == DlMode::Elementwise) {
        state.phi = sample_dirichlet_like_phi(abs_l, hp.alpha, rng);
        tau_order = pk * (hp.alpha - 1.0);
    } else {
        // Column-shared scales: with tau ~ Gamma(k alpha, 1/2) the products
        // tau * phi_h are iid Gamma(alpha, 1/2), so phi_h | Lambda follows
        // from T_h ~ giG(alpha - p, 1, 2 sum_j |lambda_jh|) normalized.
        Eigen::MatrixXd t(1, k);
        for (Eigen::Index h = 0; h < k; ++h) {
            t(0, h) = sample_gig(hp.alpha - static_cast<double>(p), 1.0, 2.0 * abs_l.col(h).sum(), rng);
        }
        state.phi = t / t.sum();
        tau_order = static_cast<double>(k) * hp.alpha - pk;
    }

    double chi = 0.0;
    for (Eigen::Index h = 0; h < k; ++h) {
        for (Eigen::Index j = 0; j < p; ++j) {
            chi += abs_l(j, h) / state.phi_at(j, h);
        }
    }
    state.tau = sample_gig(tau_order, 1.0, 2.0 * chi, rng);

    const double tau2 = state.tau * state.tau;
    for (Eigen::Index h = 0; h < k; ++h) {
        for (Eigen::Index j = 0; j < p; ++j) {
            const double phi = state.phi_at(j, h);
            state.Xi(j, h) = sample_gig(0.5, 1.0, abs_l(j, h) * abs_l(j, h) / (tau2 * phi * phi), rng);
        }
    }
}

void gibbs_sweep(ModelState& state, const PseudoData& pd, const Hyperparams& hp, RngStream& rng) {
    step_latent(state, pd, hp, rng);
    step_thresholds(state, pd, hp, rng);
    step_sigma(state, pd, hp, rng);
    step_scores(state, hp, rng);
    step_loadings(state, pd, hp, rng);
    step_dl_hyper(state, hp, rng);
}

void check_invariants(const ModelState& state, const PseudoData& pd, const Hyperparams& hp) {
    const Eigen::VectorXd scale = latent_scale(state, hp.scale_mode);
    for (Eigen::Index j = 0; j < pd.p(); ++j) {
        for (int d = 1; d <= hp.m; ++d) {
            if (!(state.delta(j, d - 1) <= state.delta(j, d))) {
                throw NumericalError("thresholds of gene " + std::to_string(j + 1) + " are not nondecreasing");
            }
        }
        if (!(state.sigma2(j) > 0.0) || !std::isfinite(state.sigma2(j))) {
            throw NumericalError("sigma2 of gene " + std::to_string(j + 1) + " is " + fmt(state.sigma2(j)));
        }
        for (Eigen::Index i = 0; i < pd.n(); ++i) {
            const double w = state.W(i, j);
            if (pd.observed(i, j)) {
                const double expect = scale(j) * pd.zhat(i, j);
                if (std::abs(w - expect) > 1e-12 * std::max(1.0, std::abs(expect))) {
                    throw NumericalError("observed latent entry (" + std::to_string(i + 1) + ", " + std::to_string(j + 1) +
                                         ") drifted from its pseudo-observation");
                }
                continue;
            }
            const int d = pd.level(i, j);
            const double lo = (d == 0) ? -kInf : scale(j) * level_lower(state, j, d);
            const double hi = scale(j) * level_upper(state, j, d);
            // rescaling by a ratio of scales can move a value by a few ulps
            const double slack = 1e-12 * std::max(1.0, std::abs(w));
            if (!(w > lo - slack && w <= hi + slack)) {
                throw NumericalError("latent entry (" + std::to_string(i + 1) + ", " + std::to_string(j + 1) + ") = " + fmt(w) +
                                     " left its interval (" + fmt(lo) + ", " + fmt(hi) + "]");
            }
        }
    }
    if (!(state.tau > 0.0) || !std::isfinite(state.tau)) {
        throw NumericalError("tau is " + fmt(state.tau));
    }
    if (!((state.Xi.array() > 0.0).all()) || !((state.phi.array() > 0.0).all())) {
        throw NumericalError("nonpositive DL scale");
    }
    if (std::abs(state.phi.sum() - 1.0) > 1e-12) {
        throw NumericalError("phi sums to " + fmt(state.phi.sum()));
    }
    if (!state.Lambda.allFinite() || !state.U.allFinite() || !state.W.allFinite()) {
        throw NumericalError("non-finite loadings, scores or latent values");
    }
}

void write_state_snapshot(const std::filesystem::path& dir, const ModelState& state) {
    std::filesystem::create_directories(dir);
    auto dump = [&](const char* name, const Eigen::MatrixXd& m) {
        write_labeled_matrix(dir / name, {m, numbered_names("c", static_cast<std::size_t>(m.cols())), {}});
    };
    dump("Lambda.csv", state.Lambda);
    dump("sigma2.csv", state.sigma2);
    dump("U.csv", state.U);
    dump("delta.csv", state.delta);
    dump("phi.csv", state.phi);
    dump("Xi.csv", state.Xi);
    dump("W.csv", state.W);
    dump("tau.csv", Eigen::MatrixXd::Constant(1, 1, state.tau));
}

Chain run_chain(const PseudoData& pd, const Hyperparams& hp, RngStream& rng, const RunOptions& opts) {
    hp.validate();
    const auto start = std::chrono::steady_clock::now();
    Chain chain;
    chain.hp = hp;
    chain.stream_id = rng.stream_id();
    chain.n = pd.n();
    chain.p = pd.p();
    chain.draws.reserve(static_cast<std::size_t>(hp.draw_count()));
    chain.k_hat_per_iter.reserve(static_cast<std::size_t>(hp.iterations));
    chain.scores_mean = Eigen::MatrixXd::Zero(pd.n(), hp.k_max);

    std::ostream* progress = opts.progress != nullptr ? opts.progress : &std::cerr;
    ModelState state = init_state(pd, hp, rng);
    int stored = 0;
    for (int t = 1; t <= hp.iterations; ++t) {
        try {
            gibbs_sweep(state, pd, hp, rng);
            if (opts.check_every_sweep) {
                check_invariants(state, pd, hp);
            }
        } catch (const NumericalError& e) {
            std::string where;
            if (opts.snapshot_dir) {
                write_state_snapshot(*opts.snapshot_dir, state);
                where = "; state snapshot in " + opts.snapshot_dir->string();
            }
            throw NumericalError("sweep " + std::to_string(t) + ": " + e.what() + where);
        }
        chain.k_hat_per_iter.push_back(khat_one_iteration(state.Lambda));
        if (t > hp.burn_in && (t - hp.burn_in) % hp.thin == 0) {
            Draw d{state.Lambda, state.sigma2, state.delta, state.tau, std::nullopt};
            if (hp.save_scores) {
                d.U = state.U;
            }
            chain.draws.push_back(std::move(d));
            ++stored;
            chain.scores_mean += (state.U - chain.scores_mean) / static_cast<double>(stored);
        }
        if (opts.progress_every > 0 && t % opts.progress_every == 0) {
            *progress << "sweep " << t << "/" << hp.iterations << "  k_hat=" << chain.k_hat_per_iter.back()
                      << "  tau=" << state.tau << '\n';
        }
    }
    chain.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return chain;
}

} // namespace scfm
