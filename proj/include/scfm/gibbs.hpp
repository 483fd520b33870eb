#ifndef SCFM_GIBBS_HPP
#define SCFM_GIBBS_HPP

#include <filesystem>
#include <iosfwd>
#include <optional>

#include <Eigen/Dense>

#include "scfm/copula.hpp"
#include "scfm/model.hpp"
#include "scfm/rng.hpp"

namespace scfm {

/// Per-gene factor mapping z to the latent matrix W: sqrt(psi_j) or 1.
Eigen::VectorXd latent_scale(const ModelState& state, ScaleMode mode);

/// Rewrites W_ij = s_j * zhat_ij on every observed entry.
void refresh_observed(ModelState& state, const PseudoData& pd, ScaleMode mode);

/**
 * Starting state: Lambda ~ N(0, 0.01), sigma2 = 1, U ~ N(0, 1), uniform phi,
 * tau = p * k_max * alpha, Xi = 1. Thresholds start at
 * Phi^-1(n/(n+1) * (#{x <= d-1} + #{x = d}/2) / n), pushed into the
 * threshold support and made strictly increasing; latent entries start at
 * their interval midpoints (one unit inside an open end).
 */
ModelState init_state(const PseudoData& pd, const Hyperparams& hp, RngStream& rng);

/// (i) Latent low-count entries from their truncated conditionals.
void step_latent(ModelState& state, const PseudoData& pd, const Hyperparams& hp, RngStream& rng);

/// (ii) Thresholds from the uniform full conditional on the ordered region.
void step_thresholds(ModelState& state, const PseudoData& pd, const Hyperparams& hp, RngStream& rng);

/// (iii) Noise variances, sigma2_j ~ IG(a + n/2, b + sum(residual^2)/2).
void step_sigma(ModelState& state, const PseudoData& pd, const Hyperparams& hp, RngStream& rng);

/// (iv) Factor scores from their Gaussian conditional.
void step_scores(ModelState& state, const Hyperparams& hp, RngStream& rng);

/// (v) Loading rows from their Gaussian conditional under the DL scales.
void step_loadings(ModelState& state, const PseudoData& pd, const Hyperparams& hp, RngStream& rng);

/// (vi) phi | Lambda, then tau | phi, Lambda, then Xi | tau, phi, Lambda.
void step_dl_hyper(ModelState& state, const Hyperparams& hp, RngStream& rng);

/// One full sweep, steps (i) through (vi) in order.
void gibbs_sweep(ModelState& state, const PseudoData& pd, const Hyperparams& hp, RngStream& rng);

/// Throws NumericalError when a post-sweep invariant is broken.
void check_invariants(const ModelState& state, const PseudoData& pd, const Hyperparams& hp);

/// Writes every state component as CSV under `dir` (used for abort diagnostics).
void write_state_snapshot(const std::filesystem::path& dir, const ModelState& state);

struct RunOptions {
    int progress_every = 0;           // 0 disables progress lines
    std::ostream* progress = nullptr; // defaults to std::cerr when progress_every > 0
    std::optional<std::filesystem::path> snapshot_dir;
    bool check_every_sweep = true;
};

/// Runs hp.iterations sweeps and keeps the thinned post-burn-in draws.
Chain run_chain(const PseudoData& pd, const Hyperparams& hp, RngStream& rng, const RunOptions& opts = {});

} // namespace scfm

#endif
