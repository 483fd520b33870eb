#ifndef SCFM_MODEL_HPP
#define SCFM_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace scfm {

/// How the Dirichlet-Laplace local scales are shared across a loading column.
enum class DlMode { Elementwise, Columnwise };

/**
 * Scale on which steps (iii)-(v) see the latent matrix.
 *
 * Identity: W = z, the factor model z = Lambda u + eps is sampled exactly and
 * the copula correlation is the normalized covariance.
 * Working: W = Psi^{1/2} z, observed entries re-injected as sqrt(psi_j) * zhat
 * whenever Lambda or sigma2 change.
 */
enum class ScaleMode { Identity, Working };

/// Starting point of a chain.
/// Prior: small random loadings and standard normal scores.
/// Spectral: principal-factor loadings and regression scores computed from the
/// initial latent matrix, plus the same small random perturbation.
enum class InitMode { Prior, Spectral };

std::string to_string(DlMode mode);
std::string to_string(ScaleMode mode);
std::string to_string(InitMode mode);
DlMode parse_dl_mode(const std::string& text);
ScaleMode parse_scale_mode(const std::string& text);
InitMode parse_init_mode(const std::string& text);

struct Hyperparams {
    int k_max = 8;
    int m = 1;
    double alpha = 0.5;
    double a_sigma = 0.1;
    double b_sigma = 0.1;
    int iterations = 10000;
    int burn_in = 5000;
    int thin = 1;
    std::uint64_t seed = 1;
    DlMode dl_mode = DlMode::Elementwise;
    ScaleMode scale_mode = ScaleMode::Identity;
    InitMode init_mode = InitMode::Spectral;
    bool save_scores = false;

    /// Throws ArgumentError on an inconsistent configuration.
    void validate() const;

    /// Number of stored draws: floor((iterations - burn_in) / thin).
    int draw_count() const { return (iterations - burn_in) / thin; }
};

void to_json(nlohmann::json& j, const Hyperparams& hp);
void from_json(const nlohmann::json& j, Hyperparams& hp);

/// Upper bound of the threshold support: Phi^-1(n/(n+1)), the largest pseudo-observation.
double threshold_ceiling(Eigen::Index n);

/// Lower bound of the threshold support: Phi^-1(1e-12).
double threshold_floor();

/// One state of a Gibbs chain.
struct ModelState {
    Eigen::MatrixXd Lambda; // p x k_max
    Eigen::VectorXd sigma2; // p
    Eigen::MatrixXd U;      // n x k_max
    Eigen::MatrixXd delta;  // p x (m+1): delta_1 .. delta_{m+1}
    Eigen::MatrixXd phi;    // p x k_max (elementwise) or 1 x k_max (columnwise)
    double tau = 1.0;
    Eigen::MatrixXd Xi;     // p x k_max
    Eigen::MatrixXd W;      // n x p

    double phi_at(Eigen::Index j, Eigen::Index h) const { return phi.rows() == 1 ? phi(0, h) : phi(j, h); }
};

/// psi_j = |lambda_j.|^2 + sigma2_j.
Eigen::VectorXd compute_psi(const Eigen::MatrixXd& Lambda, const Eigen::VectorXd& sigma2);

/// Omega = Psi^{-1/2} (Lambda Lambda^T + Sigma) Psi^{-1/2}.
Eigen::MatrixXd compute_correlation(const Eigen::MatrixXd& Lambda, const Eigen::VectorXd& sigma2);

/// Stored post-burn-in snapshot.
struct Draw {
    Eigen::MatrixXd Lambda;
    Eigen::VectorXd sigma2;
    Eigen::MatrixXd delta;
    double tau = 0.0;
    std::optional<Eigen::MatrixXd> U;
};

struct Chain {
    Hyperparams hp;
    std::uint64_t stream_id = 0;
    Eigen::Index n = 0;
    Eigen::Index p = 0;
    std::vector<Draw> draws;
    std::vector<int> k_hat_per_iter; // one entry per sweep, burn-in included
    Eigen::MatrixXd scores_mean;     // running mean of U over stored draws
    double wall_seconds = 0.0;
    std::vector<std::string> gene_names;
};

/**
 * Writes a chain as CSV matrices plus `meta.json`. Wall-clock time goes to a
 * separate `timing.json` so the rest of the directory is reproducible byte
 * for byte.
 */
void write_chain(const std::filesystem::path& dir, const Chain& chain);
Chain read_chain(const std::filesystem::path& dir);

} // namespace scfm

#endif
