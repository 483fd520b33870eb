#ifndef SCFM_CLI_HPP
#define SCFM_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scfm/ingest.hpp"
#include "scfm/model.hpp"
#include "scfm/simulate.hpp"

namespace scfm {

struct SimulateConfig {
    int n = 500;
    int p = 25;
    int k = 4;
    std::uint64_t seed = 1;
    FractionRange zero_frac{0.54, 0.59};
    FractionRange one_frac{0.14, 0.17};
    double tail_shape = 1.0;
    int marginal_sample_size = 10000;
    std::optional<std::filesystem::path> marginals_from; // reference counts; overrides the synthetic marginals
    std::string genes_are = "rows";                      // layout of a .mtx reference
    std::filesystem::path out = "sim";
};

struct SelectGenesConfig {
    std::filesystem::path input;
    std::string genes_are = "rows";
    double max_zero_frac = 0.9;
    int top_genes = 100;
    std::string variance = "raw";
    std::filesystem::path out = "selected";
};

struct FitConfig {
    std::filesystem::path input;
    std::string genes_are = "rows";
    std::filesystem::path out = "fit";
    Hyperparams hp;
    int chains = 1;
    int progress_every = 0;
};

struct EvaluateConfig {
    std::vector<std::filesystem::path> truth;
    std::vector<std::filesystem::path> fit;
    std::optional<std::filesystem::path> out; // metrics.json is written here when set
};

struct PpcConfig {
    std::filesystem::path chain;
    std::filesystem::path input;
    std::string genes_are = "rows";
    std::filesystem::path out = "ppc";
    int quantiles = 99;
    int per_draw = 1;
    std::uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const SimulateConfig& c);
void to_json(nlohmann::json& j, const SelectGenesConfig& c);
void to_json(nlohmann::json& j, const FitConfig& c);
void to_json(nlohmann::json& j, const EvaluateConfig& c);
void to_json(nlohmann::json& j, const PpcConfig& c);

/// Writes X.csv, U_true.csv, Lambda_true.csv, sigma2_true.csv and truth_meta.json.
nlohmann::json cmd_simulate(const SimulateConfig& cfg);

/// Writes selected.csv and kept_genes.txt (1-based original column indices).
nlohmann::json cmd_select_genes(const SelectGenesConfig& cfg);

/**
 * Writes loadings.csv, scores.csv, noise.csv, thresholds.csv, khat.json,
 * fit_meta.json and the chain under chain/. With several chains each goes to
 * chain_<c>/ with the same layout and pooled_summary.json sits on top.
 */
nlohmann::json cmd_fit(const FitConfig& cfg);

/// Distance-Spearman metrics per truth/fit pair plus mean and standard error.
nlohmann::json cmd_evaluate(const EvaluateConfig& cfg);

/// Writes qq_gene_<name>.csv per gene and ppc_summary.json with KS distances.
nlohmann::json cmd_ppc(const PpcConfig& cfg);

/**
 * Command-line front door. Exit codes: 0 success, 2 argument error, 3 data
 * error, 4 numerical or invariant failure.
 */
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace scfm

#endif
