#include "scfm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "scfm/copula.hpp"
#include "scfm/csv.hpp"
#include "scfm/errors.hpp"
#include "scfm/gibbs.hpp"
#include "scfm/postprocess.hpp"
#include "scfm/rng.hpp"

namespace scfm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream ids keep the simulator's draws apart from chain streams (0, 1, ...).
constexpr std::uint64_t kSimulateStream = 0x5157ULL;
constexpr std::uint64_t kPpcStream = 0x9bcULL;

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string range_string(FractionRange r) {
    return r.lo == r.hi ? format_double(r.lo) : format_double(r.lo) + ":" + format_double(r.hi);
}

FractionRange parse_range(const std::string& text) {
    FractionRange r;
    const auto colon = text.find(':');
    const std::string lo = text.substr(0, colon);
    const std::string hi = colon == std::string::npos ? lo : text.substr(colon + 1);
    if (!parse_double(lo, r.lo) || !parse_double(hi, r.hi)) {
        throw ArgumentError("fraction must be a number or lo:hi, got '" + text + "'");
    }
    return r;
}

std::string safe_file_stem(const std::string& name) {
    std::string out = name;
    for (char& c : out) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        if (!ok) {
            c = '_';
        }
    }
    return out;
}

std::vector<int> one_based(const std::vector<Eigen::Index>& idx) {
    std::vector<int> out;
    for (auto i : idx) {
        out.push_back(static_cast<int>(i) + 1);
    }
    return out;
}

json khat_json(const Chain& chain, const FitResult& fit) {
    std::map<std::string, int> hist;
    for (const Draw& d : chain.draws) {
        ++hist[std::to_string(khat_one_iteration(d.Lambda))];
    }
    return json{{"k_hat", fit.k_hat},
                {"k_max", chain.hp.k_max},
                {"significant_factors", one_based(fit.significant_factor_indices)},
                {"khat_histogram", hist},
                {"warnings", fit.warnings}};
}

void write_fit_outputs(const fs::path& dir, const Chain& chain, const FitResult& fit, const CountMatrix& x, const json& config) {
    fs::create_directories(dir);
    const auto k = static_cast<std::size_t>(chain.hp.k_max);
    write_labeled_matrix(dir / "loadings.csv", {fit.lambda_mean, numbered_names("factor_", k), x.gene_names});
    write_labeled_matrix(dir / "scores.csv", {fit.scores_mean, numbered_names("factor_", k), x.cell_names});
    Eigen::MatrixXd noise(fit.sigma2_mean.size(), 2);
    noise.col(0) = fit.sigma2_mean;
    noise.col(1) = fit.psi_mean;
    write_labeled_matrix(dir / "noise.csv", {noise, {"sigma2_mean", "psi_mean"}, x.gene_names});
    write_labeled_matrix(dir / "thresholds.csv",
                         {fit.delta_mean, numbered_names("delta_", static_cast<std::size_t>(fit.delta_mean.cols())), x.gene_names});
    write_json(dir / "khat.json", khat_json(chain, fit));
    write_json(dir / "fit_meta.json", json{{"config", config},
                                           {"seed", chain.hp.seed},
                                           {"stream_id", chain.stream_id},
                                           {"n", chain.n},
                                           {"p", chain.p},
                                           {"stored_draws", chain.draws.size()}});
    write_chain(dir / "chain", chain);
}

} // namespace

void to_json(json& j, const SimulateConfig& c) {
    j = json{{"n", c.n},
             {"p", c.p},
             {"k", c.k},
             {"seed", c.seed},
             {"zero-frac", range_string(c.zero_frac)},
             {"one-frac", range_string(c.one_frac)},
             {"tail-shape", c.tail_shape},
             {"marginal-sample-size", c.marginal_sample_size},
             {"marginals-from", c.marginals_from ? c.marginals_from->string() : ""},
             {"genes-are", c.genes_are},
             {"out", c.out.string()}};
}

void to_json(json& j, const SelectGenesConfig& c) {
    j = json{{"input", c.input.string()},     {"genes-are", c.genes_are}, {"max-zero-frac", c.max_zero_frac},
             {"top-genes", c.top_genes},      {"variance", c.variance},   {"out", c.out.string()}};
}

void to_json(json& j, const FitConfig& c) {
    j = json{{"input", c.input.string()},
             {"genes-are", c.genes_are},
             {"out", c.out.string()},
             {"k-max", c.hp.k_max},
             {"m", c.hp.m},
             {"alpha", c.hp.alpha},
             {"a-sigma", c.hp.a_sigma},
             {"b-sigma", c.hp.b_sigma},
             {"iterations", c.hp.iterations},
             {"burn-in", c.hp.burn_in},
             {"thin", c.hp.thin},
             {"seed", c.hp.seed},
             {"dl-mode", to_string(c.hp.dl_mode)},
             {"scale-mode", to_string(c.hp.scale_mode)},
             {"init", to_string(c.hp.init_mode)},
             {"save-scores", c.hp.save_scores},
             {"chains", c.chains},
             {"progress", c.progress_every}};
}

void to_json(json& j, const EvaluateConfig& c) {
    std::vector<std::string> truth, fit;
    for (const auto& t : c.truth) {
        truth.push_back(t.string());
    }
    for (const auto& f : c.fit) {
        fit.push_back(f.string());
    }
    j = json{{"truth", truth}, {"fit", fit}, {"out", c.out ? c.out->string() : ""}};
}

void to_json(json& j, const PpcConfig& c) {
    j = json{{"chain", c.chain.string()}, {"input", c.input.string()}, {"genes-are", c.genes_are}, {"out", c.out.string()},
             {"quantiles", c.quantiles},  {"per-draw", c.per_draw},    {"seed", c.seed}};
}

json cmd_simulate(const SimulateConfig& cfg) {
    if (cfg.n < 2 || cfg.p < 1 || cfg.k < 1) {
        throw ArgumentError("simulate needs n >= 2, p >= 1, k >= 1");
    }
    RngStream root(cfg.seed, kSimulateStream);
    RngStream marginal_rng = root.child(1);
    RngStream truth_rng = root.child(2);
    RngStream data_rng = root.child(3);

    std::vector<EmpiricalCdf> marginals;
    if (cfg.marginals_from) {
        const CountMatrix ref = read_count_matrix(*cfg.marginals_from, parse_gene_axis(cfg.genes_are));
        if (ref.n_genes() < cfg.p) {
            throw ArgumentError("reference matrix has " + std::to_string(ref.n_genes()) + " genes, fewer than p=" +
                                std::to_string(cfg.p));
        }
        std::vector<Eigen::Index> first(static_cast<std::size_t>(cfg.p));
        for (int j = 0; j < cfg.p; ++j) {
            first[static_cast<std::size_t>(j)] = j;
        }
        marginals = marginals_from_matrix(select_columns(ref, first));
    } else {
        marginals = synthetic_marginals(cfg.p, cfg.zero_frac, cfg.one_frac, cfg.tail_shape, marginal_rng,
                                        cfg.marginal_sample_size);
    }
    const SimTruth truth = gen_truth(cfg.n, cfg.p, cfg.k, std::move(marginals), truth_rng);
    const CountMatrix x = gen_data(truth, data_rng);

    fs::create_directories(cfg.out);
    write_csv(cfg.out / "X.csv", x);
    const auto k = static_cast<std::size_t>(cfg.k);
    write_labeled_matrix(cfg.out / "U_true.csv", {truth.U_true, numbered_names("factor_", k), x.cell_names});
    write_labeled_matrix(cfg.out / "Lambda_true.csv", {truth.Lambda_true, numbered_names("factor_", k), x.gene_names});
    write_labeled_matrix(cfg.out / "sigma2_true.csv", {truth.sigma2_true, {"sigma2"}, x.gene_names});

    const double total = static_cast<double>(x.values.size());
    const json meta{{"config", cfg},
                    {"seed", cfg.seed},
                    {"k_true", cfg.k},
                    {"zero_fraction", static_cast<double>((x.values.array() == 0.0).count()) / total},
                    {"one_fraction", static_cast<double>((x.values.array() == 1.0).count()) / total}};
    write_json(cfg.out / "truth_meta.json", meta);
    return meta;
}

json cmd_select_genes(const SelectGenesConfig& cfg) {
    const CountMatrix raw = read_count_matrix(cfg.input, parse_gene_axis(cfg.genes_are));
    std::vector<Eigen::Index> passed;
    {
        // remember original positions across both filters
        CountMatrix indexed = raw;
        indexed.gene_names = numbered_names("", static_cast<std::size_t>(raw.n_genes()));
        const CountMatrix filtered = filter_genes_by_zero_fraction(indexed, cfg.max_zero_frac);
        for (const auto& name : filtered.gene_names) {
            passed.push_back(std::stoll(name) - 1);
        }
    }
    const CountMatrix filtered = select_columns(raw, passed);
    if (cfg.top_genes > filtered.n_genes()) {
        throw ArgumentError("--top-genes " + std::to_string(cfg.top_genes) + " exceeds the " +
                            std::to_string(filtered.n_genes()) + " genes left after zero filtering");
    }
    std::vector<Eigen::Index> kept;
    const CountMatrix selected = select_top_variable_genes(filtered, cfg.top_genes, parse_variance_scale(cfg.variance), &kept);

    fs::create_directories(cfg.out);
    write_csv(cfg.out / "selected.csv", selected);
    std::ofstream idx(cfg.out / "kept_genes.txt", std::ios::binary);
    for (auto k : kept) {
        idx << passed[static_cast<std::size_t>(k)] + 1 << '\t' << raw.gene_names[static_cast<std::size_t>(passed[static_cast<std::size_t>(k)])]
            << '\n';
    }
    const json meta{{"config", cfg}, {"genes_in", raw.n_genes()}, {"genes_after_zero_filter", filtered.n_genes()},
                    {"genes_out", selected.n_genes()}};
    write_json(cfg.out / "select_meta.json", meta);
    return meta;
}

json cmd_fit(const FitConfig& cfg) {
    cfg.hp.validate();
    if (cfg.chains < 1) {
        throw ArgumentError("--chains must be at least 1");
    }
    const CountMatrix x = read_count_matrix(cfg.input, parse_gene_axis(cfg.genes_are));
    const PseudoData pd = build_pseudodata(x, SegmentationScheme{cfg.hp.m});
    const json config = cfg;

    std::vector<Chain> chains(static_cast<std::size_t>(cfg.chains));
    std::vector<std::exception_ptr> errors(chains.size());
    auto run_one = [&](std::size_t c) {
        try {
            RngStream rng(cfg.hp.seed, c);
            RunOptions opts;
            opts.progress_every = cfg.progress_every;
            opts.snapshot_dir = cfg.out / ("failed_state_" + std::to_string(c + 1));
            chains[c] = run_chain(pd, cfg.hp, rng, opts);
            chains[c].gene_names = x.gene_names;
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };
    if (chains.size() == 1) {
        run_one(0);
    } else {
        std::vector<std::thread> workers;
        for (std::size_t c = 0; c < chains.size(); ++c) {
            workers.emplace_back(run_one, c);
        }
        for (auto& w : workers) {
            w.join();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    fs::create_directories(cfg.out);
    if (chains.size() == 1) {
        const FitResult fit = summarize_chain(chains[0]);
        write_fit_outputs(cfg.out, chains[0], fit, x, config);
        for (const auto& w : fit.warnings) {
            std::cerr << "warning: " << w << '\n';
        }
        return khat_json(chains[0], fit);
    }

    json pooled;
    std::vector<int> all_k;
    std::vector<FitResult> fits;
    for (std::size_t c = 0; c < chains.size(); ++c) {
        fits.push_back(summarize_chain(chains[c]));
        write_fit_outputs(cfg.out / ("chain_" + std::to_string(c + 1)), chains[c], fits.back(), x, config);
        pooled["chains"].push_back(khat_json(chains[c], fits.back()));
        for (const Draw& d : chains[c].draws) {
            all_k.push_back(khat_one_iteration(d.Lambda));
        }
    }
    pooled["k_hat_pooled"] = mode_smallest(all_k);
    // chains are not label-aligned, so agreement is measured on distances
    json agreement = json::array();
    for (std::size_t a = 0; a < fits.size(); ++a) {
        for (std::size_t b = a + 1; b < fits.size(); ++b) {
            const auto sa = take_columns(fits[a].scores_mean, fits[a].significant_factor_indices);
            const auto sb = take_columns(fits[b].scores_mean, fits[b].significant_factor_indices);
            agreement.push_back(json{{"chains", {a + 1, b + 1}}, {"scores_distance_spearman", distance_spearman(sa, sb)}});
        }
    }
    pooled["score_agreement"] = agreement;
    pooled["config"] = config;
    write_json(cfg.out / "pooled_summary.json", pooled);
    return pooled;
}

namespace {

struct PairMetrics {
    double scores = 0.0;
    double loadings = 0.0;
    double loadings_correlation_scale = 0.0;
    int k_hat = 0;
    int k_true = 0;
};

PairMetrics evaluate_pair(const fs::path& truth_dir, const fs::path& fit_dir) {
    const auto u_true = read_labeled_matrix(truth_dir / "U_true.csv", true);
    const auto l_true = read_labeled_matrix(truth_dir / "Lambda_true.csv", true);
    const auto s_true = read_labeled_matrix(truth_dir / "sigma2_true.csv", true);
    const auto scores = read_labeled_matrix(fit_dir / "scores.csv", true);
    const auto loadings = read_labeled_matrix(fit_dir / "loadings.csv", true);
    const auto noise = read_labeled_matrix(fit_dir / "noise.csv", true);
    const json khat = read_json(fit_dir / "khat.json");

    std::vector<Eigen::Index> sig;
    for (int idx : khat.at("significant_factors").get<std::vector<int>>()) {
        if (idx < 1 || idx > loadings.values.cols()) {
            throw DataError(fit_dir.string() + "/khat.json lists factor " + std::to_string(idx) + " outside the loadings");
        }
        sig.push_back(idx - 1);
    }
    if (u_true.values.rows() != scores.values.rows()) {
        throw ArgumentError("truth has " + std::to_string(u_true.values.rows()) + " cells but the fit has " +
                            std::to_string(scores.values.rows()));
    }
    if (l_true.values.rows() != loadings.values.rows()) {
        throw ArgumentError("truth has " + std::to_string(l_true.values.rows()) + " genes but the fit has " +
                            std::to_string(loadings.values.rows()));
    }
    PairMetrics m;
    m.k_hat = khat.at("k_hat").get<int>();
    m.k_true = static_cast<int>(l_true.values.cols());
    const Eigen::MatrixXd est_loadings = take_columns(loadings.values, sig);
    m.scores = distance_spearman(u_true.values, take_columns(scores.values, sig));
    m.loadings = distance_spearman(l_true.values, est_loadings);
    // compare on the copula correlation scale, where loadings are identified
    const Eigen::VectorXd psi_fit = noise.values.col(1);
    const Eigen::MatrixXd est_corr = psi_fit.array().rsqrt().matrix().asDiagonal() * est_loadings;
    m.loadings_correlation_scale =
        distance_spearman(correlation_scale_loadings(l_true.values, s_true.values.col(0)), est_corr);
    return m;
}

json mean_se(const std::vector<double>& v) {
    const auto n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) {
        mean += x / n;
    }
    double ss = 0.0;
    for (double x : v) {
        ss += (x - mean) * (x - mean);
    }
    const double se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    return json{{"mean", mean}, {"se", se}};
}

} // namespace

json cmd_evaluate(const EvaluateConfig& cfg) {
    if (cfg.truth.empty() || cfg.truth.size() != cfg.fit.size()) {
        throw ArgumentError("evaluate needs the same positive number of --truth and --fit directories");
    }
    json out;
    std::vector<double> scores, loadings, corr;
    int exact_k = 0;
    for (std::size_t r = 0; r < cfg.truth.size(); ++r) {
        const PairMetrics m = evaluate_pair(cfg.truth[r], cfg.fit[r]);
        out["replicates"].push_back(json{{"truth", cfg.truth[r].string()},
                                         {"fit", cfg.fit[r].string()},
                                         {"scores_spearman", m.scores},
                                         {"loadings_spearman", m.loadings},
                                         {"loadings_spearman_correlation_scale", m.loadings_correlation_scale},
                                         {"k_hat", m.k_hat},
                                         {"k_true", m.k_true}});
        scores.push_back(m.scores);
        loadings.push_back(m.loadings);
        corr.push_back(m.loadings_correlation_scale);
        exact_k += (m.k_hat == m.k_true) ? 1 : 0;
    }
    out["scores_spearman"] = mean_se(scores);
    out["loadings_spearman"] = mean_se(loadings);
    out["loadings_spearman_correlation_scale"] = mean_se(corr);
    out["k_hat_exact"] = exact_k;
    out["replicate_count"] = cfg.truth.size();
    out["config"] = cfg;
    if (cfg.out) {
        fs::create_directories(*cfg.out);
        write_json(*cfg.out / "metrics.json", out);
    }
    return out;
}

json cmd_ppc(const PpcConfig& cfg) {
    if (cfg.quantiles < 2 || cfg.per_draw < 1) {
        throw ArgumentError("ppc needs --quantiles >= 2 and --per-draw >= 1");
    }
    const Chain chain = read_chain(cfg.chain);
    if (chain.draws.empty()) {
        throw DataError(cfg.chain.string() + " holds no stored draws");
    }
    const CountMatrix x = read_count_matrix(cfg.input, parse_gene_axis(cfg.genes_are));
    if (x.n_genes() != chain.p) {
        throw ArgumentError("data has " + std::to_string(x.n_genes()) + " genes but the chain was fitted on " +
                            std::to_string(chain.p));
    }
    const auto cdfs = marginals_from_matrix(x);
    RngStream rng(cfg.seed, kPpcStream);
    const Eigen::MatrixXd pred = ppc_replicates(chain, cdfs, cfg.per_draw, rng);

    fs::create_directories(cfg.out);
    json summary;
    std::vector<double> ks;
    for (Eigen::Index j = 0; j < x.n_genes(); ++j) {
        const Eigen::VectorXd obs = x.values.col(j);
        const Eigen::VectorXd rep = pred.col(j);
        const std::span<const double> obs_span(obs.data(), static_cast<std::size_t>(obs.size()));
        const std::span<const double> rep_span(rep.data(), static_cast<std::size_t>(rep.size()));
        const auto table = qq_table(obs_span, rep_span, cfg.quantiles);
        LabeledMatrix qq{Eigen::MatrixXd(static_cast<Eigen::Index>(table.size()), 2), {"observed_quantile", "predictive_quantile"}, {}};
        for (std::size_t q = 0; q < table.size(); ++q) {
            qq.values(static_cast<Eigen::Index>(q), 0) = table[q].first;
            qq.values(static_cast<Eigen::Index>(q), 1) = table[q].second;
        }
        const std::string& name = x.gene_names[static_cast<std::size_t>(j)];
        write_labeled_matrix(cfg.out / ("qq_gene_" + safe_file_stem(name) + ".csv"), qq);
        const double d = ks_statistic(obs_span, rep_span);
        ks.push_back(d);
        summary["genes"].push_back(json{{"gene", name}, {"ks", d}});
    }
    std::vector<double> sorted = ks;
    std::sort(sorted.begin(), sorted.end());
    summary["median_ks"] = sample_quantile(sorted, 0.5);
    summary["max_ks"] = sorted.back();
    summary["predictive_cells"] = pred.rows();
    summary["config"] = cfg;
    write_json(cfg.out / "ppc_summary.json", summary);
    return summary;
}

namespace {

// Turns a flat JSON object into "--key value" tokens.
std::vector<std::string> config_tokens(const json& cfg) {
    if (!cfg.is_object()) {
        throw ArgumentError("config file must hold a JSON object of flag names to values");
    }
    std::vector<std::string> tokens;
    for (const auto& [key, value] : cfg.items()) {
        const std::string flag = "--" + key;
        auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        if (value.is_boolean()) {
            if (value.get<bool>()) {
                tokens.push_back(flag);
            }
        } else if (value.is_array()) {
            for (const auto& item : value) {
                tokens.push_back(flag);
                tokens.push_back(scalar(item));
            }
        } else if (!value.is_null()) {
            tokens.push_back(flag);
            tokens.push_back(scalar(value));
        }
    }
    return tokens;
}

// Config-file values are spliced in right after the subcommand so that
// explicit flags, which come later, win.
std::vector<std::string> splice_config(const std::vector<std::string>& args) {
    std::vector<std::string> rest;
    std::optional<std::string> config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) {
                throw ArgumentError("--config needs a file path");
            }
            config_path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (!config_path || rest.size() < 2) {
        return rest;
    }
    const auto tokens = config_tokens(read_json(*config_path));
    std::vector<std::string> out{rest[0], rest[1]};
    out.insert(out.end(), tokens.begin(), tokens.end());
    out.insert(out.end(), rest.begin() + 2, rest.end());
    return out;
}

} // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Segmented Gaussian copula factor model for inflated low counts"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--config", "JSON file of flag defaults (flags given on the command line win)");

    SimulateConfig sim;
    std::string sim_zero = range_string(sim.zero_frac);
    std::string sim_one = range_string(sim.one_frac);
    std::string sim_ref;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset with known factor structure");
    simulate->add_option("--n", sim.n, "cells")->capture_default_str();
    simulate->add_option("--p", sim.p, "genes")->capture_default_str();
    simulate->add_option("--k", sim.k, "true factors")->capture_default_str();
    simulate->add_option("--seed", sim.seed)->capture_default_str();
    simulate->add_option("--zero-frac", sim_zero, "per-gene zero share, value or lo:hi")->capture_default_str();
    simulate->add_option("--one-frac", sim_one, "per-gene one share, value or lo:hi")->capture_default_str();
    simulate->add_option("--tail-shape", sim.tail_shape, "log-normal shape of counts above one")->capture_default_str();
    simulate->add_option("--marginal-sample-size", sim.marginal_sample_size)->capture_default_str();
    simulate->add_option("--marginals-from", sim_ref, "reference count matrix whose first p genes supply the marginals");
    simulate->add_option("--genes-are", sim.genes_are, "gene axis of a .mtx reference: rows|cols")->capture_default_str();
    simulate->add_option("--out", sim.out)->capture_default_str();

    SelectGenesConfig sel;
    auto* select = app.add_subcommand("select-genes", "Zero-fraction filter followed by top-variance selection");
    select->add_option("--input", sel.input)->required();
    select->add_option("--genes-are", sel.genes_are, "gene axis of a .mtx input: rows|cols")->capture_default_str();
    select->add_option("--max-zero-frac", sel.max_zero_frac)->capture_default_str();
    select->add_option("--top-genes", sel.top_genes)->capture_default_str();
    select->add_option("--variance", sel.variance, "raw|log1p")->capture_default_str();
    select->add_option("--out", sel.out)->capture_default_str();

    FitConfig fitc;
    fitc.hp.iterations = 10000;
    fitc.hp.burn_in = 5000;
    std::string dl_mode = to_string(fitc.hp.dl_mode);
    std::string scale_mode = to_string(fitc.hp.scale_mode);
    std::string init_mode = to_string(fitc.hp.init_mode);
    auto* fit = app.add_subcommand("fit", "Run the Gibbs sampler and summarize the posterior");
    fit->add_option("--input", fitc.input)->required();
    fit->add_option("--genes-are", fitc.genes_are, "gene axis of a .mtx input: rows|cols")->capture_default_str();
    fit->add_option("--out", fitc.out)->capture_default_str();
    fit->add_option("--k-max", fitc.hp.k_max)->capture_default_str();
    fit->add_option("--m", fitc.hp.m, "largest inflated count")->capture_default_str();
    fit->add_option("--alpha", fitc.hp.alpha, "Dirichlet-Laplace concentration")->capture_default_str();
    fit->add_option("--a-sigma", fitc.hp.a_sigma)->capture_default_str();
    fit->add_option("--b-sigma", fitc.hp.b_sigma)->capture_default_str();
    fit->add_option("--iterations", fitc.hp.iterations)->capture_default_str();
    fit->add_option("--burn-in", fitc.hp.burn_in)->capture_default_str();
    fit->add_option("--thin", fitc.hp.thin)->capture_default_str();
    fit->add_option("--seed", fitc.hp.seed)->capture_default_str();
    fit->add_option("--dl-mode", dl_mode, "elementwise|columnwise (columnwise is experimental)")->capture_default_str();
    fit->add_option("--scale-mode", scale_mode, "identity|working")->capture_default_str();
    fit->add_option("--init", init_mode, "spectral|prior starting point")->capture_default_str();
    fit->add_flag("--save-scores", fitc.hp.save_scores, "store score draws in the chain");
    fit->add_option("--chains", fitc.chains)->capture_default_str();
    fit->add_option("--progress", fitc.progress_every, "report every N sweeps on stderr (0 = quiet)")->capture_default_str();

    EvaluateConfig ev;
    std::vector<std::string> ev_truth, ev_fit;
    std::string ev_out;
    auto* evaluate = app.add_subcommand("evaluate", "Distance-Spearman metrics of fits against simulation truth");
    evaluate->add_option("--truth", ev_truth, "simulation output directories")->required()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    evaluate->add_option("--fit", ev_fit, "fit output directories, paired with --truth")->required()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    evaluate->add_option("--out", ev_out, "directory for metrics.json (stdout only when omitted)");

    PpcConfig ppc;
    auto* ppcc = app.add_subcommand("ppc", "Posterior predictive Q-Q tables per gene");
    ppcc->add_option("--chain", ppc.chain, "chain directory written by fit")->required();
    ppcc->add_option("--input", ppc.input, "the count matrix that was fitted")->required();
    ppcc->add_option("--genes-are", ppc.genes_are)->capture_default_str();
    ppcc->add_option("--out", ppc.out)->capture_default_str();
    ppcc->add_option("--quantiles", ppc.quantiles)->capture_default_str();
    ppcc->add_option("--per-draw", ppc.per_draw, "predictive cells per stored draw")->capture_default_str();
    ppcc->add_option("--seed", ppc.seed)->capture_default_str();

    try {
        const auto args = splice_config(raw_args);
        std::vector<const char*> argv;
        argv.reserve(args.size());
        for (const auto& a : args) {
            argv.push_back(a.c_str());
        }
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? 0 : 2;
        }

        json result;
        if (*simulate) {
            sim.zero_frac = parse_range(sim_zero);
            sim.one_frac = parse_range(sim_one);
            if (!sim_ref.empty()) {
                sim.marginals_from = sim_ref;
            }
            result = cmd_simulate(sim);
        } else if (*select) {
            result = cmd_select_genes(sel);
        } else if (*fit) {
            fitc.hp.dl_mode = parse_dl_mode(dl_mode);
            fitc.hp.scale_mode = parse_scale_mode(scale_mode);
            fitc.hp.init_mode = parse_init_mode(init_mode);
            result = cmd_fit(fitc);
        } else if (*evaluate) {
            for (const auto& t : ev_truth) {
                ev.truth.emplace_back(t);
            }
            for (const auto& f : ev_fit) {
                ev.fit.emplace_back(f);
            }
            if (!ev_out.empty()) {
                ev.out = ev_out;
            }
            result = cmd_evaluate(ev);
        } else if (*ppcc) {
            result = cmd_ppc(ppc);
        }
        out << result.dump(2) << '\n';
        return 0;
    } catch (const ArgumentError& e) {
        err << "argument error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return 3;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 4;
    }
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace scfm
