#include "scfm/model.hpp"

#include <cmath>
#include <fstream>

#include "scfm/csv.hpp"
#include "scfm/errors.hpp"
#include "scfm/normal.hpp"

namespace scfm {

namespace fs = std::filesystem;

std::string to_string(DlMode mode) {
    return mode == DlMode::Elementwise ? "elementwise" : "columnwise";
}

std::string to_string(ScaleMode mode) {
    return mode == ScaleMode::Identity ? "identity" : "working";
}

std::string to_string(InitMode mode) {
    return mode == InitMode::Prior ? "prior" : "spectral";
}

InitMode parse_init_mode(const std::string& text) {
    if (text == "prior") {
        return InitMode::Prior;
    }
    if (text == "spectral") {
        return InitMode::Spectral;
    }
    throw ArgumentError("init mode must be 'prior' or 'spectral', got '" + text + "'");
}

DlMode parse_dl_mode(const std::string& text) {
    if (text == "elementwise") {
        return DlMode::Elementwise;
    }
    if (text == "columnwise") {
        return DlMode::Columnwise;
    }
    throw ArgumentError("dl mode must be 'elementwise' or 'columnwise', got '" + text + "'");
}

ScaleMode parse_scale_mode(const std::string& text) {
    if (text == "identity") {
        return ScaleMode::Identity;
    }
    if (text == "working") {
        return ScaleMode::Working;
    }
    throw ArgumentError("scale mode must be 'identity' or 'working', got '" + text + "'");
}

void Hyperparams::validate() const {
    if (k_max < 1 || k_max > 64) {
        throw ArgumentError("k_max must lie in [1, 64], got " + std::to_string(k_max));
    }
    if (m < 0) {
        throw ArgumentError("m must be nonnegative");
    }
    if (!(alpha > 0.0) || !(a_sigma > 0.0) || !(b_sigma > 0.0)) {
        throw ArgumentError("alpha, a_sigma and b_sigma must be positive");
    }
    if (iterations < 1 || thin < 1 || burn_in < 0) {
        throw ArgumentError("iterations and thin must be positive, burn-in nonnegative");
    }
    if (burn_in >= iterations) {
        throw ArgumentError("burn-in (" + std::to_string(burn_in) + ") must be smaller than iterations (" +
                            std::to_string(iterations) + ")");
    }
}

void to_json(nlohmann::json& j, const Hyperparams& hp) {
    j = nlohmann::json{{"k_max", hp.k_max},
                       {"m", hp.m},
                       {"alpha", hp.alpha},
                       {"a_sigma", hp.a_sigma},
                       {"b_sigma", hp.b_sigma},
                       {"iterations", hp.iterations},
                       {"burn_in", hp.burn_in},
                       {"thin", hp.thin},
                       {"seed", hp.seed},
                       {"dl_mode", to_string(hp.dl_mode)},
                       {"scale_mode", to_string(hp.scale_mode)},
                       {"init_mode", to_string(hp.init_mode)},
                       {"save_scores", hp.save_scores}};
}

void from_json(const nlohmann::json& j, Hyperparams& hp) {
    hp.k_max = j.at("k_max").get<int>();
    hp.m = j.at("m").get<int>();
    hp.alpha = j.at("alpha").get<double>();
    hp.a_sigma = j.at("a_sigma").get<double>();
    hp.b_sigma = j.at("b_sigma").get<double>();
    hp.iterations = j.at("iterations").get<int>();
    hp.burn_in = j.at("burn_in").get<int>();
    hp.thin = j.at("thin").get<int>();
    hp.seed = j.at("seed").get<std::uint64_t>();
    hp.dl_mode = parse_dl_mode(j.at("dl_mode").get<std::string>());
    hp.scale_mode = parse_scale_mode(j.at("scale_mode").get<std::string>());
    hp.init_mode = parse_init_mode(j.value("init_mode", std::string("spectral")));
    hp.save_scores = j.value("save_scores", false);
}

double threshold_ceiling(Eigen::Index n) {
    const auto nn = static_cast<double>(n);
    return normal_quantile(nn / (nn + 1.0));
}

double threshold_floor() {
    return normal_quantile(kProbClamp);
}

Eigen::VectorXd compute_psi(const Eigen::MatrixXd& Lambda, const Eigen::VectorXd& sigma2) {
    return Lambda.rowwise().squaredNorm() + sigma2;
}

Eigen::MatrixXd compute_correlation(const Eigen::MatrixXd& Lambda, const Eigen::VectorXd& sigma2) {
    const Eigen::VectorXd inv_sd = compute_psi(Lambda, sigma2).array().rsqrt();
    Eigen::MatrixXd cov = Lambda * Lambda.transpose();
    cov.diagonal() += sigma2;
    Eigen::MatrixXd omega = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
    // exact unit diagonal and symmetry, independent of rounding in the products
    omega = 0.5 * (omega + omega.transpose()).eval();
    omega.diagonal().setOnes();
    return omega;
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::RowVectorXd flatten(const Eigen::MatrixXd& m) {
    RowMajor rm = m;
    return Eigen::Map<const Eigen::RowVectorXd>(rm.data(), rm.size());
}

Eigen::MatrixXd unflatten(const Eigen::RowVectorXd& row, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const RowMajor>(row.data(), rows, cols);
}

std::vector<std::string> pair_names(const std::string& prefix, Eigen::Index rows, Eigen::Index cols) {
    std::vector<std::string> names;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            names.push_back(prefix + std::to_string(r + 1) + "_" + std::to_string(c + 1));
        }
    }
    return names;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    out << j.dump(2) << '\n';
}

} // namespace

void write_chain(const fs::path& dir, const Chain& chain) {
    fs::create_directories(dir);
    const auto ndraw = static_cast<Eigen::Index>(chain.draws.size());
    const Eigen::Index k = chain.hp.k_max;
    const Eigen::Index levels = chain.hp.m + 1;

    LabeledMatrix lambda{Eigen::MatrixXd(ndraw, chain.p * k), pair_names("lambda_", chain.p, k), {}};
    LabeledMatrix sigma2{Eigen::MatrixXd(ndraw, chain.p), numbered_names("sigma2_", static_cast<std::size_t>(chain.p)), {}};
    LabeledMatrix delta{Eigen::MatrixXd(ndraw, chain.p * levels), pair_names("delta_", chain.p, levels), {}};
    LabeledMatrix tau{Eigen::MatrixXd(ndraw, 1), {"tau"}, {}};
    const bool with_u = chain.hp.save_scores && ndraw > 0 && chain.draws.front().U.has_value();
    LabeledMatrix scores;
    if (with_u) {
        scores = {Eigen::MatrixXd(ndraw, chain.n * k), pair_names("u_", chain.n, k), {}};
    }
    for (Eigen::Index s = 0; s < ndraw; ++s) {
        const Draw& d = chain.draws[static_cast<std::size_t>(s)];
        lambda.values.row(s) = flatten(d.Lambda);
        sigma2.values.row(s) = d.sigma2.transpose();
        delta.values.row(s) = flatten(d.delta);
        tau.values(s, 0) = d.tau;
        if (with_u) {
            scores.values.row(s) = flatten(*d.U);
        }
    }
    write_labeled_matrix(dir / "lambda_draws.csv", lambda);
    write_labeled_matrix(dir / "sigma2_draws.csv", sigma2);
    write_labeled_matrix(dir / "delta_draws.csv", delta);
    write_labeled_matrix(dir / "tau_draws.csv", tau);
    if (with_u) {
        write_labeled_matrix(dir / "scores_draws.csv", scores);
    }

    LabeledMatrix khat{Eigen::MatrixXd(static_cast<Eigen::Index>(chain.k_hat_per_iter.size()), 2), {"iteration", "k_hat"}, {}};
    for (std::size_t t = 0; t < chain.k_hat_per_iter.size(); ++t) {
        khat.values(static_cast<Eigen::Index>(t), 0) = static_cast<double>(t + 1);
        khat.values(static_cast<Eigen::Index>(t), 1) = chain.k_hat_per_iter[t];
    }
    write_labeled_matrix(dir / "khat_trace.csv", khat);
    write_labeled_matrix(dir / "scores_mean.csv",
                         {chain.scores_mean, numbered_names("factor_", static_cast<std::size_t>(k)), {}});

    nlohmann::json meta;
    meta["hyperparams"] = chain.hp;
    meta["seed"] = chain.hp.seed;
    meta["stream_id"] = chain.stream_id;
    meta["n"] = chain.n;
    meta["p"] = chain.p;
    meta["draws"] = ndraw;
    meta["gene_names"] = chain.gene_names;
    write_json(dir / "meta.json", meta);
    write_json(dir / "timing.json", nlohmann::json{{"wall_seconds", chain.wall_seconds}});
}

Chain read_chain(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw DataError("chain directory " + dir.string() + " does not exist");
    }
    std::ifstream meta_in(dir / "meta.json");
    if (!meta_in) {
        throw DataError("chain directory " + dir.string() + " has no meta.json");
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(dir.string() + "/meta.json: " + e.what());
    }
    Chain chain;
    chain.hp = meta.at("hyperparams").get<Hyperparams>();
    chain.stream_id = meta.at("stream_id").get<std::uint64_t>();
    chain.n = meta.at("n").get<Eigen::Index>();
    chain.p = meta.at("p").get<Eigen::Index>();
    chain.gene_names = meta.at("gene_names").get<std::vector<std::string>>();
    const auto ndraw = meta.at("draws").get<Eigen::Index>();
    const Eigen::Index k = chain.hp.k_max;
    const Eigen::Index levels = chain.hp.m + 1;

    const auto lambda = read_labeled_matrix(dir / "lambda_draws.csv", false);
    const auto sigma2 = read_labeled_matrix(dir / "sigma2_draws.csv", false);
    const auto delta = read_labeled_matrix(dir / "delta_draws.csv", false);
    const auto tau = read_labeled_matrix(dir / "tau_draws.csv", false);
    if (lambda.values.rows() != ndraw || lambda.values.cols() != chain.p * k || sigma2.values.rows() != ndraw ||
        sigma2.values.cols() != chain.p || delta.values.rows() != ndraw || delta.values.cols() != chain.p * levels ||
        tau.values.rows() != ndraw) {
        throw DataError(dir.string() + ": draw files do not match meta.json dimensions");
    }
    std::optional<LabeledMatrix> scores;
    if (fs::exists(dir / "scores_draws.csv")) {
        scores = read_labeled_matrix(dir / "scores_draws.csv", false);
    }
    for (Eigen::Index s = 0; s < ndraw; ++s) {
        Draw d;
        d.Lambda = unflatten(lambda.values.row(s), chain.p, k);
        d.sigma2 = sigma2.values.row(s).transpose();
        d.delta = unflatten(delta.values.row(s), chain.p, levels);
        d.tau = tau.values(s, 0);
        if (scores) {
            d.U = unflatten(scores->values.row(s), chain.n, k);
        }
        chain.draws.push_back(std::move(d));
    }
    const auto khat = read_labeled_matrix(dir / "khat_trace.csv", false);
    for (Eigen::Index t = 0; t < khat.values.rows(); ++t) {
        chain.k_hat_per_iter.push_back(static_cast<int>(khat.values(t, 1)));
    }
    chain.scores_mean = read_labeled_matrix(dir / "scores_mean.csv", false).values;
    if (fs::exists(dir / "timing.json")) {
        std::ifstream tin(dir / "timing.json");
        chain.wall_seconds = nlohmann::json::parse(tin).value("wall_seconds", 0.0);
    }
    return chain;
}

} // namespace scfm
