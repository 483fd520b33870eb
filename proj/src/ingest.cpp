#include "scfm/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <utility>

#include "scfm/csv.hpp"
#include "scfm/errors.hpp"

namespace scfm {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

DataError parse_error(std::size_t lineno, const std::string& msg) {
    return DataError("line " + std::to_string(lineno) + ": " + msg);
}

} // namespace

void validate_count_matrix(const CountMatrix& m) {
    if (m.n_cells() < 2) {
        throw DataError("count matrix needs at least 2 cells, got " + std::to_string(m.n_cells()));
    }
    if (m.n_genes() < 1) {
        throw DataError("count matrix needs at least 1 gene");
    }
    for (Eigen::Index j = 0; j < m.n_genes(); ++j) {
        for (Eigen::Index i = 0; i < m.n_cells(); ++i) {
            const double v = m.values(i, j);
            if (!std::isfinite(v)) {
                throw DataError("missing or non-finite entry at cell " + std::to_string(i + 1) + ", gene " + std::to_string(j + 1));
            }
            if (v < 0.0) {
                throw DataError("negative entry at cell " + std::to_string(i + 1) + ", gene " + std::to_string(j + 1));
            }
        }
    }
    if (m.gene_names.size() != static_cast<std::size_t>(m.n_genes()) ||
        m.cell_names.size() != static_cast<std::size_t>(m.n_cells())) {
        throw DataError("gene/cell names do not match the matrix shape");
    }
}

void fill_default_names(CountMatrix& m) {
    if (m.gene_names.size() != static_cast<std::size_t>(m.n_genes())) {
        m.gene_names = numbered_names("gene_", static_cast<std::size_t>(m.n_genes()));
    }
    if (m.cell_names.size() != static_cast<std::size_t>(m.n_cells())) {
        m.cell_names = numbered_names("cell_", static_cast<std::size_t>(m.n_cells()));
    }
}

GeneAxis parse_gene_axis(const std::string& text) {
    const auto t = lower(text);
    if (t == "rows") {
        return GeneAxis::Rows;
    }
    if (t == "cols" || t == "columns") {
        return GeneAxis::Cols;
    }
    throw ArgumentError("genes axis must be 'rows' or 'cols', got '" + text + "'");
}

CountMatrix read_matrix_market(std::istream& in, GeneAxis genes) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) {
        throw parse_error(1, "missing MatrixMarket header");
    }
    ++lineno;
    {
        std::istringstream hs(lower(line));
        std::string banner, object, format, field, symmetry;
        hs >> banner >> object >> format >> field >> symmetry;
        if (banner != "%%matrixmarket" || object != "matrix") {
            throw parse_error(lineno, "malformed header, expected '%%MatrixMarket matrix ...'");
        }
        if (format != "coordinate") {
            throw parse_error(lineno, "only coordinate format is supported");
        }
        if (field != "integer" && field != "real") {
            throw parse_error(lineno, "unsupported field type '" + field + "'");
        }
        if (symmetry != "general") {
            throw parse_error(lineno, "only general symmetry is supported");
        }
    }

    long long nrow = -1, ncol = -1, nnz = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '%') {
            continue;
        }
        std::istringstream ss(line);
        std::string extra;
        if (!(ss >> nrow >> ncol >> nnz) || (ss >> extra) || nrow < 0 || ncol < 0 || nnz < 0) {
            throw parse_error(lineno, "malformed size line");
        }
        break;
    }
    if (nrow < 0) {
        throw parse_error(lineno, "missing size line");
    }

    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(nrow, ncol);
    long long seen = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '%' || line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream ss(line);
        long long r = 0, c = 0;
        double v = 0.0;
        std::string extra;
        if (!(ss >> r >> c >> v) || (ss >> extra)) {
            throw parse_error(lineno, "malformed entry");
        }
        if (r < 1 || r > nrow) {
            throw parse_error(lineno, "row index out of range");
        }
        if (c < 1 || c > ncol) {
            throw parse_error(lineno, "column index out of range");
        }
        if (!std::isfinite(v) || v < 0.0) {
            throw parse_error(lineno, "negative entry");
        }
        dense(r - 1, c - 1) += v;
        ++seen;
    }
    if (seen != nnz) {
        throw parse_error(lineno, "expected " + std::to_string(nnz) + " entries, found " + std::to_string(seen));
    }

    CountMatrix m;
    m.values = (genes == GeneAxis::Rows) ? Eigen::MatrixXd(dense.transpose()) : dense;
    fill_default_names(m);
    validate_count_matrix(m);
    return m;
}

CountMatrix read_matrix_market(const std::filesystem::path& path, GeneAxis genes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    try {
        return read_matrix_market(in, genes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

CountMatrix read_csv(std::istream& in, bool has_header) {
    CountMatrix m;
    std::string line;
    std::size_t lineno = 0;
    std::size_t width = 0;
    std::vector<double> data;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") {
            continue;
        }
        auto fields = split_csv_record(line);
        if (first && has_header) {
            m.gene_names = fields;
            width = fields.size();
            first = false;
            continue;
        }
        if (first) {
            width = fields.size();
            first = false;
        }
        if (fields.size() != width) {
            throw DataError("ragged row at line " + std::to_string(lineno));
        }
        for (const auto& f : fields) {
            double v = 0.0;
            if (!parse_double(f, v) || !std::isfinite(v)) {
                throw parse_error(lineno, "non-numeric cell '" + f + "'");
            }
            if (v < 0.0) {
                throw parse_error(lineno, "negative entry");
            }
            data.push_back(v);
        }
    }
    const auto p = static_cast<Eigen::Index>(width);
    const auto n = static_cast<Eigen::Index>(p == 0 ? 0 : data.size() / width);
    m.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data.data(), n, p);
    fill_default_names(m);
    validate_count_matrix(m);
    return m;
}

CountMatrix read_csv(const std::filesystem::path& path, bool has_header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    try {
        return read_csv(in, has_header);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_csv(std::ostream& out, const CountMatrix& m) {
    for (std::size_t j = 0; j < m.gene_names.size(); ++j) {
        out << (j ? "," : "") << quote_csv_field(m.gene_names[j]);
    }
    out << '\n';
    for (Eigen::Index i = 0; i < m.n_cells(); ++i) {
        for (Eigen::Index j = 0; j < m.n_genes(); ++j) {
            out << (j ? "," : "") << format_double(m.values(i, j));
        }
        out << '\n';
    }
}

void write_csv(const std::filesystem::path& path, const CountMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    write_csv(out, m);
}

CountMatrix read_count_matrix(const std::filesystem::path& path, GeneAxis mtx_genes) {
    if (lower(path.extension().string()) == ".mtx") {
        return read_matrix_market(path, mtx_genes);
    }
    return read_csv(path, true);
}

CountMatrix select_columns(const CountMatrix& m, const std::vector<Eigen::Index>& cols) {
    CountMatrix out;
    out.values.resize(m.n_cells(), static_cast<Eigen::Index>(cols.size()));
    out.cell_names = m.cell_names;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out.values.col(static_cast<Eigen::Index>(c)) = m.values.col(cols[c]);
        out.gene_names.push_back(m.gene_names[static_cast<std::size_t>(cols[c])]);
    }
    return out;
}

CountMatrix filter_genes_by_zero_fraction(const CountMatrix& m, double max_zero_frac) {
    if (!(max_zero_frac >= 0.0 && max_zero_frac <= 1.0)) {
        throw ArgumentError("max zero fraction must lie in [0, 1]");
    }
    std::vector<Eigen::Index> keep;
    const auto n = static_cast<double>(m.n_cells());
    for (Eigen::Index j = 0; j < m.n_genes(); ++j) {
        const auto zeros = (m.values.col(j).array() == 0.0).count();
        if (static_cast<double>(zeros) / n <= max_zero_frac) {
            keep.push_back(j);
        }
    }
    return select_columns(m, keep);
}

VarianceScale parse_variance_scale(const std::string& text) {
    const auto t = lower(text);
    if (t == "raw") {
        return VarianceScale::Raw;
    }
    if (t == "log1p") {
        return VarianceScale::Log1p;
    }
    throw ArgumentError("variance scale must be 'raw' or 'log1p', got '" + text + "'");
}

Eigen::VectorXd gene_variances(const CountMatrix& m, VarianceScale scale) {
    const Eigen::MatrixXd x = (scale == VarianceScale::Log1p) ? Eigen::MatrixXd(m.values.array().log1p()) : m.values;
    const auto n = static_cast<double>(x.rows());
    Eigen::VectorXd var(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double mean = x.col(j).mean();
        var(j) = (x.col(j).array() - mean).square().sum() / (n - 1.0);
    }
    return var;
}

CountMatrix select_top_variable_genes(const CountMatrix& m, Eigen::Index p_keep, VarianceScale scale,
                                      std::vector<Eigen::Index>* kept) {
    if (p_keep < 1 || p_keep > m.n_genes()) {
        throw ArgumentError("cannot keep " + std::to_string(p_keep) + " genes out of " + std::to_string(m.n_genes()));
    }
    const Eigen::VectorXd var = gene_variances(m, scale);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m.n_genes()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return var(a) > var(b); });
    order.resize(static_cast<std::size_t>(p_keep));
    if (kept != nullptr) {
        *kept = order;
    }
    return select_columns(m, order);
}

} // namespace scfm
