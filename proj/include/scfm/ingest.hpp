#ifndef SCFM_INGEST_HPP
#define SCFM_INGEST_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace scfm {

/**
 * Cells-by-genes matrix of nonnegative values (counts, possibly continuous
 * above the inflation cap). Readers guarantee at least two cells, one gene
 * and no negative or missing entries; the gene filters may leave zero genes.
 */
struct CountMatrix {
    Eigen::MatrixXd values; // n x p
    std::vector<std::string> gene_names;
    std::vector<std::string> cell_names;

    Eigen::Index n_cells() const { return values.rows(); }
    Eigen::Index n_genes() const { return values.cols(); }
};

/// Throws DataError when the matrix breaks the reader-level invariants.
void validate_count_matrix(const CountMatrix& m);

/// Fills missing names with gene_1.. / cell_1.. so they match the shape.
void fill_default_names(CountMatrix& m);

/// Layout of a MatrixMarket file: 10x writes genes as rows.
enum class GeneAxis { Rows, Cols };

GeneAxis parse_gene_axis(const std::string& text);

/// Dense matrix from a `coordinate integer|real general` MatrixMarket file.
/// Unlisted coordinates are zero, duplicated coordinates are summed.
CountMatrix read_matrix_market(std::istream& in, GeneAxis genes);
CountMatrix read_matrix_market(const std::filesystem::path& path, GeneAxis genes);

/// Rectangular numeric CSV, one row per cell. A header row names the genes.
CountMatrix read_csv(std::istream& in, bool has_header);
CountMatrix read_csv(const std::filesystem::path& path, bool has_header);

/// Writes gene names as a header followed by one row per cell.
void write_csv(std::ostream& out, const CountMatrix& m);
void write_csv(const std::filesystem::path& path, const CountMatrix& m);

/// Picks the reader from the extension (.mtx or anything else as CSV with header).
CountMatrix read_count_matrix(const std::filesystem::path& path, GeneAxis mtx_genes);

/// Keeps the columns whose fraction of exact zeros is at most `max_zero_frac`.
CountMatrix filter_genes_by_zero_fraction(const CountMatrix& m, double max_zero_frac);

enum class VarianceScale { Raw, Log1p };

VarianceScale parse_variance_scale(const std::string& text);

/// Unbiased per-column sample variance, on raw counts or on log1p(counts).
Eigen::VectorXd gene_variances(const CountMatrix& m, VarianceScale scale = VarianceScale::Raw);

/**
 * Keeps the `p_keep` most variable genes, ordered by descending variance with
 * ties resolved toward the earlier column. `kept` receives original indices.
 */
CountMatrix select_top_variable_genes(const CountMatrix& m, Eigen::Index p_keep,
                                      VarianceScale scale = VarianceScale::Raw,
                                      std::vector<Eigen::Index>* kept = nullptr);

/// Column subset in the given order; names follow their columns.
CountMatrix select_columns(const CountMatrix& m, const std::vector<Eigen::Index>& cols);

} // namespace scfm

#endif
