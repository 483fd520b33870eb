#ifndef SCFM_CSV_HPP
#define SCFM_CSV_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace scfm {

/// Shortest-safe round-trip text for a double ("%.17g", integers print bare).
std::string format_double(double v);

/// Splits one CSV record, honouring double-quoted fields with "" escapes.
std::vector<std::string> split_csv_record(const std::string& line);

/// Quotes a field only when it contains a comma, quote or line break.
std::string quote_csv_field(const std::string& field);

/// Parses a full-string double; returns false on trailing garbage.
bool parse_double(const std::string& text, double& out);

/// A numeric table with a header row and an optional leading label column.
struct LabeledMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> col_names;
    std::vector<std::string> row_names; // empty when the file has no label column
};

void write_labeled_matrix(const std::filesystem::path& path, const LabeledMatrix& m);
void write_labeled_matrix(std::ostream& out, const LabeledMatrix& m);

/// Reads a table written by write_labeled_matrix. When `has_row_names` the first
/// column holds labels and the header's first cell is ignored.
LabeledMatrix read_labeled_matrix(const std::filesystem::path& path, bool has_row_names);

/// Default names like "factor_1", "factor_2", ...
std::vector<std::string> numbered_names(const std::string& prefix, std::size_t count);

} // namespace scfm

#endif
