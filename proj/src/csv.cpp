#include "scfm/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "scfm/errors.hpp"

namespace scfm {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_record(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string quote_csv_field(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) {
        return field;
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

bool parse_double(const std::string& text, double& out) {
    std::size_t begin = text.find_first_not_of(" \t");
    std::size_t end = text.find_last_not_of(" \t");
    if (begin == std::string::npos) {
        return false;
    }
    const std::string trimmed = text.substr(begin, end - begin + 1);
    char* stop = nullptr;
    errno = 0;
    out = std::strtod(trimmed.c_str(), &stop);
    return stop == trimmed.c_str() + trimmed.size() && errno != ERANGE;
}

void write_labeled_matrix(std::ostream& out, const LabeledMatrix& m) {
    const bool labels = !m.row_names.empty();
    if (labels) {
        out << "name";
    }
    for (std::size_t c = 0; c < m.col_names.size(); ++c) {
        if (labels || c > 0) {
            out << ',';
        }
        out << quote_csv_field(m.col_names[c]);
    }
    out << '\n';
    for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
        if (labels) {
            out << quote_csv_field(m.row_names[static_cast<std::size_t>(r)]);
        }
        for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
            if (labels || c > 0) {
                out << ',';
            }
            out << format_double(m.values(r, c));
        }
        out << '\n';
    }
}

void write_labeled_matrix(const std::filesystem::path& path, const LabeledMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    write_labeled_matrix(out, m);
}

LabeledMatrix read_labeled_matrix(const std::filesystem::path& path, bool has_row_names) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    LabeledMatrix m;
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path.string() + ": empty file");
    }
    auto header = split_csv_record(line);
    if (has_row_names && !header.empty()) {
        header.erase(header.begin());
    }
    m.col_names = header;
    const std::size_t ncol = header.size();
    std::vector<double> data;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") {
            continue;
        }
        auto fields = split_csv_record(line);
        if (has_row_names) {
            m.row_names.push_back(fields.front());
            fields.erase(fields.begin());
        }
        if (fields.size() != ncol) {
            throw DataError(path.string() + ": ragged row at line " + std::to_string(lineno));
        }
        for (const auto& f : fields) {
            double v = 0.0;
            if (!parse_double(f, v)) {
                throw DataError(path.string() + ": non-numeric cell '" + f + "' at line " + std::to_string(lineno));
            }
            data.push_back(v);
        }
    }
    const auto nrow = static_cast<Eigen::Index>(ncol == 0 ? 0 : data.size() / ncol);
    m.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        data.data(), nrow, static_cast<Eigen::Index>(ncol));
    return m;
}

std::vector<std::string> numbered_names(const std::string& prefix, std::size_t count) {
    std::vector<std::string> names;
    names.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        names.push_back(prefix + std::to_string(i + 1));
    }
    return names;
}

} // namespace scfm
