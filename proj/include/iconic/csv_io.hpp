#ifndef ICONIC_CSV_IO_HPP
#define ICONIC_CSV_IO_HPP

#include "iconic/core.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace iconic {

namespace csv {

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("format_double: to_chars failed");
    return std::string(buf, ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

/// A data line with its 1-based line number in the source file.
struct Line {
    std::size_t number;
    std::string text;
};

/// Reads all non-blank lines that are not `#` comments.
inline std::vector<Line> read_data_lines(std::istream& in) {
    std::vector<Line> lines;
    std::string raw;
    std::size_t n = 0;
    while (std::getline(in, raw)) {
        ++n;
        auto v = trim_cr(raw);
        if (v.empty() || v.front() == '#') continue;
        lines.push_back({n, std::string(v)});
    }
    return lines;
}

inline std::vector<Line> read_data_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return read_data_lines(in);
}

/// Rejects identifiers that would break the comma-separated layout.
inline void check_field(const std::string& s, std::string_view what) {
    if (s.find_first_of(",\n\r") != std::string::npos) {
        throw DataError(std::string(what) + " '" + s + "' contains a separator character");
    }
}

/// Writes `content` to `path` via a sibling temp file and rename.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw DataError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw DataError("cannot move output into place at '" + path.string() + "'");
    }
}

/// Prefixes every line of a config echo with "# ".
inline std::string comment_block(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) out += "# " + l + "\n";
    return out;
}

}  // namespace csv

namespace detail {

inline std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace detail

/// Parses the embedding CSV format:
///   image_id,identity_id,media_id[,cov:<name>...],f0,...,f{D-1}
/// Empty covariate cells are absent from the record's map.
inline Dataset read_dataset(std::istream& in, std::optional<std::size_t> expected_dimension = {}) {
    auto lines = csv::read_data_lines(in);
    if (lines.empty()) throw DataError("missing header line");

    const auto header = csv::split(lines.front().text);
    if (header.size() < 3 || header[0] != "image_id" || header[1] != "identity_id" ||
        header[2] != "media_id") {
        throw DataError(detail::line_prefix(lines.front().number) +
                        "header must start with image_id,identity_id,media_id");
    }
    std::vector<std::string> cov_names;
    std::size_t col = 3;
    for (; col < header.size() && header[col].rfind("cov:", 0) == 0; ++col) {
        cov_names.push_back(header[col].substr(4));
    }
    const std::size_t first_feature = col;
    const std::size_t dimension = header.size() - first_feature;
    for (std::size_t k = 0; k < dimension; ++k) {
        if (header[first_feature + k] != "f" + std::to_string(k)) {
            throw DataError(detail::line_prefix(lines.front().number) + "expected column f" +
                            std::to_string(k) + ", found '" + header[first_feature + k] + "'");
        }
    }
    if (dimension < 2) {
        throw DataError(detail::line_prefix(lines.front().number) +
                        "header declares dimension " + std::to_string(dimension) + " (< 2)");
    }
    if (expected_dimension && *expected_dimension != dimension) {
        throw DataError(detail::line_prefix(lines.front().number) + "header declares dimension " +
                        std::to_string(dimension) + ", expected " +
                        std::to_string(*expected_dimension));
    }

    std::vector<EmbeddingRecord> records;
    records.reserve(lines.size() - 1);
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto& line = lines[li];
        const auto cells = csv::split(line.text);
        if (cells.size() != header.size()) {
            throw DataError(detail::line_prefix(line.number) + "expected " +
                            std::to_string(header.size()) + " fields, found " +
                            std::to_string(cells.size()));
        }
        EmbeddingRecord r;
        r.image_id = cells[0];
        r.identity_id = cells[1];
        r.media_id = cells[2];
        if (r.image_id.empty()) throw DataError(detail::line_prefix(line.number) + "empty image_id");
        if (!seen.emplace(r.image_id, line.number).second) {
            throw DataError(detail::line_prefix(line.number) + "duplicate image_id '" + r.image_id +
                            "'");
        }
        for (std::size_t c = 0; c < cov_names.size(); ++c) {
            const auto& cell = cells[3 + c];
            if (cell.empty()) continue;
            auto v = csv::parse_double(cell);
            if (!v) {
                throw DataError(detail::line_prefix(line.number) + "bad covariate value '" + cell +
                                "'");
            }
            r.covariates.emplace(cov_names[c], *v);
        }
        r.vector.resize(static_cast<Eigen::Index>(dimension));
        for (std::size_t k = 0; k < dimension; ++k) {
            auto v = csv::parse_double(cells[first_feature + k]);
            if (!v || !std::isfinite(*v)) {
                throw DataError(detail::line_prefix(line.number) + "bad feature value '" +
                                cells[first_feature + k] + "' in column f" + std::to_string(k));
            }
            r.vector[static_cast<Eigen::Index>(k)] = *v;
        }
        records.push_back(std::move(r));
    }
    return Dataset(dimension, std::move(records));
}

inline Dataset load_dataset(const std::filesystem::path& path,
                            std::optional<std::size_t> expected_dimension = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
    try {
        return read_dataset(in, expected_dimension);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

/// Serializes a dataset; covariate columns are the sorted union of names.
inline std::string format_dataset(const Dataset& ds, const std::vector<std::string>& comments = {}) {
    std::vector<std::string> cov_names;
    for (const auto& r : ds.records()) {
        for (const auto& [name, _] : r.covariates) cov_names.push_back(name);
    }
    std::sort(cov_names.begin(), cov_names.end());
    cov_names.erase(std::unique(cov_names.begin(), cov_names.end()), cov_names.end());

    std::string out = csv::comment_block(comments);
    out += "image_id,identity_id,media_id";
    for (const auto& n : cov_names) {
        csv::check_field(n, "covariate name");
        out += ",cov:" + n;
    }
    for (std::size_t k = 0; k < ds.dimension(); ++k) out += ",f" + std::to_string(k);
    out += '\n';

    for (const auto& r : ds.records()) {
        csv::check_field(r.image_id, "image_id");
        csv::check_field(r.identity_id, "identity_id");
        csv::check_field(r.media_id, "media_id");
        out += r.image_id + ',' + r.identity_id + ',' + r.media_id;
        for (const auto& n : cov_names) {
            out += ',';
            if (auto it = r.covariates.find(n); it != r.covariates.end()) {
                out += csv::format_double(it->second);
            }
        }
        for (Eigen::Index k = 0; k < r.vector.size(); ++k) {
            out += ',';
            out += csv::format_double(r.vector[k]);
        }
        out += '\n';
    }
    return out;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path,
                         const std::vector<std::string>& comments = {}) {
    csv::write_atomically(path, format_dataset(ds, comments));
}

/// `image_id,score`, one row per record in dataset order.
inline std::string format_scores(const Dataset& ds, std::span<const double> scores,
                                 const std::vector<std::string>& comments = {}) {
    if (scores.size() != ds.size()) throw std::invalid_argument("format_scores: one score per record required");
    std::string out = csv::comment_block(comments);
    out += "image_id,score\n";
    for (std::size_t k = 0; k < ds.size(); ++k) out += ds[k].image_id + ',' + csv::format_double(scores[k]) + '\n';
    return out;
}

/// Reads a score file and aligns it to `ds`; records without a row get NaN.
inline std::vector<double> load_scores(const std::filesystem::path& path, const Dataset& ds) {
    const auto lines = csv::read_data_lines(path);
    if (lines.empty() || lines.front().text != "image_id,score") {
        throw DataError(path.string() + ": expected header 'image_id,score'");
    }
    std::vector<double> out(ds.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<bool> seen(ds.size(), false);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto where = path.string() + ": " + detail::line_prefix(lines[i].number);
        const auto cells = csv::split(lines[i].text);
        const auto v = cells.size() == 2 ? csv::parse_double(cells[1]) : std::nullopt;
        if (!v || !std::isfinite(*v)) throw DataError(where + "malformed row");
        if (!ds.contains(cells[0])) throw DataError(where + "unknown image_id '" + cells[0] + "'");
        const auto k = ds.index_of(cells[0]);
        if (seen[k]) throw DataError(where + "duplicate image_id '" + cells[0] + "'");
        seen[k] = true;
        out[k] = *v;
    }
    return out;
}

}  // namespace iconic

#endif  // ICONIC_CSV_IO_HPP
