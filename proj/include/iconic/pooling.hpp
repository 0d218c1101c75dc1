#ifndef ICONIC_POOLING_HPP
#define ICONIC_POOLING_HPP

#include "iconic/core.hpp"
#include "iconic/csv_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace iconic {

/// A set of dataset records describing one subject.
struct Template {
    std::string id;
    std::vector<std::size_t> members;  // record indices
};

enum class PoolingMethod { Quality, MediaAverage, PlainAverage };

inline std::string_view to_string(PoolingMethod m) {
    switch (m) {
        case PoolingMethod::Quality: return "quality";
        case PoolingMethod::MediaAverage: return "media";
        case PoolingMethod::PlainAverage: return "plain";
    }
    return "?";
}

inline PoolingMethod pooling_method_from_string(std::string_view s) {
    if (s == "quality") return PoolingMethod::Quality;
    if (s == "media") return PoolingMethod::MediaAverage;
    if (s == "plain") return PoolingMethod::PlainAverage;
    throw std::invalid_argument("unknown pooling method '" + std::string(s) + "'");
}

struct PooledFeature {
    Vector vector;
    PoolingMethod method = PoolingMethod::PlainAverage;
    std::vector<double> weights;  // per member, in template order
};

/// Softmax of lambda * scores (max-subtracted).
inline std::vector<double> quality_weights(std::span<const double> scores, double lambda) {
    if (scores.empty()) throw std::invalid_argument("quality_weights: empty template");
    for (double s : scores) {
        if (!std::isfinite(s)) throw std::invalid_argument("quality_weights: non-finite score");
    }
    if (!std::isfinite(lambda)) throw std::invalid_argument("quality_weights: non-finite lambda");
    std::vector<double> w(scores.size());
    double peak = lambda * scores[0];
    for (double s : scores) peak = std::max(peak, lambda * s);
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        w[i] = std::exp(lambda * scores[i] - peak);
        total += w[i];
    }
    for (auto& x : w) x /= total;
    return w;
}

namespace detail {

inline void check_template(const Template& t, const Dataset& ds) {
    if (t.members.empty()) throw DataError("template '" + t.id + "' is empty");
    for (auto m : t.members) {
        if (m >= ds.size()) throw DataError("template '" + t.id + "' references a record out of range");
    }
}

}  // namespace detail

inline PooledFeature plain_average(const Template& t, const Dataset& ds) {
    detail::check_template(t, ds);
    PooledFeature out;
    out.method = PoolingMethod::PlainAverage;
    Vector acc = Vector::Zero(static_cast<Eigen::Index>(ds.dimension()));
    for (auto m : t.members) acc += ds[m].vector;
    out.vector = acc / static_cast<double>(t.members.size());
    out.weights.assign(t.members.size(), 1.0 / static_cast<double>(t.members.size()));
    return out;
}

/// Mean within each media, then unweighted mean across media.
inline PooledFeature media_average(const Template& t, const Dataset& ds) {
    detail::check_template(t, ds);
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> groups;  // media -> positions
    for (std::size_t pos = 0; pos < t.members.size(); ++pos) {
        const auto& media = ds[t.members[pos]].media_id;
        auto [it, inserted] = groups.try_emplace(media);
        if (inserted) order.push_back(media);
        it->second.push_back(pos);
    }
    PooledFeature out;
    out.method = PoolingMethod::MediaAverage;
    out.weights.assign(t.members.size(), 0.0);
    Vector acc = Vector::Zero(static_cast<Eigen::Index>(ds.dimension()));
    const double n_media = static_cast<double>(order.size());
    for (const auto& media : order) {
        const auto& positions = groups[media];
        Vector inner = Vector::Zero(acc.size());
        for (auto pos : positions) inner += ds[t.members[pos]].vector;
        const double k = static_cast<double>(positions.size());
        acc += inner / k;
        for (auto pos : positions) out.weights[pos] = 1.0 / (n_media * k);
    }
    out.vector = acc / n_media;
    return out;
}

/// sum_i q_i f_i with q = quality_weights(member scores, lambda).
/// `record_scores` holds one score per dataset record; NaN marks a missing score.
inline PooledFeature quality_pool(const Template& t, const Dataset& ds, std::span<const double> record_scores,
                                  double lambda) {
    detail::check_template(t, ds);
    if (record_scores.size() != ds.size()) {
        throw DataError("quality_pool: expected one score per record");
    }
    std::vector<double> member_scores;
    member_scores.reserve(t.members.size());
    for (auto m : t.members) {
        if (std::isnan(record_scores[m])) {
            throw DataError("quality_pool: missing score for '" + ds[m].image_id + "'");
        }
        member_scores.push_back(record_scores[m]);
    }
    PooledFeature out;
    out.method = PoolingMethod::Quality;
    out.weights = quality_weights(member_scores, lambda);
    out.vector = Vector::Zero(static_cast<Eigen::Index>(ds.dimension()));
    for (std::size_t i = 0; i < t.members.size(); ++i) out.vector += out.weights[i] * ds[t.members[i]].vector;
    return out;
}

/// Cosine similarity of the pooled vectors (no renormalization beforehand).
inline double template_similarity(const PooledFeature& a, const PooledFeature& b) {
    return cosine_similarity(a.vector, b.vector);
}

inline PooledFeature pool(PoolingMethod method, const Template& t, const Dataset& ds,
                          std::span<const double> record_scores, double lambda) {
    switch (method) {
        case PoolingMethod::Quality: return quality_pool(t, ds, record_scores, lambda);
        case PoolingMethod::MediaAverage: return media_average(t, ds);
        case PoolingMethod::PlainAverage: return plain_average(t, ds);
    }
    return plain_average(t, ds);
}

struct Match {
    std::string a;
    std::string b;
    bool genuine = false;
};

struct ScoredMatch {
    std::string a;
    std::string b;
    bool genuine = false;
    double similarity = 0.0;
};

/// Pools each template once, then scores every match in input order.
inline std::vector<ScoredMatch> verify_protocol(const std::vector<Template>& templates,
                                                const std::vector<Match>& matches, PoolingMethod method,
                                                const Dataset& ds, std::span<const double> record_scores,
                                                double lambda) {
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t k = 0; k < templates.size(); ++k) {
        if (!slot.emplace(templates[k].id, k).second) {
            throw DataError("duplicate template id '" + templates[k].id + "'");
        }
    }
    for (const auto& m : matches) {
        for (const auto* id : {&m.a, &m.b}) {
            if (!slot.count(*id)) throw DataError("match references unknown template '" + *id + "'");
        }
    }
    std::vector<std::optional<PooledFeature>> pooled(templates.size());
    auto get = [&](const std::string& id) -> const PooledFeature& {
        const auto k = slot.at(id);
        if (!pooled[k]) pooled[k] = pool(method, templates[k], ds, record_scores, lambda);
        return *pooled[k];
    };
    std::vector<ScoredMatch> out;
    out.reserve(matches.size());
    for (const auto& m : matches) {
        out.push_back({m.a, m.b, m.genuine, template_similarity(get(m.a), get(m.b))});
    }
    return out;
}

// ---------------------------------------------------------------------------
// File formats.

/// `template_id,image_id`; templates returned in first-seen order.
inline std::vector<Template> load_templates(const std::filesystem::path& path, const Dataset& ds) {
    const auto lines = csv::read_data_lines(path);
    if (lines.empty() || lines.front().text != "template_id,image_id") {
        throw DataError(path.string() + ": expected header 'template_id,image_id'");
    }
    std::vector<Template> out;
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = csv::split(lines[i].text);
        if (cells.size() != 2 || cells[0].empty()) {
            throw DataError(path.string() + ": line " + std::to_string(lines[i].number) + ": malformed row");
        }
        if (!ds.contains(cells[1])) {
            throw DataError(path.string() + ": line " + std::to_string(lines[i].number) +
                            ": unknown image_id '" + cells[1] + "'");
        }
        auto [it, inserted] = slot.emplace(cells[0], out.size());
        if (inserted) out.push_back({cells[0], {}});
        out[it->second].members.push_back(ds.index_of(cells[1]));
    }
    return out;
}

inline std::string format_templates(const std::vector<Template>& templates, const Dataset& ds) {
    std::string out = "template_id,image_id\n";
    for (const auto& t : templates) {
        for (auto m : t.members) out += t.id + ',' + ds[m].image_id + '\n';
    }
    return out;
}

/// `template_a,template_b,genuine(0|1)`
inline std::vector<Match> load_matches(const std::filesystem::path& path) {
    const auto lines = csv::read_data_lines(path);
    if (lines.empty() || lines.front().text != "template_a,template_b,genuine") {
        throw DataError(path.string() + ": expected header 'template_a,template_b,genuine'");
    }
    std::vector<Match> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = csv::split(lines[i].text);
        if (cells.size() != 3 || (cells[2] != "0" && cells[2] != "1")) {
            throw DataError(path.string() + ": line " + std::to_string(lines[i].number) + ": malformed row");
        }
        out.push_back({cells[0], cells[1], cells[2] == "1"});
    }
    return out;
}

inline std::string format_matches(const std::vector<Match>& matches) {
    std::string out = "template_a,template_b,genuine\n";
    for (const auto& m : matches) out += m.a + ',' + m.b + ',' + (m.genuine ? "1" : "0") + '\n';
    return out;
}

/// `template_a,template_b,genuine,similarity`
inline std::string format_scored_matches(const std::vector<ScoredMatch>& scored,
                                         const std::vector<std::string>& comments = {}) {
    std::string out = csv::comment_block(comments);
    out += "template_a,template_b,genuine,similarity\n";
    for (const auto& s : scored) {
        out += s.a + ',' + s.b + ',' + (s.genuine ? "1" : "0") + ',' + csv::format_double(s.similarity) + '\n';
    }
    return out;
}

inline std::vector<ScoredMatch> load_scored_matches(const std::filesystem::path& path) {
    const auto lines = csv::read_data_lines(path);
    if (lines.empty() || lines.front().text != "template_a,template_b,genuine,similarity") {
        throw DataError(path.string() + ": expected header 'template_a,template_b,genuine,similarity'");
    }
    std::vector<ScoredMatch> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = csv::split(lines[i].text);
        const auto sim = cells.size() == 4 ? csv::parse_double(cells[3]) : std::nullopt;
        if (!sim || !std::isfinite(*sim) || (cells[2] != "0" && cells[2] != "1")) {
            throw DataError(path.string() + ": line " + std::to_string(lines[i].number) + ": malformed row");
        }
        out.push_back({cells[0], cells[1], cells[2] == "1", *sim});
    }
    return out;
}

}  // namespace iconic

#endif  // ICONIC_POOLING_HPP
