#ifndef ICONIC_CORE_HPP
#define ICONIC_CORE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace iconic {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Malformed or inconsistent input data (bad rows, dangling references, ...).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One descriptor with its identity, media and covariate annotations.
struct EmbeddingRecord {
    std::string image_id;
    std::string identity_id;
    std::string media_id;
    Vector vector;
    std::map<std::string, double> covariates;

    bool operator==(const EmbeddingRecord& o) const {
        return image_id == o.image_id && identity_id == o.identity_id &&
               media_id == o.media_id && covariates == o.covariates &&
               vector.size() == o.vector.size() && vector == o.vector;
    }
};

/// An immutable collection of records sharing one dimension D.
///
/// The identity index is rebuilt from the records on construction so it can
/// never drift out of sync with them. Identities are kept in first-seen order,
/// which is what the pair sampler iterates over.
class Dataset {
public:
    Dataset() = default;

    Dataset(std::size_t dimension, std::vector<EmbeddingRecord> records)
        : dimension_(dimension), records_(std::move(records)) {
        if (dimension_ < 2) {
            throw DataError("dataset dimension must be >= 2, got " + std::to_string(dimension_));
        }
        std::unordered_map<std::string, std::size_t> seen_images;
        for (std::size_t i = 0; i < records_.size(); ++i) {
            const auto& r = records_[i];
            if (static_cast<std::size_t>(r.vector.size()) != dimension_) {
                throw DataError("record '" + r.image_id + "' has dimension " +
                                std::to_string(r.vector.size()) + ", expected " +
                                std::to_string(dimension_));
            }
            if (!r.vector.allFinite()) {
                throw DataError("record '" + r.image_id + "' has non-finite entries");
            }
            if (!seen_images.emplace(r.image_id, i).second) {
                throw DataError("duplicate image_id '" + r.image_id + "'");
            }
            auto [it, inserted] = identity_slot_.emplace(r.identity_id, identities_.size());
            if (inserted) {
                identities_.push_back(r.identity_id);
                members_.emplace_back();
            }
            members_[it->second].push_back(i);
        }
        image_index_ = std::move(seen_images);
    }

    std::size_t dimension() const { return dimension_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    const std::vector<EmbeddingRecord>& records() const { return records_; }
    const EmbeddingRecord& operator[](std::size_t i) const { return records_.at(i); }

    /// Identity labels in first-seen order.
    const std::vector<std::string>& identities() const { return identities_; }

    /// Record indices belonging to an identity; empty if unknown.
    const std::vector<std::size_t>& members(const std::string& identity) const {
        static const std::vector<std::size_t> none;
        auto it = identity_slot_.find(identity);
        return it == identity_slot_.end() ? none : members_[it->second];
    }

    std::size_t identity_count() const { return identities_.size(); }

    /// Index of an image_id, or throws DataError.
    std::size_t index_of(const std::string& image_id) const {
        auto it = image_index_.find(image_id);
        if (it == image_index_.end()) {
            throw DataError("unknown image_id '" + image_id + "'");
        }
        return it->second;
    }

    bool contains(const std::string& image_id) const { return image_index_.count(image_id) != 0; }

    bool operator==(const Dataset& o) const {
        return dimension_ == o.dimension_ && records_ == o.records_;
    }

private:
    std::size_t dimension_ = 2;
    std::vector<EmbeddingRecord> records_;
    std::vector<std::string> identities_;
    std::vector<std::vector<std::size_t>> members_;
    std::unordered_map<std::string, std::size_t> identity_slot_;
    std::unordered_map<std::string, std::size_t> image_index_;
};

inline Vector l2_normalize(const Vector& v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw std::invalid_argument("l2_normalize: degenerate descriptor (norm is zero or non-finite)");
    }
    return v / n;
}

/// Cosine of the angle between a and b, clamped to [-1, 1].
inline double cosine_similarity(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: dimension mismatch (" +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    }
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw std::invalid_argument("cosine_similarity: zero-norm input");
    }
    const double c = (a / na).dot(b / nb);
    return std::clamp(c, -1.0, 1.0);
}

/// Euclidean norm, the classic "feature norm" quality baseline.
inline double feature_norm_score(const Vector& v) { return v.norm(); }

}  // namespace iconic

#endif  // ICONIC_CORE_HPP
