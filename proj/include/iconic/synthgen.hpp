#ifndef ICONIC_SYNTHGEN_HPP
#define ICONIC_SYNTHGEN_HPP

#include "iconic/core.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace iconic {

enum class DegradationMode {
    TwoLevel,    // delta is either iconic_noise or junk_noise
    Continuous,  // delta ~ Uniform[iconic_noise, junk_noise]
};

struct SynthConfig {
    std::uint64_t seed = 1;
    std::size_t num_identities = 60;
    std::size_t images_per_identity = 30;
    std::size_t dimension = 32;
    double iconic_fraction = 0.5;
    double iconic_noise = 0.05;
    double junk_noise = 1.5;
    std::size_t media_per_identity = 5;
    DegradationMode mode = DegradationMode::TwoLevel;

    void validate() const {
        if (num_identities == 0) throw std::invalid_argument("num_identities must be positive");
        if (images_per_identity == 0) throw std::invalid_argument("images_per_identity must be positive");
        if (media_per_identity == 0) throw std::invalid_argument("media_per_identity must be positive");
        if (dimension < 2) throw std::invalid_argument("dimension must be >= 2");
        if (!(iconic_fraction > 0.0 && iconic_fraction < 1.0)) {
            throw std::invalid_argument("iconic_fraction must lie in (0, 1)");
        }
        if (!(iconic_noise >= 0.0)) throw std::invalid_argument("iconic_noise must be >= 0");
        if (!(junk_noise > iconic_noise)) {
            throw std::invalid_argument("junk_noise must exceed iconic_noise");
        }
    }
};

/// Covariate names written by the generator.
inline constexpr const char* kDegradation = "degradation";
inline constexpr const char* kIsIconic = "is_iconic";

namespace detail {

/// Independent engine for one identity, derived from (seed, identity index).
inline std::mt19937_64 identity_stream(std::uint64_t seed, std::size_t identity) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(identity),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(identity) >> 32),
                      0x1c0du};
    return std::mt19937_64(seq);
}

inline Vector gaussian_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector g(static_cast<Eigen::Index>(dim));
    for (Eigen::Index k = 0; k < g.size(); ++k) g[k] = normal(rng);
    return g;
}

}  // namespace detail

/// Identity-clustered unit embeddings with a known per-record degradation.
///
/// Identity k gets a prototype drawn uniformly on the unit sphere; each
/// record is normalize(prototype + delta * g) with g standard Gaussian.
/// Every identity draws from its own substream so the output depends only
/// on the config.
inline Dataset generate(const SynthConfig& config) {
    config.validate();
    std::vector<EmbeddingRecord> records;
    records.reserve(config.num_identities * config.images_per_identity);

    for (std::size_t k = 0; k < config.num_identities; ++k) {
        auto rng = detail::identity_stream(config.seed, k);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_real_distribution<double> delta_dist(config.iconic_noise, config.junk_noise);
        const double midpoint = 0.5 * (config.iconic_noise + config.junk_noise);

        const Vector prototype = l2_normalize(detail::gaussian_vector(rng, config.dimension));
        const std::string identity = "id" + std::to_string(k);

        for (std::size_t j = 0; j < config.images_per_identity; ++j) {
            double delta = 0.0;
            bool iconic = false;
            if (config.mode == DegradationMode::TwoLevel) {
                iconic = unit(rng) < config.iconic_fraction;
                delta = iconic ? config.iconic_noise : config.junk_noise;
            } else {
                delta = delta_dist(rng);
                iconic = delta <= midpoint;
            }
            const Vector noise = detail::gaussian_vector(rng, config.dimension);

            EmbeddingRecord r;
            r.image_id = identity + "_img" + std::to_string(j);
            r.identity_id = identity;
            r.media_id = identity + "_m" + std::to_string(j % config.media_per_identity);
            r.vector = delta == 0.0 ? prototype : l2_normalize(prototype + delta * noise);
            r.covariates[kDegradation] = delta;
            r.covariates[kIsIconic] = iconic ? 1.0 : 0.0;
            records.push_back(std::move(r));
        }
    }
    return Dataset(config.dimension, std::move(records));
}

}  // namespace iconic

#endif  // ICONIC_SYNTHGEN_HPP
