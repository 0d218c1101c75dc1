#ifndef ICONIC_PAIRS_HPP
#define ICONIC_PAIRS_HPP

#include "iconic/core.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace iconic {

/// Labeled index pair. label is +1 for same identity, -1 otherwise.
struct Pair {
    std::size_t i = 0;
    std::size_t j = 0;
    int label = 1;

    bool operator==(const Pair&) const = default;
};

struct MixtureStats {
    std::string identity_id;
    std::size_t iconic = 0;      // l
    std::size_t non_iconic = 0;  // m
    double ratio = 0.0;          // m / (l + m)
};

struct EpochPlan {
    std::vector<Pair> pairs;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::uint64_t seed = 0;

    std::size_t size() const { return pairs.size(); }
    bool operator==(const EpochPlan&) const = default;
};

/// Per-identity iconic/non-iconic counts under a proxy-score threshold.
inline std::vector<MixtureStats> mixture_stats(const Dataset& ds, std::span<const double> proxy_score,
                                               double threshold) {
    if (proxy_score.size() != ds.size()) {
        throw std::invalid_argument("mixture_stats: one proxy score per record required");
    }
    std::vector<MixtureStats> out;
    for (const auto& id : ds.identities()) {
        MixtureStats s;
        s.identity_id = id;
        for (auto idx : ds.members(id)) {
            if (proxy_score[idx] >= threshold) {
                ++s.iconic;
            } else {
                ++s.non_iconic;
            }
        }
        const auto n = s.iconic + s.non_iconic;
        if (n == 0) continue;
        s.ratio = static_cast<double>(s.non_iconic) / static_cast<double>(n);
        out.push_back(std::move(s));
    }
    return out;
}

/// Identities whose non-iconic ratio lies within `band` of 0.5 and that have
/// at least two iconic records. Returned in dataset identity order.
inline std::vector<std::string> mixture_filter(const Dataset& ds, std::span<const double> proxy_score,
                                               double threshold, double band) {
    std::vector<std::string> keep;
    for (const auto& s : mixture_stats(ds, proxy_score, threshold)) {
        if (std::abs(s.ratio - 0.5) <= band && s.iconic >= 2) keep.push_back(s.identity_id);
    }
    return keep;
}

/// Proxy quality for synthetic data: 1 - degradation.
inline std::vector<double> degradation_proxy(const Dataset& ds) {
    std::vector<double> out;
    out.reserve(ds.size());
    for (const auto& r : ds.records()) {
        auto it = r.covariates.find("degradation");
        if (it == r.covariates.end()) {
            throw DataError("record '" + r.image_id + "' has no degradation covariate");
        }
        out.push_back(1.0 - it->second);
    }
    return out;
}

/// Samples one epoch of labeled pairs, with replacement.
///
/// Positives: pick an identity with probability proportional to C(n_k, 2),
/// then a uniform unordered pair inside it. Negatives: two distinct
/// identities uniformly, then one record from each. The concatenated list is
/// shuffled. Output depends only on (ds, eligible, counts, seed).
inline EpochPlan sample_epoch(const Dataset& ds, std::span<const std::string> eligible,
                              std::size_t n_pos, std::size_t n_neg, std::uint64_t seed) {
    EpochPlan plan;
    plan.seed = seed;
    if (n_pos == 0 && n_neg == 0) return plan;

    std::vector<const std::vector<std::size_t>*> groups;
    std::set<std::string> unique;
    for (const auto& id : eligible) {
        if (!unique.insert(id).second) continue;
        const auto& m = ds.members(id);
        if (m.empty()) throw DataError("sample_epoch: unknown identity '" + id + "'");
        groups.push_back(&m);
    }
    if (groups.size() < 2) {
        throw DataError("sample_epoch: need at least 2 eligible identities, have " +
                        std::to_string(groups.size()));
    }

    std::mt19937_64 rng(seed);
    plan.pairs.reserve(n_pos + n_neg);

    if (n_pos > 0) {
        std::vector<double> weights;
        weights.reserve(groups.size());
        double total = 0.0;
        for (const auto* g : groups) {
            const double n = static_cast<double>(g->size());
            weights.push_back(n * (n - 1.0) / 2.0);
            total += weights.back();
        }
        if (total <= 0.0) {
            throw DataError("sample_epoch: no eligible identity has 2 or more records");
        }
        std::discrete_distribution<std::size_t> pick_identity(weights.begin(), weights.end());
        for (std::size_t k = 0; k < n_pos; ++k) {
            const auto& g = *groups[pick_identity(rng)];
            std::uniform_int_distribution<std::size_t> first(0, g.size() - 1);
            std::uniform_int_distribution<std::size_t> second(0, g.size() - 2);
            const auto a = first(rng);
            auto b = second(rng);
            if (b >= a) ++b;
            plan.pairs.push_back({g[a], g[b], +1});
        }
    }

    std::uniform_int_distribution<std::size_t> first_id(0, groups.size() - 1);
    std::uniform_int_distribution<std::size_t> second_id(0, groups.size() - 2);
    for (std::size_t k = 0; k < n_neg; ++k) {
        const auto a = first_id(rng);
        auto b = second_id(rng);
        if (b >= a) ++b;
        const auto& ga = *groups[a];
        const auto& gb = *groups[b];
        std::uniform_int_distribution<std::size_t> ra(0, ga.size() - 1);
        std::uniform_int_distribution<std::size_t> rb(0, gb.size() - 1);
        const auto ia = ga[ra(rng)];
        const auto ib = gb[rb(rng)];
        plan.pairs.push_back({ia, ib, -1});
    }

    std::shuffle(plan.pairs.begin(), plan.pairs.end(), rng);
    plan.positives = n_pos;
    plan.negatives = n_neg;
    return plan;
}

/// `i,j,y` audit export.
inline std::string format_plan(const EpochPlan& plan) {
    std::string out = "i,j,y\n";
    for (const auto& p : plan.pairs) {
        out += std::to_string(p.i) + ',' + std::to_string(p.j) + ',' + std::to_string(p.label) + '\n';
    }
    return out;
}

}  // namespace iconic

#endif  // ICONIC_PAIRS_HPP
