#include "iconic/pairs.hpp"
#include "iconic/synthgen.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <map>

using namespace iconic;

namespace {

/// Identity with `l` records of proxy 1 and `m` records of proxy 0.
void add_identity(std::vector<EmbeddingRecord>& recs, std::vector<double>& proxy, const std::string& id,
                  int l, int m) {
    for (int k = 0; k < l + m; ++k) {
        Vector v(2);
        v << 1.0, 0.01 * static_cast<double>(recs.size());
        recs.push_back({id + "_" + std::to_string(k), id, id, v, {}});
        proxy.push_back(k < l ? 1.0 : 0.0);
    }
}

Dataset small_dataset(std::size_t ids = 5, std::size_t per = 6) {
    SynthConfig c;
    c.num_identities = ids;
    c.images_per_identity = per;
    c.dimension = 4;
    return generate(c);
}

}  // namespace

TEST(MixtureFilter, BalancedIncludedPureExcluded) {
    std::vector<EmbeddingRecord> recs;
    std::vector<double> proxy;
    add_identity(recs, proxy, "balanced", 5, 5);
    add_identity(recs, proxy, "pure", 10, 0);
    add_identity(recs, proxy, "one_iconic", 1, 1);
    const Dataset ds(2, recs);
    const auto keep = mixture_filter(ds, proxy, 0.5, 0.1);
    EXPECT_EQ(keep, std::vector<std::string>{"balanced"});

    const auto stats = mixture_stats(ds, proxy, 0.5);
    ASSERT_EQ(stats.size(), 3u);
    EXPECT_EQ(stats[0].iconic, 5u);
    EXPECT_EQ(stats[0].non_iconic, 5u);
    EXPECT_DOUBLE_EQ(stats[0].ratio, 0.5);
    EXPECT_DOUBLE_EQ(stats[1].ratio, 0.0);
}

TEST(MixtureFilter, ProxyLengthMismatch) {
    const auto ds = small_dataset();
    std::vector<double> proxy(ds.size() - 1, 1.0);
    EXPECT_THROW(mixture_filter(ds, proxy, 0.5, 0.25), std::invalid_argument);
}

// Binomial oracle: with 20 images and p = 0.5, P(5 <= m <= 15) = 0.98818...
// (scipy.stats.binom), so >= 90% of identities should pass band 0.25.
TEST(MixtureFilter, SyntheticPassRateMatchesBinomialTail) {
    SynthConfig c;
    c.num_identities = 200;
    c.images_per_identity = 20;
    c.dimension = 8;
    const auto ds = generate(c);
    const auto proxy = degradation_proxy(ds);
    const double threshold = 1.0 - 0.5 * (c.iconic_noise + c.junk_noise);
    const auto keep = mixture_filter(ds, proxy, threshold, 0.25);
    EXPECT_GE(static_cast<double>(keep.size()) / 200.0, 0.9);
}

TEST(SampleEpoch, EmptyPlan) {
    const auto ds = small_dataset();
    const auto plan = sample_epoch(ds, ds.identities(), 0, 0, 1);
    EXPECT_EQ(plan.size(), 0u);
    EXPECT_EQ(plan.positives + plan.negatives, 0u);
}

TEST(SampleEpoch, SingleIdentityCannotMakeImpostors) {
    const auto ds = small_dataset();
    const std::vector<std::string> one{ds.identities().front()};
    EXPECT_THROW(sample_epoch(ds, one, 0, 5, 1), DataError);
}

TEST(SampleEpoch, NoIdentityWithTwoRecords) {
    const auto ds = small_dataset(4, 1);
    EXPECT_THROW(sample_epoch(ds, ds.identities(), 3, 3, 1), DataError);
    EXPECT_NO_THROW(sample_epoch(ds, ds.identities(), 0, 3, 1));
}

TEST(SampleEpoch, LabelsAreCorrectExhaustively) {
    SynthConfig c;
    c.num_identities = 13;
    c.images_per_identity = 9;
    c.dimension = 4;
    const auto ds = generate(c);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto plan = sample_epoch(ds, ds.identities(), 300, 250, seed);
        ASSERT_EQ(plan.size(), 550u);
        EXPECT_EQ(plan.positives, 300u);
        EXPECT_EQ(plan.negatives, 250u);
        std::size_t pos = 0;
        for (const auto& p : plan.pairs) {
            EXPECT_NE(p.i, p.j);
            EXPECT_EQ(p.label == 1, ds[p.i].identity_id == ds[p.j].identity_id);
            pos += p.label == 1;
        }
        EXPECT_EQ(pos, 300u);
    }
}

TEST(SampleEpoch, RespectsEligibleSet) {
    const auto ds = small_dataset(6, 5);
    const std::vector<std::string> eligible{"id1", "id4"};
    const auto plan = sample_epoch(ds, eligible, 100, 100, 9);
    for (const auto& p : plan.pairs) {
        for (auto idx : {p.i, p.j}) {
            const auto& id = ds[idx].identity_id;
            EXPECT_TRUE(id == "id1" || id == "id4") << id;
        }
    }
}

TEST(SampleEpoch, Deterministic) {
    const auto ds = small_dataset();
    EXPECT_EQ(sample_epoch(ds, ds.identities(), 50, 50, 77), sample_epoch(ds, ds.identities(), 50, 50, 77));
    EXPECT_NE(sample_epoch(ds, ds.identities(), 50, 50, 77), sample_epoch(ds, ds.identities(), 50, 50, 78));
}

// Positive draws should pick identity k with probability C(n_k,2) / sum C(n_j,2).
TEST(SampleEpoch, PositiveIdentityFrequenciesChiSquared) {
    std::vector<EmbeddingRecord> recs;
    std::vector<double> unused;
    const std::vector<int> sizes{2, 3, 5, 8, 13};
    for (std::size_t k = 0; k < sizes.size(); ++k) add_identity(recs, unused, "p" + std::to_string(k), sizes[k], 0);
    const Dataset ds(2, recs);
    const std::size_t draws = 100000;
    const auto plan = sample_epoch(ds, ds.identities(), draws, 0, 4242);

    std::map<std::string, double> observed;
    for (const auto& p : plan.pairs) observed[ds[p.i].identity_id] += 1.0;
    double total_pairs = 0.0;
    for (int n : sizes) total_pairs += n * (n - 1) / 2.0;
    double chi2 = 0.0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        const double expected = draws * (sizes[k] * (sizes[k] - 1) / 2.0) / total_pairs;
        const double o = observed["p" + std::to_string(k)];
        chi2 += (o - expected) * (o - expected) / expected;
    }
    boost::math::chi_squared dist(static_cast<double>(sizes.size() - 1));
    const double p_value = boost::math::cdf(boost::math::complement(dist, chi2));
    EXPECT_GT(p_value, 1e-4) << "chi2 = " << chi2;
}

TEST(SampleEpoch, ExportFormat) {
    EpochPlan plan;
    plan.pairs = {{1, 2, 1}, {3, 0, -1}};
    EXPECT_EQ(format_plan(plan), "i,j,y\n1,2,1\n3,0,-1\n");
}
