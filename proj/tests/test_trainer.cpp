#include "iconic/eval.hpp"
#include "iconic/synthgen.hpp"
#include "iconic/trainer.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace iconic;

TEST(PairLoss, Examples) {
    EXPECT_DOUBLE_EQ(pair_loss(1.0, 1.0, 1.0, +1, 0.5), 0.0);
    EXPECT_NEAR(pair_loss(0.5, 0.5, 0.8, +1, 0.5), 0.3, 1e-15);
    EXPECT_DOUBLE_EQ(pair_loss(0.5, 0.5, 0.8, -1, 0.5), 0.0);
    EXPECT_THROW(pair_loss(0.5, 0.5, 0.8, 0, 0.5), std::invalid_argument);
}

TEST(PairLoss, NonNegative) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> unit(0.0, 1.0), cosd(-1.0, 1.0);
    for (int t = 0; t < 10000; ++t) {
        EXPECT_GE(pair_loss(unit(rng), unit(rng), cosd(rng), t % 2 ? 1 : -1, 0.5), 0.0);
    }
}

TEST(PairLossGrad, InactiveAndBoundary) {
    const auto g = pair_loss_grad(0.5, 0.5, 0.8, -1, 0.5);
    EXPECT_EQ(g.d_r1, 0.0);
    EXPECT_EQ(g.d_r2, 0.0);
    // Exactly on the hinge: 0.5 - 1 * 0.5 * 1 = 0.
    const auto b = pair_loss_grad(1.0, 0.5, 1.0, +1, 0.5);
    EXPECT_EQ(b.d_r1, 0.0);
    EXPECT_EQ(b.d_r2, 0.0);
}

TEST(PairLossGrad, TableDirections) {
    // Positive pair, cos > 0, active: both gradients negative -> descent raises r1 r2.
    auto g = pair_loss_grad(0.3, 0.4, 0.6, +1, 0.5);
    EXPECT_LT(g.d_r1, 0.0);
    EXPECT_LT(g.d_r2, 0.0);
    // Positive pair, cos < 0: always active, gradients positive -> descent lowers r1 r2.
    g = pair_loss_grad(0.3, 0.4, -0.6, +1, 0.5);
    EXPECT_GT(g.d_r1, 0.0);
    EXPECT_GT(g.d_r2, 0.0);
}

// Central finite differences of pair_loss away from the hinge.
TEST(PairLossGrad, MatchesFiniteDifferences) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> unit(0.01, 0.99), cosd(-1.0, 1.0);
    const double h = 1e-4;
    int checked = 0;
    for (int t = 0; t < 5000; ++t) {
        const double r1 = unit(rng), r2 = unit(rng), c = cosd(rng);
        const int y = t % 2 ? 1 : -1;
        if (std::abs(0.5 - r1 * r2 * c) < 1e-3) continue;
        const auto g = pair_loss_grad(r1, r2, c, y, 0.5);
        const double n1 = (pair_loss(r1 + h, r2, c, y, 0.5) - pair_loss(r1 - h, r2, c, y, 0.5)) / (2 * h);
        const double n2 = (pair_loss(r1, r2 + h, c, y, 0.5) - pair_loss(r1, r2 - h, c, y, 0.5)) / (2 * h);
        // The hinge is piecewise bilinear, so central differences are exact up to rounding.
        EXPECT_LT(std::abs(g.d_r1 - n1) / std::max({std::abs(n1), std::abs(g.d_r1), 1e-2}), 1e-8);
        EXPECT_LT(std::abs(g.d_r2 - n2) / std::max({std::abs(n2), std::abs(g.d_r2), 1e-2}), 1e-8);
        ++checked;
    }
    EXPECT_GT(checked, 4000);
}

namespace {

struct Fixture {
    Dataset ds;
    std::vector<std::string> eligible;
    TrainConfig cfg;
};

Fixture small_problem() {
    SynthConfig sc;
    sc.seed = 3;
    sc.num_identities = 8;
    sc.images_per_identity = 8;
    sc.dimension = 8;
    sc.mode = DegradationMode::Continuous;
    Fixture f{generate(sc), {}, {}};
    f.eligible = f.ds.identities();
    f.cfg.widths = {8, 4, 1};
    f.cfg.n_pos = 64;
    f.cfg.n_neg = 64;
    f.cfg.batch_size = 32;
    f.cfg.epochs = 3;
    f.cfg.seed = 5;
    return f;
}

}  // namespace

TEST(BatchStep, InactiveBatchLeavesParamsUnchanged) {
    auto f = small_problem();
    auto params = init_params(1, f.ds.dimension(), f.cfg.widths);
    // Negative pairs of one record with itself-like direction are only active
    // if r1 r2 cos > margin; a huge margin makes every negative pair inactive.
    f.cfg.margin = 10.0;
    const auto plan = sample_epoch(f.ds, f.eligible, 0, 40, 1);
    auto state = OptimizerState::for_params(params);
    const auto before = params;
    const double loss = batch_step(params, plan.pairs, f.ds, state, f.cfg);
    EXPECT_EQ(loss, 0.0);
    EXPECT_TRUE(params == before);
}

TEST(BatchStep, ZeroLearningRateReportsLoss) {
    auto f = small_problem();
    f.cfg.learning_rate = 0.0;
    auto params = init_params(1, f.ds.dimension(), f.cfg.widths);
    const auto before = params;
    auto state = OptimizerState::for_params(params);
    const auto plan = sample_epoch(f.ds, f.eligible, 20, 20, 2);
    const double loss = batch_step(params, plan.pairs, f.ds, state, f.cfg);
    EXPECT_GT(loss, 0.0);
    EXPECT_TRUE(params == before);
}

// End-to-end finite-difference check of a one-pair batch through the optimizer
// input: the first SGD step without momentum equals -lr * gradient.
TEST(BatchStep, OnePairGradientMatchesFiniteDifferences) {
    auto f = small_problem();
    f.cfg.momentum = 0.0;
    f.cfg.learning_rate = 1.0;
    auto params = init_params(11, f.ds.dimension(), f.cfg.widths);
    const std::vector<Pair> batch{{0, 1, +1}};
    const double c = cosine_similarity(f.ds[0].vector, f.ds[1].vector);
    auto loss_of = [&](const MlpParams& p) {
        return pair_loss(score(p, f.ds[0].vector), score(p, f.ds[1].vector), c, +1, f.cfg.margin);
    };
    const auto before = params;
    auto state = OptimizerState::for_params(params);
    batch_step(params, batch, f.ds, state, f.cfg);

    std::vector<double> step;
    {
        std::vector<double> a, b;
        before.for_each([&](double v) { a.push_back(v); });
        params.for_each([&](double v) { b.push_back(v); });
        for (std::size_t k = 0; k < a.size(); ++k) step.push_back(a[k] - b[k]);  // = gradient
    }
    auto probe = before;
    std::vector<double*> slots;
    probe.for_each([&](double& v) { slots.push_back(&v); });
    double worst = 0.0;
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const double saved = *slots[k];
        *slots[k] = saved + 1e-6;
        const double up = loss_of(probe);
        *slots[k] = saved - 1e-6;
        const double down = loss_of(probe);
        *slots[k] = saved;
        const double numeric = (up - down) / 2e-6;
        worst = std::max(worst, std::abs(numeric - step[k]) / std::max({std::abs(numeric), std::abs(step[k]), 1e-4}));
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(BatchStep, DivergenceIsReported) {
    auto f = small_problem();
    f.cfg.learning_rate = std::numeric_limits<double>::infinity();
    auto params = init_params(1, f.ds.dimension(), f.cfg.widths);
    auto state = OptimizerState::for_params(params);
    const auto plan = sample_epoch(f.ds, f.eligible, 20, 0, 2);
    EXPECT_THROW(batch_step(params, plan.pairs, f.ds, state, f.cfg), DivergenceError);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
    auto f = small_problem();
    f.cfg.epochs = 0;
    const auto r = train(f.ds, f.eligible, f.cfg);
    EXPECT_TRUE(r.epoch_loss.empty());
    EXPECT_TRUE(r.params == init_params(f.cfg.seed, f.ds.dimension(), f.cfg.widths));
}

TEST(Train, DeterministicGivenSeed) {
    const auto f = small_problem();
    const auto a = train(f.ds, f.eligible, f.cfg);
    const auto b = train(f.ds, f.eligible, f.cfg);
    EXPECT_TRUE(a.params == b.params);
    EXPECT_EQ(a.epoch_loss, b.epoch_loss);
    EXPECT_EQ(a.epoch_loss.size(), f.cfg.epochs);
}

TEST(Train, PartialLastBatch) {
    auto f = small_problem();
    f.cfg.n_pos = 50;
    f.cfg.n_neg = 27;  // 77 pairs: batches of 32, 32, 13
    f.cfg.epochs = 1;
    std::size_t calls = 0;
    const auto r = train(f.ds, f.eligible, f.cfg, [&](std::size_t, double) { ++calls; });
    EXPECT_EQ(calls, 1u);
    EXPECT_TRUE(std::isfinite(r.epoch_loss[0]));
}

TEST(Score, ZeroParamsAndTwinSharing) {
    const auto f = small_problem();
    const auto zero = init_params(1, f.ds.dimension(), f.cfg.widths).zeros_like();
    EXPECT_EQ(score(zero, f.ds[0].vector), 0.5);
    const auto p = init_params(7, f.ds.dimension(), f.cfg.widths);
    // Twins are one parameter object: a pair forward gives the standalone scores.
    Matrix x(f.ds.dimension(), 2);
    x.col(0) = f.ds[3].vector;
    x.col(1) = f.ds[4].vector;
    const auto t = forward(p, x);
    EXPECT_EQ(t.score(0), score(p, f.ds[3].vector));
    EXPECT_EQ(t.score(1), score(p, f.ds[4].vector));
    EXPECT_THROW(score(p, Vector::Zero(3)), std::invalid_argument);
}

// Training sanity on a small two-level problem.
TEST(Train, LossDecreasesAndIconicScoresHigher) {
    SynthConfig sc;
    sc.seed = 12;
    sc.num_identities = 30;
    sc.images_per_identity = 20;
    sc.dimension = 16;
    sc.mode = DegradationMode::TwoLevel;
    const auto ds = generate(sc);
    TrainConfig cfg;
    cfg.widths = {32, 16, 8, 4, 1};
    cfg.n_pos = 1000;
    cfg.n_neg = 1000;
    cfg.epochs = 15;
    cfg.seed = 4;
    const auto r = train(ds, ds.identities(), cfg);
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
    const auto s = score_all(r.params, ds);
    double iconic = 0, junk = 0;
    int ni = 0, nj = 0;
    for (std::size_t k = 0; k < ds.size(); ++k) {
        if (ds[k].covariates.at("is_iconic") == 1.0) {
            iconic += s[k];
            ++ni;
        } else {
            junk += s[k];
            ++nj;
        }
    }
    EXPECT_GT(iconic / ni, junk / nj);
}
