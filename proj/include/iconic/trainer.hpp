#ifndef ICONIC_TRAINER_HPP
#define ICONIC_TRAINER_HPP

#include "iconic/core.hpp"
#include "iconic/mlp.hpp"
#include "iconic/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace iconic {

/// Hinge on the iconicity-weighted inner product:
///   max(0, y * (margin - r1 * r2 * cos_alpha))
inline double pair_loss(double r1, double r2, double cos_alpha, int y, double margin) {
    if (y != 1 && y != -1) throw std::invalid_argument("pair_loss: label must be +1 or -1");
    return std::max(0.0, y * (margin - r1 * r2 * cos_alpha));
}

struct PairLossGrad {
    double d_r1 = 0.0;
    double d_r2 = 0.0;
};

/// Derivative of pair_loss w.r.t. (r1, r2). A hinge argument of exactly zero
/// counts as inactive.
inline PairLossGrad pair_loss_grad(double r1, double r2, double cos_alpha, int y, double margin) {
    const double arg = y * (margin - r1 * r2 * cos_alpha);
    if (!(arg > 0.0)) return {};
    return {-y * r2 * cos_alpha, -y * r1 * cos_alpha};
}

struct TrainConfig {
    double margin = 0.5;
    std::size_t n_pos = 20000;
    std::size_t n_neg = 20000;
    std::size_t batch_size = 256;
    std::size_t epochs = 50;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    std::vector<std::size_t> widths = default_widths();
    bool selu_all_hidden = false;

    void validate() const {
        if (!(margin > 0.0)) throw std::invalid_argument("margin must be > 0");
        if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
        if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
        if (widths.empty() || widths.back() != 1) {
            throw std::invalid_argument("widths must end with 1");
        }
    }

    /// key=value lines, in a fixed order, for provenance echo.
    std::vector<std::string> describe() const {
        std::vector<std::string> out;
        auto num = [](double v) {
            std::ostringstream s;
            s.precision(17);
            s << v;
            return s.str();
        };
        std::string w;
        for (std::size_t k = 0; k < widths.size(); ++k) w += (k ? "," : "") + std::to_string(widths[k]);
        out.push_back("margin=" + num(margin));
        out.push_back("n_pos=" + std::to_string(n_pos));
        out.push_back("n_neg=" + std::to_string(n_neg));
        out.push_back("batch_size=" + std::to_string(batch_size));
        out.push_back("epochs=" + std::to_string(epochs));
        out.push_back("learning_rate=" + num(learning_rate));
        out.push_back("momentum=" + num(momentum));
        out.push_back("seed=" + std::to_string(seed));
        out.push_back("widths=" + w);
        out.push_back(std::string("selu_all_hidden=") + (selu_all_hidden ? "true" : "false"));
        return out;
    }
};

/// Momentum buffers for SGD.
struct OptimizerState {
    MlpParams velocity;
    std::uint64_t step = 0;

    static OptimizerState for_params(const MlpParams& p) { return {p.zeros_like(), 0}; }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stacks the first and second members of each pair as columns [f_i..., f_j...].
inline Matrix stack_pairs(const Dataset& ds, std::span<const Pair> pairs) {
    const auto b = static_cast<Eigen::Index>(pairs.size());
    Matrix x(static_cast<Eigen::Index>(ds.dimension()), 2 * b);
    for (Eigen::Index k = 0; k < b; ++k) {
        x.col(k) = ds[pairs[static_cast<std::size_t>(k)].i].vector;
        x.col(b + k) = ds[pairs[static_cast<std::size_t>(k)].j].vector;
    }
    return x;
}

struct PairBatchGradient {
    double loss_sum = 0.0;
    MlpParams grad;  // gradient of the summed loss
};

/// Loss and parameter gradient summed over `pairs`, through both twins.
inline PairBatchGradient pair_batch_gradient(const MlpParams& p, const Dataset& ds,
                                             std::span<const Pair> pairs, double margin) {
    const auto b = static_cast<Eigen::Index>(pairs.size());
    const auto trace = forward(p, stack_pairs(ds, pairs));
    const auto& r = trace.output();
    Eigen::RowVectorXd upstream(2 * b);
    PairBatchGradient out;
    for (Eigen::Index k = 0; k < b; ++k) {
        const auto& pr = pairs[static_cast<std::size_t>(k)];
        const double c = cosine_similarity(ds[pr.i].vector, ds[pr.j].vector);
        const double r1 = r(0, k);
        const double r2 = r(0, b + k);
        out.loss_sum += pair_loss(r1, r2, c, pr.label, margin);
        const auto g = pair_loss_grad(r1, r2, c, pr.label, margin);
        upstream[k] = g.d_r1;
        upstream[b + k] = g.d_r2;
    }
    out.grad = backward(p, trace, upstream).params;
    return out;
}

}  // namespace detail

/// Seed for the pair plan of a given epoch.
inline std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
    return detail::splitmix64(seed ^ detail::splitmix64(static_cast<std::uint64_t>(epoch) + 1));
}

/// One SGD-with-momentum update on a batch of pairs; returns the mean loss
/// of the batch evaluated before the update.
inline double batch_step(MlpParams& params, std::span<const Pair> pairs, const Dataset& ds,
                         OptimizerState& state, const TrainConfig& config) {
    if (pairs.empty()) return 0.0;
    auto g = detail::pair_batch_gradient(params, ds, pairs, config.margin);
    const double inv_b = 1.0 / static_cast<double>(pairs.size());
    const double mean_loss = g.loss_sum * inv_b;
    if (!std::isfinite(mean_loss) || !g.grad.all_finite()) {
        throw DivergenceError("non-finite loss or gradient at optimizer step " +
                              std::to_string(state.step) + " (mean loss " +
                              std::to_string(mean_loss) + ")");
    }
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        auto& v = state.velocity.layers[k];
        const auto& d = g.grad.layers[k];
        v.weight = config.momentum * v.weight - (config.learning_rate * inv_b) * d.weight;
        v.bias = config.momentum * v.bias - (config.learning_rate * inv_b) * d.bias;
        params.layers[k].weight += v.weight;
        params.layers[k].bias += v.bias;
    }
    ++state.step;
    if (!params.all_finite()) {
        throw DivergenceError("parameters became non-finite at optimizer step " + std::to_string(state.step));
    }
    return mean_loss;
}

struct TrainResult {
    MlpParams params;
    std::vector<double> epoch_loss;  // mean pair loss per epoch
};

/// Called after each epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

/// Trains a fresh twin on freshly sampled pairs every epoch.
inline TrainResult train(const Dataset& ds, std::span<const std::string> eligible,
                         const TrainConfig& config, const EpochCallback& on_epoch = {}) {
    config.validate();
    TrainResult result;
    result.params = init_params(config.seed, ds.dimension(), config.widths, config.selu_all_hidden);
    auto state = OptimizerState::for_params(result.params);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto plan = sample_epoch(ds, eligible, config.n_pos, config.n_neg, epoch_seed(config.seed, epoch));
        const std::span<const Pair> all(plan.pairs);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < all.size(); start += config.batch_size) {
            const auto n = std::min(config.batch_size, all.size() - start);
            const double mean = batch_step(result.params, all.subspan(start, n), ds, state, config);
            loss_sum += mean * static_cast<double>(n);
        }
        const double epoch_mean = all.empty() ? 0.0 : loss_sum / static_cast<double>(all.size());
        result.epoch_loss.push_back(epoch_mean);
        if (on_epoch) on_epoch(epoch, epoch_mean);
    }
    return result;
}

/// Iconicity of one embedding under a frozen twin.
inline double score(const MlpParams& params, const Vector& embedding) {
    return forward(params, embedding).score();
}

/// Scores every record, one record at a time.
inline std::vector<double> score_all(const MlpParams& params, const Dataset& ds) {
    std::vector<double> out;
    out.reserve(ds.size());
    for (const auto& r : ds.records()) out.push_back(score(params, r.vector));
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check through the pair loss.

struct GradCheckOptions {
    double step = 1e-6;
    /// Relative error is |a - n| / max(|a|, |n|, floor).
    double floor = 1e-4;
    /// Check at most this many parameters (evenly strided); 0 = all.
    std::size_t max_parameters = 0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    double input_max_relative_error = 0.0;
    std::size_t checked = 0;
};

/// Compares the analytic pair-loss gradient with central finite differences
/// for every parameter and every input coordinate of both embeddings.
inline GradCheckReport grad_check(const MlpParams& params, const Vector& f1, const Vector& f2, int y,
                                  double margin, const GradCheckOptions& opt = {}) {
    const double cos_alpha = cosine_similarity(f1, f2);
    auto loss_at = [&](const MlpParams& p, const Vector& a, const Vector& b) {
        Matrix x(a.size(), 2);
        x.col(0) = a;
        x.col(1) = b;
        const auto t = forward(p, x);
        return pair_loss(t.score(0), t.score(1), cos_alpha, y, margin);
    };
    auto rel = [&](double a, double n) {
        return std::abs(a - n) / std::max({std::abs(a), std::abs(n), opt.floor});
    };

    Matrix x(f1.size(), 2);
    x.col(0) = f1;
    x.col(1) = f2;
    const auto trace = forward(params, x);
    const auto g = pair_loss_grad(trace.score(0), trace.score(1), cos_alpha, y, margin);
    Eigen::RowVectorXd upstream(2);
    upstream << g.d_r1, g.d_r2;
    const auto analytic = backward(params, trace, upstream);

    GradCheckReport report;
    std::vector<double> flat_analytic;
    analytic.params.for_each([&](double v) { flat_analytic.push_back(v); });
    const std::size_t total = flat_analytic.size();
    const std::size_t stride =
        opt.max_parameters == 0 || opt.max_parameters >= total ? 1 : total / opt.max_parameters;

    MlpParams probe = params;
    std::vector<double*> slots;
    probe.for_each([&](double& v) { slots.push_back(&v); });
    for (std::size_t k = 0; k < total; k += stride) {
        double& v = *slots[k];
        const double saved = v;
        v = saved + opt.step;
        const double up = loss_at(probe, f1, f2);
        v = saved - opt.step;
        const double down = loss_at(probe, f1, f2);
        v = saved;
        const double numeric = (up - down) / (2.0 * opt.step);
        report.max_relative_error = std::max(report.max_relative_error, rel(flat_analytic[k], numeric));
        ++report.checked;
    }

    // Inputs: cos_alpha is held fixed, matching the training objective.
    for (int which = 0; which < 2; ++which) {
        for (Eigen::Index d = 0; d < f1.size(); ++d) {
            Vector a = f1;
            Vector b = f2;
            Vector& target = which == 0 ? a : b;
            const double saved = target[d];
            target[d] = saved + opt.step;
            const double up = loss_at(params, a, b);
            target[d] = saved - opt.step;
            const double down = loss_at(params, a, b);
            const double numeric = (up - down) / (2.0 * opt.step);
            report.input_max_relative_error =
                std::max(report.input_max_relative_error, rel(analytic.input(d, which), numeric));
        }
    }
    report.max_relative_error = std::max(report.max_relative_error, report.input_max_relative_error);
    return report;
}

/// Random network and random active pair, drawn away from the SeLU kink and
/// the hinge boundary, then checked with grad_check.
inline GradCheckReport grad_check_random(std::uint64_t seed, std::size_t input_dim,
                                         const std::vector<std::size_t>& widths, double margin = 0.5,
                                         const GradCheckOptions& opt = {}) {
    std::mt19937_64 rng(detail::splitmix64(seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 1);
    MlpParams params = init_params(detail::splitmix64(seed + 1), input_dim, widths);
    // Non-zero biases so their gradients are exercised away from the init point.
    for (auto& l : params.layers) {
        for (Eigen::Index k = 0; k < l.bias.size(); ++k) l.bias[k] = 0.1 * normal(rng);
    }
    constexpr double kKink = 1e-4;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Vector f1(static_cast<Eigen::Index>(input_dim));
        Vector f2(static_cast<Eigen::Index>(input_dim));
        for (Eigen::Index k = 0; k < f1.size(); ++k) {
            f1[k] = normal(rng);
            f2[k] = normal(rng);
        }
        f1 = l2_normalize(f1);
        f2 = l2_normalize(f2);
        Matrix x(f1.size(), 2);
        x.col(0) = f1;
        x.col(1) = f2;
        const auto t = forward(params, x);
        bool near_kink = false;
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
            if (params.layers[l].activation == Activation::Selu &&
                (t.pre[l].array().abs() < kKink).any()) {
                near_kink = true;
            }
        }
        if (near_kink) continue;
        const double c = cosine_similarity(f1, f2);
        int y = coin(rng) ? 1 : -1;
        if (!(y * (margin - t.score(0) * t.score(1) * c) > 0.0)) y = -y;
        if (std::abs(margin - t.score(0) * t.score(1) * c) < kKink) continue;
        return grad_check(params, f1, f2, y, margin, opt);
    }
    throw std::runtime_error("grad_check_random: could not draw a pair away from kinks");
}

}  // namespace iconic

#endif  // ICONIC_TRAINER_HPP
