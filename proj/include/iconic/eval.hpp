#ifndef ICONIC_EVAL_HPP
#define ICONIC_EVAL_HPP

#include "iconic/core.hpp"
#include "iconic/csv_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace iconic {

// ---------------------------------------------------------------------------
// ROC

/// Operating point for the rule "accept when similarity >= threshold".
struct RocPoint {
    double threshold = 0.0;
    std::size_t true_accepts = 0;
    std::size_t false_accepts = 0;
    double tpr = 0.0;
    double fpr = 0.0;
};

/// Empirical ROC, ordered by increasing threshold. The first point accepts
/// everything (1, 1); the last has threshold +inf and accepts nothing (0, 0).
struct RocCurve {
    std::vector<RocPoint> points;
    std::size_t genuine = 0;
    std::size_t impostor = 0;
};

struct LabeledScore {
    double score = 0.0;
    bool genuine = false;
};

inline RocCurve roc(std::span<const LabeledScore> scored) {
    RocCurve curve;
    for (const auto& s : scored) {
        if (!std::isfinite(s.score)) throw std::invalid_argument("roc: non-finite score");
        (s.genuine ? curve.genuine : curve.impostor) += 1;
    }
    if (curve.genuine == 0 || curve.impostor == 0) {
        throw std::invalid_argument("roc: need at least one genuine and one impostor score");
    }
    std::vector<LabeledScore> sorted(scored.begin(), scored.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const LabeledScore& a, const LabeledScore& b) { return a.score > b.score; });

    const auto g = static_cast<double>(curve.genuine);
    const auto n = static_cast<double>(curve.impostor);
    std::vector<RocPoint> descending;
    descending.push_back({std::numeric_limits<double>::infinity(), 0, 0, 0.0, 0.0});
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t k = 0; k < sorted.size();) {
        const double t = sorted[k].score;
        for (; k < sorted.size() && sorted[k].score == t; ++k) (sorted[k].genuine ? tp : fp) += 1;
        descending.push_back({t, tp, fp, static_cast<double>(tp) / g, static_cast<double>(fp) / n});
    }
    curve.points.assign(descending.rbegin(), descending.rend());
    return curve;
}

struct TprAtFpr {
    double target = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;        // achieved, <= target
    double threshold = 0.0;
    bool resolvable = true;  // false when target < 1 / impostor count
};

/// TPR at the largest achievable FPR not exceeding `target`.
inline TprAtFpr tpr_at_fpr(const RocCurve& curve, double target) {
    if (curve.points.empty()) throw std::invalid_argument("tpr_at_fpr: empty curve");
    TprAtFpr out;
    out.target = target;
    out.resolvable = target * static_cast<double>(curve.impostor) >= 1.0;
    const RocPoint* best = nullptr;
    for (const auto& p : curve.points) {
        if (p.fpr > target) continue;
        if (!best || p.false_accepts > best->false_accepts ||
            (p.false_accepts == best->false_accepts && p.true_accepts > best->true_accepts)) {
            best = &p;
        }
    }
    // The +inf point always qualifies for target >= 0.
    if (!best) best = &curve.points.back();
    out.tpr = best->tpr;
    out.fpr = best->fpr;
    out.threshold = best->threshold;
    return out;
}

inline std::string format_roc(const RocCurve& curve, const std::vector<std::string>& comments = {}) {
    std::string out = csv::comment_block(comments);
    out += "threshold,true_accepts,false_accepts,tpr,fpr\n";
    for (const auto& p : curve.points) {
        out += csv::format_double(p.threshold) + ',' + std::to_string(p.true_accepts) + ',' +
               std::to_string(p.false_accepts) + ',' + csv::format_double(p.tpr) + ',' +
               csv::format_double(p.fpr) + '\n';
    }
    return out;
}

inline std::string format_tpr_table(const std::vector<TprAtFpr>& rows,
                                    const std::vector<std::string>& comments = {}) {
    std::string out = csv::comment_block(comments);
    out += "fpr_target,tpr,achieved_fpr,threshold,resolvable\n";
    for (const auto& r : rows) {
        out += csv::format_double(r.target) + ',' + csv::format_double(r.tpr) + ',' +
               csv::format_double(r.fpr) + ',' + csv::format_double(r.threshold) + ',' +
               (r.resolvable ? "1" : "0") + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Covariate analyses

struct Bin {
    double lo = 0.0;  // smallest covariate value in the bin
    double hi = 0.0;  // largest covariate value in the bin
    std::size_t count = 0;
    double mean_score = 0.0;
    double mean_covariate = 0.0;
};

struct BinStats {
    std::vector<Bin> bins;
};

/// Equal-count bins over `covariate`. Tied covariate values never straddle a
/// boundary, so heavy ties yield fewer (larger) bins.
inline BinStats covariate_bins(std::span<const double> covariate, std::span<const double> scores,
                               std::size_t n_bins) {
    if (covariate.size() != scores.size()) throw std::invalid_argument("covariate_bins: length mismatch");
    const std::size_t n = covariate.size();
    if (n_bins == 0 || n_bins > n) {
        throw std::invalid_argument("covariate_bins: need 1 <= n_bins <= N (n_bins " + std::to_string(n_bins) +
                                    ", N " + std::to_string(n) + ")");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return covariate[a] < covariate[b]; });

    std::vector<std::size_t> cuts{0};
    for (std::size_t b = 1; b < n_bins; ++b) {
        std::size_t cut = std::max(b * n / n_bins, cuts.back());
        while (cut > 0 && cut < n && covariate[order[cut]] == covariate[order[cut - 1]]) ++cut;
        if (cut > cuts.back() && cut < n) cuts.push_back(cut);
    }
    cuts.push_back(n);

    BinStats out;
    for (std::size_t b = 0; b + 1 < cuts.size(); ++b) {
        Bin bin;
        bin.count = cuts[b + 1] - cuts[b];
        bin.lo = covariate[order[cuts[b]]];
        bin.hi = covariate[order[cuts[b + 1] - 1]];
        double s = 0.0;
        double c = 0.0;
        for (std::size_t k = cuts[b]; k < cuts[b + 1]; ++k) {
            s += scores[order[k]];
            c += covariate[order[k]];
        }
        bin.mean_score = s / static_cast<double>(bin.count);
        bin.mean_covariate = c / static_cast<double>(bin.count);
        out.bins.push_back(bin);
    }
    return out;
}

struct LevelStats {
    double level = 0.0;
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::vector<std::size_t> histogram;  // equal-width bins over [0, 1]
};

/// Score summary per distinct covariate level, in increasing level order.
inline std::vector<LevelStats> level_distributions(std::span<const double> levels, std::span<const double> scores,
                                                   std::size_t hist_bins = 10) {
    if (levels.size() != scores.size()) throw std::invalid_argument("level_distributions: length mismatch");
    if (hist_bins == 0) throw std::invalid_argument("level_distributions: hist_bins must be positive");
    std::vector<double> distinct(levels.begin(), levels.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::vector<LevelStats> out;
    for (double level : distinct) {
        LevelStats s;
        s.level = level;
        s.histogram.assign(hist_bins, 0);
        double sum = 0.0;
        for (std::size_t k = 0; k < levels.size(); ++k) {
            if (levels[k] != level) continue;
            ++s.count;
            sum += scores[k];
            const double clamped = std::clamp(scores[k], 0.0, 1.0);
            const auto h = std::min(hist_bins - 1, static_cast<std::size_t>(clamped * static_cast<double>(hist_bins)));
            ++s.histogram[h];
        }
        s.mean = sum / static_cast<double>(s.count);
        double ss = 0.0;
        for (std::size_t k = 0; k < levels.size(); ++k) {
            if (levels[k] == level) ss += (scores[k] - s.mean) * (scores[k] - s.mean);
        }
        s.stddev = std::sqrt(ss / static_cast<double>(s.count));
        out.push_back(std::move(s));
    }
    return out;
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t k = 0; k < order.size();) {
        std::size_t end = k;
        while (end < order.size() && x[order[end]] == x[order[k]]) ++end;
        const double avg = 0.5 * static_cast<double>(k + 1 + end);
        for (std::size_t m = k; m < end; ++m) ranks[order[m]] = avg;
        k = end;
    }
    return ranks;
}

/// Spearman rank correlation (Pearson correlation of average ranks).
inline double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("spearman: need at least two observations");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double mean = 0.5 * static_cast<double>(x.size() + 1);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double a = rx[k] - mean;
        const double b = ry[k] - mean;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("spearman: constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Linear probe

struct ProbeResult {
    double normalized_mae = 0.0;  // test MAE / test covariate stddev
    double mae = 0.0;
    double test_stddev = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
};

/// Ridge regression of `target` on the rows of `features` (N x D).
///
/// Features are standardized with training statistics; the intercept is not
/// penalized. The split is a seeded shuffle with `train_fraction` of rows
/// used for fitting.
inline ProbeResult linear_probe(const Matrix& features, std::span<const double> target, std::uint64_t seed,
                                double train_fraction = 0.6, double ridge = 1e-6) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (target.size() != n) throw std::invalid_argument("linear_probe: one target per row required");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("linear_probe: train_fraction must lie in (0, 1)");
    }
    if (!(ridge >= 0.0)) throw std::invalid_argument("linear_probe: ridge must be >= 0");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    const std::size_t n_test = n - n_train;
    if (n_train < 2 || n_test < 2) throw std::invalid_argument("linear_probe: too few rows to split");

    const auto d = features.cols();
    Matrix xtr(static_cast<Eigen::Index>(n_train), d);
    Vector ytr(static_cast<Eigen::Index>(n_train));
    for (std::size_t k = 0; k < n_train; ++k) {
        xtr.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(order[k]));
        ytr[static_cast<Eigen::Index>(k)] = target[order[k]];
    }
    const Eigen::RowVectorXd mu = xtr.colwise().mean();
    Eigen::RowVectorXd scale = ((xtr.rowwise() - mu).array().square().colwise().mean()).sqrt();
    for (Eigen::Index c = 0; c < d; ++c) {
        if (!(scale[c] > 0.0)) scale[c] = 1.0;
    }
    const Matrix z = (xtr.rowwise() - mu).array().rowwise() / scale.array();
    const double y_mean = ytr.mean();

    Matrix gram = z.transpose() * z;
    gram.diagonal().array() += ridge;
    Eigen::LDLT<Matrix> solver(gram);
    const auto& diag = solver.vectorD();
    if (solver.info() != Eigen::Success || d == 0 ||
        !(diag.minCoeff() > 1e-12 * std::max(1.0, diag.cwiseAbs().maxCoeff()))) {
        throw std::runtime_error("linear_probe: degenerate design matrix");
    }
    const Vector w = solver.solve(z.transpose() * (ytr.array() - y_mean).matrix());

    ProbeResult out;
    out.n_train = n_train;
    out.n_test = n_test;
    double abs_sum = 0.0;
    double t_sum = 0.0;
    for (std::size_t k = n_train; k < n; ++k) t_sum += target[order[k]];
    const double t_mean = t_sum / static_cast<double>(n_test);
    double t_ss = 0.0;
    for (std::size_t k = n_train; k < n; ++k) {
        const auto row = static_cast<Eigen::Index>(order[k]);
        const Eigen::RowVectorXd zr = (features.row(row) - mu).array() / scale.array();
        const double pred = y_mean + zr.dot(w.transpose());
        abs_sum += std::abs(pred - target[order[k]]);
        t_ss += (target[order[k]] - t_mean) * (target[order[k]] - t_mean);
    }
    out.mae = abs_sum / static_cast<double>(n_test);
    out.test_stddev = std::sqrt(t_ss / static_cast<double>(n_test));
    if (!(out.test_stddev > 0.0)) throw std::runtime_error("linear_probe: covariate is constant on the test split");
    out.normalized_mae = out.mae / out.test_stddev;
    return out;
}

/// Stacks dataset vectors as rows.
inline Matrix embedding_matrix(const Dataset& ds) {
    Matrix x(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(ds.dimension()));
    for (std::size_t k = 0; k < ds.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = ds[k].vector.transpose();
    return x;
}

/// Values of one covariate for every record; throws if any record lacks it.
inline std::vector<double> covariate_column(const Dataset& ds, const std::string& name) {
    std::vector<double> out;
    out.reserve(ds.size());
    for (const auto& r : ds.records()) {
        auto it = r.covariates.find(name);
        if (it == r.covariates.end()) {
            throw DataError("record '" + r.image_id + "' has no covariate '" + name + "'");
        }
        out.push_back(it->second);
    }
    return out;
}

}  // namespace iconic

#endif  // ICONIC_EVAL_HPP
