#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "robult/batch.hpp"
#include "robult/errors.hpp"
#include "robult/tensor.hpp"

namespace robult {

// ---------------------------------------------------------------------------
// Task metrics

/// One row of the metrics report. Fields that do not apply to the task stay empty.
struct MetricRow {
    std::string tag;
    std::optional<double> mae;
    std::optional<double> pearson_corr;
    std::optional<double> accuracy;
    std::optional<double> binary_acc;
    std::optional<double> f1_binary;
    std::optional<double> f1_macro;
    std::optional<double> auroc;
};

inline double mean_absolute_error(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size() || pred.empty()) throw DimensionError("mae: length mismatch or empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
    return acc / static_cast<double>(pred.size());
}

/// Product-moment correlation; nullopt when either side has zero variance.
inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("pearson: length mismatch");
    if (x.size() < 2) throw UndefinedMetricError("pearson: need at least 2 samples");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Area under the ROC curve via the Mann-Whitney U statistic with midranks.
inline double auroc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) throw DimensionError("auroc: length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool p : positive) n_pos += p ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auroc: both classes must be present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (positive[i]) rank_sum += rank[i];
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

/// Confusion-matrix F1 of one class (0 when it has neither support nor predictions).
inline double f1_for_class(const std::vector<int>& pred, const std::vector<int>& truth, int cls) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == cls, t = truth[i] == cls;
        tp += (p && t) ? 1 : 0;
        fp += (p && !t) ? 1 : 0;
        fn += (!p && t) ? 1 : 0;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

/// Mean per-class F1 over classes 0..classes-1.
inline double f1_macro(const std::vector<int>& pred, const std::vector<int>& truth, std::size_t classes) {
    if (pred.size() != truth.size()) throw DimensionError("f1_macro: length mismatch");
    double acc = 0.0;
    for (std::size_t c = 0; c < classes; ++c) acc += f1_for_class(pred, truth, static_cast<int>(c));
    return acc / static_cast<double>(classes);
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size() || pred.empty()) throw DimensionError("accuracy: length mismatch or empty input");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

/// Metrics for model outputs [n x K] (logits, or K = 1 regression values).
/// Regression targets are thresholded at 0 (> 0 positive) for the binary metrics.
inline MetricRow task_metrics(const Matrix& outputs, const std::vector<int>& labels, const std::vector<double>& targets,
                              TaskKind task, std::size_t classes, std::string tag = {}) {
    MetricRow row;
    row.tag = std::move(tag);
    const std::size_t n = outputs.rows;
    if (task == TaskKind::regression) {
        std::vector<double> pred(n);
        for (std::size_t i = 0; i < n; ++i) pred[i] = outputs(i, 0);
        if (targets.size() != n) throw DimensionError("task_metrics: targets length mismatch");
        row.mae = mean_absolute_error(pred, targets);
        if (n >= 2) row.pearson_corr = pearson(pred, targets);
        std::vector<int> pb(n), tb(n);
        for (std::size_t i = 0; i < n; ++i) {
            pb[i] = pred[i] > 0.0 ? 1 : 0;
            tb[i] = targets[i] > 0.0 ? 1 : 0;
        }
        row.binary_acc = accuracy(pb, tb);
        row.f1_binary = f1_for_class(pb, tb, 1);
        return row;
    }

    if (labels.size() != n) throw DimensionError("task_metrics: labels length mismatch");
    std::vector<int> pred(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = outputs.row(i);
        pred[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    row.accuracy = accuracy(pred, labels);
    row.f1_macro = f1_macro(pred, labels, classes);
    if (classes == 2) {
        row.binary_acc = row.accuracy;
        row.f1_binary = f1_for_class(pred, labels, 1);
    }
    // Binary: score of class 1. Otherwise one-vs-rest macro average, skipped
    // when some class is absent.
    double auc_sum = 0.0;
    std::size_t auc_count = 0;
    for (std::size_t c = classes == 2 ? 1 : 0; c < classes; ++c) {
        std::vector<double> score(n);
        std::vector<bool> pos(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto r = outputs.row(i);
            const double mx = *std::max_element(r.begin(), r.end());
            double z = 0.0;
            for (double v : r) z += std::exp(v - mx);
            score[i] = std::exp(r[c] - mx) / z;
            pos[i] = labels[i] == static_cast<int>(c);
        }
        try {
            auc_sum += auroc(score, pos);
            ++auc_count;
        } catch (const UndefinedMetricError&) {
            auc_count = 0;
            break;
        }
    }
    if (auc_count > 0) row.auroc = auc_sum / static_cast<double>(auc_count);
    return row;
}

// ---------------------------------------------------------------------------
// Histogram mutual information

/// Centered projection of the rows of `a` onto its leading principal axis.
inline std::vector<double> principal_projection(const Matrix& a) {
    const std::size_t n = a.rows, d = a.cols;
    std::vector<double> mu(d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) mu[c] += a(r, c);
    for (double& m : mu) m /= static_cast<double>(n);

    std::vector<double> v(d);
    if (d == 1) {
        v[0] = 1.0;
    } else {
        Matrix cov(d, d, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t p = 0; p < d; ++p) {
                const double xp = a(r, p) - mu[p];
                for (std::size_t q = 0; q < d; ++q) cov(p, q) += xp * (a(r, q) - mu[q]);
            }
        // Fixed, non-symmetric start so results are reproducible.
        for (std::size_t c = 0; c < d; ++c) v[c] = 1.0 + 0.01 * static_cast<double>(c);
        std::vector<double> next(d);
        for (int it = 0; it < 1000; ++it) {
            double norm = 0.0;
            for (std::size_t p = 0; p < d; ++p) {
                next[p] = 0.0;
                for (std::size_t q = 0; q < d; ++q) next[p] += cov(p, q) * v[q];
                norm += next[p] * next[p];
            }
            norm = std::sqrt(norm);
            if (!(norm > 0.0)) throw DegenerateInputError("histogram_mi: representation has no variance");
            double change = 0.0;
            for (std::size_t p = 0; p < d; ++p) {
                next[p] /= norm;
                change += std::abs(next[p] - v[p]);
            }
            v.swap(next);
            if (change < 1e-12) break;
        }
    }
    std::vector<double> proj(n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) proj[r] += (a(r, c) - mu[c]) * v[c];
    return proj;
}

namespace detail {

inline std::vector<std::size_t> equal_width_bins(const std::vector<double>& x, std::size_t bins) {
    const auto [lo, hi] = std::ranges::minmax(x);
    if (!(hi - lo > 1e-12)) throw DegenerateInputError("histogram_mi: projection has no spread");
    std::vector<std::size_t> idx(x.size());
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i < x.size(); ++i)
        idx[i] = std::min(bins - 1, static_cast<std::size_t>((x[i] - lo) / width));
    return idx;
}

}  // namespace detail

/// Plug-in MI (nats) between the leading principal projections of a and b,
/// from a bins x bins equal-width joint histogram. Clamped at 0.
inline double histogram_mi(const Matrix& a, const Matrix& b, std::size_t bins = 16) {
    if (a.rows != b.rows) throw DimensionError("histogram_mi: row counts differ");
    if (a.cols == 0 || b.cols == 0) throw DimensionError("histogram_mi: zero-width input");
    if (bins < 2) throw ContractError("histogram_mi: need at least 2 bins");
    if (a.rows < 10 * bins) throw ContractError("histogram_mi: need at least 10 samples per bin");
    const auto ia = detail::equal_width_bins(principal_projection(a), bins);
    const auto ib = detail::equal_width_bins(principal_projection(b), bins);
    const double n = static_cast<double>(a.rows);
    Matrix joint(bins, bins, 0.0);
    std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        joint(ia[r], ib[r]) += 1.0 / n;
        pa[ia[r]] += 1.0 / n;
        pb[ib[r]] += 1.0 / n;
    }
    double mi = 0.0;
    for (std::size_t x = 0; x < bins; ++x)
        for (std::size_t y = 0; y < bins; ++y)
            if (joint(x, y) > 0.0) mi += joint(x, y) * std::log(joint(x, y) / (pa[x] * pb[y]));
    return std::max(0.0, mi);
}

// ---------------------------------------------------------------------------
// Alignment and uniformity

struct AlignmentUniformity {
    double alignment = 0.0;   // mean ||x - y||^2 over positive pairs
    double uniformity = 0.0;  // log mean exp(-2 ||x - y||^2) over all distinct pairs
    std::vector<std::pair<double, std::size_t>> distance_histogram;  // (left bin edge, count) of ||x - y||
};

/// Rows of `pos_x` and `pos_y` are matched positive pairs; `all` is the full
/// set of unit-norm representations. Distances are binned over [0, 2].
inline AlignmentUniformity alignment_uniformity(const Matrix& pos_x, const Matrix& pos_y, const Matrix& all,
                                                std::size_t bins = 20) {
    if (pos_x.rows != pos_y.rows || pos_x.cols != pos_y.cols) throw DimensionError("alignment: pair matrices differ");
    auto sqdist = [](std::span<const double> x, std::span<const double> y) {
        double acc = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) acc += (x[k] - y[k]) * (x[k] - y[k]);
        return acc;
    };
    AlignmentUniformity out;
    const double width = 2.0 / static_cast<double>(bins);
    std::vector<std::size_t> counts(bins, 0);
    for (std::size_t r = 0; r < pos_x.rows; ++r) {
        const double sq = sqdist(pos_x.row(r), pos_y.row(r));
        out.alignment += sq;
        counts[std::min(bins - 1, static_cast<std::size_t>(std::sqrt(sq) / width))] += 1;
    }
    if (pos_x.rows > 0) out.alignment /= static_cast<double>(pos_x.rows);
    for (std::size_t b = 0; b < bins; ++b) out.distance_histogram.emplace_back(width * static_cast<double>(b), counts[b]);

    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < all.rows; ++i)
        for (std::size_t j = i + 1; j < all.rows; ++j) {
            acc += std::exp(-2.0 * sqdist(all.row(i), all.row(j)));
            ++pairs;
        }
    out.uniformity = pairs > 0 ? std::log(acc / static_cast<double>(pairs)) : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Positive-majority probability
//
// Probability that, in a batch of B samples over c classes, same-class
// couplets outnumber different-class couplets among the C(B, 2) pairs.

enum class CoupletModel {
    // Each couplet is positive independently with probability 1/c^2.
    independent_couplets,
    // Labels drawn uniformly and independently per sample; couplets inherit them.
    uniform_labels,
};

namespace detail {

inline double log_choose(double n, double k) { return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1); }

// weight[r][s]: sum over class-count vectors placing r samples with s same-class
// couplets of prod 1 / n_k!, built one class at a time.
inline std::vector<std::vector<double>> count_weights(std::size_t B, std::size_t c) {
    const std::size_t pairs = B * (B - 1) / 2;
    std::vector<std::vector<double>> w(B + 1, std::vector<double>(pairs + 1, 0.0));
    w[0][0] = 1.0;
    for (std::size_t k = 0; k < c; ++k) {
        std::vector<std::vector<double>> next(B + 1, std::vector<double>(pairs + 1, 0.0));
        for (std::size_t r = 0; r <= B; ++r)
            for (std::size_t s = 0; s <= pairs; ++s) {
                if (w[r][s] == 0.0) continue;
                for (std::size_t n = 0; r + n <= B; ++n)
                    next[r + n][s + n * (n - 1) / 2] += w[r][s] / std::tgamma(static_cast<double>(n) + 1);
            }
        w = std::move(next);
    }
    return w;
}

}  // namespace detail

inline constexpr std::size_t kExactEnumerationMaxBatch = 12;

inline double positive_majority_probability(std::size_t B, std::size_t c,
                                            CoupletModel model = CoupletModel::independent_couplets,
                                            std::uint64_t seed = 0x9e3779b97f4a7c15ULL,
                                            std::size_t trials = 1'000'000) {
    if (B < 2 || c < 2) throw ContractError("positive_majority_probability: need B >= 2 and c >= 2");
    const std::size_t pairs = B * (B - 1) / 2;
    auto majority = [pairs](std::size_t same) { return 2 * same > pairs; };

    if (model == CoupletModel::independent_couplets) {
        // Exact sum over the number of positive couplets.
        const double p = 1.0 / static_cast<double>(c * c);
        double total = 0.0;
        for (std::size_t k = 0; k <= pairs; ++k) {
            if (!majority(k)) continue;
            const double kk = static_cast<double>(k), nn = static_cast<double>(pairs);
            total += std::exp(detail::log_choose(nn, kk) + kk * std::log(p) + (nn - kk) * std::log1p(-p));
        }
        return total;
    }

    auto same_pairs = [](const std::vector<std::size_t>& counts) {
        std::size_t s = 0;
        for (std::size_t n : counts) s += n * (n - 1) / 2;
        return s;
    };
    if (B <= kExactEnumerationMaxBatch) {
        // Every labeling, grouped by class counts with multinomial weight.
        const auto w = detail::count_weights(B, c);
        const double log_scale = std::lgamma(static_cast<double>(B) + 1) - static_cast<double>(B) * std::log(static_cast<double>(c));
        double total = 0.0;
        for (std::size_t s = 0; s <= pairs; ++s)
            if (majority(s)) total += w[B][s];
        return total * std::exp(log_scale);
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> label(0, c - 1);
    std::vector<std::size_t> counts(c);
    std::size_t hits = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        std::ranges::fill(counts, 0);
        for (std::size_t j = 0; j < B; ++j) ++counts[label(rng)];
        hits += majority(same_pairs(counts)) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(trials);
}

}  // namespace robult
