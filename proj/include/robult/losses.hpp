#pragma once

// Soft positive-unlabeled contrastive loss, latent reconstruction loss and
// task supervision.
//
// Sign convention: every loss here is a quantity to minimize. The contrastive
// terms are negated, anchor-averaged log-likelihoods of the positive pairs
// under the in-batch softmax v(s_j, z_k) = exp(<s_j, z_k>/tau) / sum_h exp(<s_j, z_h>/tau).
// Pair weights and pseudo-labels are computed from detached values and enter
// the graph as constants.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "robult/batch.hpp"
#include "robult/errors.hpp"
#include "robult/model.hpp"
#include "robult/tensor.hpp"

namespace robult {

// ---------------------------------------------------------------------------
// Proximity and the in-batch softmax

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline void check_temperature(double tau) {
    if (!(tau > 0.0)) throw ConfigError("temperature must be positive, got " + std::to_string(tau));
}

/// phi(s, z) = exp(<s, z> / tau) for unit-norm s and z.
inline double proximity(std::span<const double> s, std::span<const double> z, double tau) {
    check_temperature(tau);
    if (s.size() != z.size()) throw DimensionError("proximity: vector lengths differ");
    return std::exp(dot(s, z) / tau);
}

/// Differentiable [B x B] matrix of log v(s_j, z_k).
inline Tensor log_v(const Tensor& S, const Tensor& Z, double tau) {
    check_temperature(tau);
    if (S.rows() < 2) throw ContractError("v_matrix needs a batch of at least 2 rows");
    if (S.shape() != Z.shape()) {
        throw DimensionError("v_matrix: S " + shape_string(S.shape()) + " vs Z " + shape_string(Z.shape()));
    }
    return log_softmax_rows(scale(matmul(S, transpose(Z)), 1.0 / tau));
}

/// Row-stochastic matrix v(s_j, z_k).
inline Matrix v_matrix(const Matrix& S, const Matrix& Z, double tau) {
    NoGradGuard no_grad;
    Matrix out = log_v(Tensor::constant(S), Tensor::constant(Z), tau).matrix();
    for (double& x : out.data) x = std::exp(x);
    return out;
}

// ---------------------------------------------------------------------------
// Positive sets

/// Per anchor j: B11[j] (labeled positives, always containing j itself) and
/// B10[j] (unlabeled rows whose pseudo-class matches the anchor's class).
struct PositiveSets {
    std::vector<std::vector<std::size_t>> labeled;
    std::vector<std::vector<std::size_t>> unlabeled;

    std::size_t size() const { return labeled.size(); }
};

/// `Label` is a class id, or a label set for multi-label data (positive iff equal).
/// Unlabeled anchors use their pseudo-label as class; without one they only
/// keep the self pair.
template <typename Label>
PositiveSets build_positive_sets(const std::vector<Label>& labels, const std::vector<bool>& labeled_mask,
                                 const std::vector<std::optional<Label>>& pseudo_labels) {
    const std::size_t B = labeled_mask.size();
    if (labels.size() != B || pseudo_labels.size() != B) {
        throw DimensionError("build_positive_sets: labels, mask and pseudo-labels must have equal length");
    }
    auto anchor_class = [&](std::size_t j) -> std::optional<Label> {
        if (labeled_mask[j]) return labels[j];
        return pseudo_labels[j];
    };
    PositiveSets sets;
    sets.labeled.resize(B);
    sets.unlabeled.resize(B);
    for (std::size_t j = 0; j < B; ++j) {
        const auto cls = anchor_class(j);
        for (std::size_t k = 0; k < B; ++k) {
            if (k == j) {
                sets.labeled[j].push_back(k);
                continue;
            }
            if (!cls) continue;
            if (labeled_mask[k]) {
                if (labels[k] == *cls) sets.labeled[j].push_back(k);
            } else if (pseudo_labels[k] && *pseudo_labels[k] == *cls) {
                sets.unlabeled[j].push_back(k);
            }
        }
    }
    return sets;
}

/// Two multi-label samples form a positive pair only if their label sets match exactly.
inline bool multilabel_positive(const std::set<int>& a, const std::set<int>& b) { return a == b; }

/// Mean proximity of anchor j to its labeled positive partners.
inline double reference_proximity(std::size_t j, const Matrix& S, const Matrix& Z, const PositiveSets& sets,
                                  double tau) {
    const auto& partners = sets.labeled.at(j);
    double acc = 0.0;
    for (std::size_t k : partners) acc += proximity(S.row(j), Z.row(k), tau);
    return acc / static_cast<double>(partners.size());
}

// ---------------------------------------------------------------------------
// Pair weights

enum class KernelKind { rbf, l1, l2 };

inline const char* to_string(KernelKind k) {
    switch (k) {
        case KernelKind::rbf: return "rbf";
        case KernelKind::l1: return "l1";
        case KernelKind::l2: return "l2";
    }
    return "?";
}

/// `gamma` is used by rbf; `max_distance` (in the kernel's own distance) by l1/l2.
struct KernelParams {
    KernelKind kind = KernelKind::rbf;
    double gamma = 1.0;
    double max_distance = 0.0;
};

/// l1 uses |d|, l2 the squared difference, both normalized by the batch maximum.
inline double kernel_distance(KernelKind kind, double phi_ref, double phi_cand) {
    const double diff = phi_cand - phi_ref;
    return kind == KernelKind::l2 ? diff * diff : std::abs(diff);
}

/// Weight in (0, 1] for rbf, [0, 1] for l1/l2; exactly 1 when phi_cand == phi_ref.
inline double pair_weight(double phi_ref, double phi_cand, const KernelParams& kernel) {
    if (kernel.kind == KernelKind::rbf) {
        if (!(kernel.gamma > 0.0)) throw ConfigError("rbf gamma must be positive");
        const double diff = phi_cand - phi_ref;
        return std::exp(-kernel.gamma * diff * diff);
    }
    const double dist = kernel_distance(kernel.kind, phi_ref, phi_cand);
    if (dist == 0.0) return 1.0;
    if (!(kernel.max_distance > 0.0)) throw ContractError("l1/l2 weights need a positive batch max distance");
    return std::max(0.0, 1.0 - dist / kernel.max_distance);
}

struct WeightOptions {
    KernelKind kernel = KernelKind::rbf;
    std::optional<double> gamma;  // nullopt: 1 / (2 var(phi over labeled positives) + 1e-8)
    bool uniform = false;
    bool percentile_filter = false;
};

// ---------------------------------------------------------------------------
// Soft-PU loss

struct PairContext {
    Tensor S;
    std::vector<Tensor> Z;
    PositiveSets sets;
    double temperature = 0.1;
    // Per modality [B x B]; entry (j, k) is w^i_jk for k in B10[j], 0 elsewhere.
    std::vector<Matrix> weights;
};

/// 1 / (2 var + 1e-8) over the proximities of all labeled positive pairs.
inline double auto_gamma(const Matrix& S, const std::vector<Matrix>& Z, const PositiveSets& sets, double tau) {
    std::vector<double> phis;
    for (const auto& Zi : Z)
        for (std::size_t j = 0; j < sets.size(); ++j)
            for (std::size_t k : sets.labeled[j]) phis.push_back(proximity(S.row(j), Zi.row(k), tau));
    double mean = 0.0;
    for (double p : phis) mean += p;
    mean /= static_cast<double>(phis.size());
    double var = 0.0;
    for (double p : phis) var += (p - mean) * (p - mean);
    var /= static_cast<double>(phis.size());
    return 1.0 / (2.0 * var + 1e-8);
}

/// Fills ctx.weights from detached proximities.
inline void assign_pair_weights(PairContext& ctx, const WeightOptions& options) {
    const std::size_t B = ctx.sets.size();
    const double tau = ctx.temperature;
    const Matrix S = ctx.S.matrix();
    std::vector<Matrix> Z;
    for (const auto& z : ctx.Z) Z.push_back(z.matrix());

    double gamma = 1.0;
    if (options.kernel == KernelKind::rbf && !options.uniform) {
        gamma = options.gamma ? *options.gamma : auto_gamma(S, Z, ctx.sets, tau);
        if (!(gamma > 0.0)) throw ConfigError("rbf gamma must be positive");
    }

    ctx.weights.assign(Z.size(), Matrix(B, B, 0.0));
    for (std::size_t i = 0; i < Z.size(); ++i) {
        Matrix& W = ctx.weights[i];
        for (std::size_t j = 0; j < B; ++j) {
            if (ctx.sets.unlabeled[j].empty()) continue;
            if (options.uniform) {
                for (std::size_t k : ctx.sets.unlabeled[j]) W(j, k) = 1.0;
                continue;
            }
            const double ref = reference_proximity(j, S, Z[i], ctx.sets, tau);
            KernelParams params{options.kernel, gamma, 0.0};
            if (options.kernel != KernelKind::rbf) {
                for (std::size_t k = 0; k < B; ++k)
                    params.max_distance = std::max(params.max_distance,
                                                   kernel_distance(options.kernel, ref, proximity(S.row(j), Z[i].row(k), tau)));
            }
            for (std::size_t k : ctx.sets.unlabeled[j])
                W(j, k) = pair_weight(ref, proximity(S.row(j), Z[i].row(k), tau), params);
        }
        if (options.percentile_filter) {
            std::vector<double> candidates;
            for (std::size_t j = 0; j < B; ++j)
                for (std::size_t k : ctx.sets.unlabeled[j]) candidates.push_back(W(j, k));
            if (candidates.empty()) continue;
            std::ranges::sort(candidates);
            const double cut = candidates[candidates.size() / 4];
            for (std::size_t j = 0; j < B; ++j)
                for (std::size_t k : ctx.sets.unlabeled[j])
                    if (W(j, k) < cut) W(j, k) = 0.0;
        }
    }
}

/// -(1/(M B)) sum_i sum_j (1/|B11_j|) sum_{k in B11_j} log v(s_j, z^i_k).
inline Tensor loss_lb(const PairContext& ctx) {
    const std::size_t B = ctx.sets.size();
    const double M = static_cast<double>(ctx.Z.size());
    Matrix coef(B, B, 0.0);
    for (std::size_t j = 0; j < B; ++j) {
        const double c = -1.0 / (M * static_cast<double>(B) * static_cast<double>(ctx.sets.labeled[j].size()));
        for (std::size_t k : ctx.sets.labeled[j]) coef(j, k) = c;
    }
    Tensor total = weighted_sum(log_v(ctx.S, ctx.Z.at(0), ctx.temperature), coef);
    for (std::size_t i = 1; i < ctx.Z.size(); ++i) total = add(total, weighted_sum(log_v(ctx.S, ctx.Z[i], ctx.temperature), coef));
    return total;
}

/// -(1/(M B)) sum_i sum_j (1/|B10_j|) sum_{k in B10_j} w^i_jk log v(s_j, z^i_k).
/// Anchors without unlabeled positives contribute 0.
inline Tensor loss_ulb(const PairContext& ctx) {
    const std::size_t B = ctx.sets.size();
    const double M = static_cast<double>(ctx.Z.size());
    if (ctx.weights.size() != ctx.Z.size()) throw ContractError("loss_ulb: pair weights not assigned");
    bool any = false;
    for (const auto& u : ctx.sets.unlabeled) any = any || !u.empty();
    if (!any) return Tensor::scalar(0.0);

    Tensor total;
    for (std::size_t i = 0; i < ctx.Z.size(); ++i) {
        Matrix coef(B, B, 0.0);
        for (std::size_t j = 0; j < B; ++j) {
            const auto& cand = ctx.sets.unlabeled[j];
            if (cand.empty()) continue;
            const double c = -1.0 / (M * static_cast<double>(B) * static_cast<double>(cand.size()));
            for (std::size_t k : cand) coef(j, k) = c * ctx.weights[i](j, k);
        }
        Tensor term = weighted_sum(log_v(ctx.S, ctx.Z[i], ctx.temperature), coef);
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

inline Tensor loss_pu(const PairContext& ctx) { return add(loss_ulb(ctx), loss_lb(ctx)); }

// ---------------------------------------------------------------------------
// Latent reconstruction

/// (1/(M B)) sum_i sum_j 1 - cos^2(h~^i_j, h^i_j). In [0, 1].
inline Tensor loss_rec(const std::vector<Tensor>& H, const std::vector<Tensor>& H_tilde) {
    if (H.size() != H_tilde.size() || H.empty()) throw DimensionError("loss_rec: modality counts differ");
    Tensor total;
    double count = 0.0;
    for (std::size_t i = 0; i < H.size(); ++i) {
        detail::require_same_shape(H[i], H_tilde[i], "loss_rec");
        Tensor cos = sum_rows(mul(l2_normalize_rows(H_tilde[i]), l2_normalize_rows(H[i])));
        Tensor term = sum(add_scalar(scale(square(cos), -1.0), 1.0));
        total = total.defined() ? add(total, term) : term;
        count += static_cast<double>(H[i].rows());
    }
    return scale(total, 1.0 / count);
}

// ---------------------------------------------------------------------------
// Supervision

struct SupervisedLoss {
    Tensor value;
    bool supervised = false;  // false when the batch has no labeled row
};

/// Mean cross-entropy (classification) or mean absolute error (regression)
/// over labeled rows of one prediction head.
inline SupervisedLoss loss_sup(const Tensor& output, const std::vector<int>& labels, const std::vector<double>& targets,
                               const std::vector<bool>& labeled_mask, TaskKind task) {
    const std::size_t B = output.rows();
    if (labeled_mask.size() != B) throw DimensionError("loss_sup: mask length differs from batch");
    std::size_t n = 0;
    for (bool l : labeled_mask) n += l ? 1 : 0;
    if (n == 0) return {Tensor::scalar(0.0), false};
    const double inv = 1.0 / static_cast<double>(n);

    if (task == TaskKind::classification) {
        const std::size_t C = output.cols();
        Matrix coef(B, C, 0.0);
        for (std::size_t j = 0; j < B; ++j) {
            if (!labeled_mask[j]) continue;
            const int y = labels.at(j);
            if (y < 0 || static_cast<std::size_t>(y) >= C) throw ContractError("loss_sup: class id out of range");
            coef(j, static_cast<std::size_t>(y)) = -inv;
        }
        return {weighted_sum(log_softmax_rows(output), coef), true};
    }
    if (output.cols() != 1) throw DimensionError("loss_sup: regression head must have width 1");
    Matrix y(B, 1, 0.0), mask(B, 1, 0.0);
    for (std::size_t j = 0; j < B; ++j) {
        if (!labeled_mask[j]) continue;
        y(j, 0) = targets.at(j);
        mask(j, 0) = inv;
    }
    return {weighted_sum(absolute(sub(output, Tensor::constant(y))), mask), true};
}

/// Supervision averaged over the fused head and every per-branch head.
inline SupervisedLoss supervised_loss(const ForwardOutputs& out, const Batch& batch, TaskKind task) {
    SupervisedLoss fused = loss_sup(out.logits_fused, batch.labels, batch.targets, batch.labeled, task);
    if (!fused.supervised) return fused;
    Tensor total = fused.value;
    for (const auto& head : out.logits_per_branch)
        total = add(total, loss_sup(head, batch.labels, batch.targets, batch.labeled, task).value);
    return {scale(total, 1.0 / static_cast<double>(out.logits_per_branch.size() + 1)), true};
}

// ---------------------------------------------------------------------------
// Labels

/// Sentiment score in [-3, 3] -> nearest integer bin, halves rounded away from zero.
inline int discretize_label(double y) {
    return static_cast<int>(std::round(std::clamp(y, -3.0, 3.0)));
}

/// Hard pseudo-classes for unlabeled rows from the fused-path output.
inline std::vector<std::optional<int>> pseudo_labels(const Matrix& fused_output, const std::vector<bool>& labeled_mask,
                                                     TaskKind task) {
    std::vector<std::optional<int>> out(fused_output.rows);
    const std::vector<int> arg = task == TaskKind::classification ? RobultModel::argmax_rows(fused_output)
                                                                  : std::vector<int>{};
    for (std::size_t j = 0; j < fused_output.rows; ++j) {
        if (labeled_mask[j]) continue;
        out[j] = task == TaskKind::classification ? arg[j] : discretize_label(fused_output(j, 0));
    }
    return out;
}

}  // namespace robult
