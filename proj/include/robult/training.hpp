#pragma once

// Selective-gradient training: one forward pass per batch, then three backward
// passes with different parameter groups enabled, then one optimizer step.
//
//   flag 1 -> unique heads g^1..g^M and reconstructors r^1..r^M ; backward L_rec
//   flag 2 -> projectors f^0..f^M and shared head g^0          ; backward L_PU
//   flag 0 -> everything                                        ; backward L_sup

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "robult/batch.hpp"
#include "robult/errors.hpp"
#include "robult/losses.hpp"
#include "robult/model.hpp"
#include "robult/optim.hpp"
#include "robult/synthdata.hpp"
#include "robult/tensor.hpp"

namespace robult {

struct AblationSwitches {
    bool drop_sup = false;
    bool drop_rec = false;
    bool drop_lb = false;
    bool drop_ulb = false;
    bool uniform_weights = false;
    bool drop_pseudo = false;
    bool drop_unique_branches = false;
    bool algorithm1_toggle_reading = false;
};

struct RunConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double temperature = 0.1;
    KernelKind kernel = KernelKind::rbf;
    std::optional<double> gamma;
    bool weight_filter = false;
    double label_ratio = 0.05;
    std::uint64_t seed = 1;
    std::size_t latent_dim = 60;
    AblationSwitches ablation;
    double weight_sup = 1.0;
    double weight_rec = 1.0;
    double weight_pu = 1.0;

    SynthSpec data;
    std::string dataset_path;  // empty: generate from `data`
    double test_fraction = 0.2;
    std::size_t mi_bins = 16;
    std::size_t probe_epochs = 200;
    double probe_learning_rate = 1e-2;

    TaskKind task() const { return data.task; }

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate: must be positive");
        if (!(label_ratio >= 0.0 && label_ratio <= 1.0)) throw ConfigError("label_ratio: must lie in [0, 1]");
        if (!(temperature > 0.0)) throw ConfigError("temperature: must be positive");
        if (gamma && !(*gamma > 0.0)) throw ConfigError("gamma: must be positive");
        if (batch_size < 2) throw ConfigError("batch_size: must be at least 2");
        if (latent_dim == 0) throw ConfigError("latent_dim: must be positive");
        if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction: must lie in [0, 1)");
        if (mi_bins < 2) throw ConfigError("mi_bins: must be at least 2");
        if (!(probe_learning_rate > 0.0)) throw ConfigError("probe_learning_rate: must be positive");
        data.validate();
    }

    ModelConfig model_config(const Dataset& ds) const {
        ModelConfig mc;
        mc.raw_dims = ds.raw_dims();
        mc.latent_dim = latent_dim;
        mc.task = ds.task;
        mc.num_classes = ds.task == TaskKind::classification ? ds.classes : 1;
        mc.unique_branches = !ablation.drop_unique_branches;
        return mc;
    }
};

struct LossReport {
    double l_sup = 0.0;
    double l_rec = 0.0;
    double l_lb = 0.0;
    double l_ulb = 0.0;

    double total() const { return l_sup + l_rec + l_lb + l_ulb; }
    bool operator==(const LossReport&) const = default;
};

/// Enables exactly the parameters routed to one loss.
inline void parameters_toggle(const ParameterGroups& groups, int flag) {
    auto enable = [](const std::vector<Tensor>& ts, bool on) {
        for (auto t : ts) t.set_requires_grad(on);
    };
    switch (flag) {
        case 0:
            enable(groups.all, true);
            break;
        case 1:
            enable(groups.all, false);
            enable(groups.unique_heads_and_reconstructors, true);
            break;
        case 2:
            enable(groups.all, false);
            enable(groups.projectors_and_shared_head, true);
            break;
        default:
            throw ContractError("parameters_toggle: flag must be 0, 1 or 2, got " + std::to_string(flag));
    }
}

/// Per-loss, per-module-family gradient mass (sum of |delta grad|) recorded
/// around each backward pass. Only filled when a train_step is handed one.
struct GradientAudit {
    std::map<std::string, std::map<std::string, double>> contribution;

    double of(const std::string& loss, const std::string& family) const {
        auto it = contribution.find(loss);
        if (it == contribution.end()) return 0.0;
        auto jt = it->second.find(family);
        return jt == it->second.end() ? 0.0 : jt->second;
    }
};

namespace detail {

inline std::vector<std::pair<std::string, std::vector<Tensor>>> module_families(const RobultModel& model) {
    std::vector<Tensor> projectors, fusion, shared, unique, recon, cls;
    for (std::size_t i = 0; i < model.modalities(); ++i) {
        model.projector(i).collect(projectors);
        model.unique_head(i).collect(unique);
        model.reconstructor(i).collect(recon);
    }
    model.fusion().collect(fusion);
    model.shared_head().collect(shared);
    model.classifier().collect(cls);
    return {{"projectors", projectors}, {"fusion", fusion},           {"shared_head", shared},
            {"unique_heads", unique},   {"reconstructors", recon},    {"classifier", cls}};
}

inline void record_contribution(GradientAudit& audit, const std::string& loss, const RobultModel& model,
                                const std::map<const void*, std::vector<double>>& before) {
    for (const auto& [name, params] : module_families(model)) {
        double mass = 0.0;
        for (const auto& p : params) {
            const auto& prev = before.at(p.node().get());
            for (std::size_t k = 0; k < p.size(); ++k) mass += std::abs(p.grad()[k] - prev[k]);
        }
        audit.contribution[loss][name] += mass;
    }
}

inline std::map<const void*, std::vector<double>> grads_by_node(const RobultModel& model) {
    std::map<const void*, std::vector<double>> out;
    for (const auto& p : model.parameters()) out[p.node().get()] = std::vector<double>(p.grad().begin(), p.grad().end());
    return out;
}

inline void require_finite(double v, const char* name) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss ") + name + " = " + std::to_string(v));
}

inline void require_finite_inputs(const Batch& batch) {
    for (std::size_t i = 0; i < batch.modalities(); ++i)
        for (double v : batch.inputs[i].data)
            if (!std::isfinite(v)) throw NumericError("non-finite input in modality " + std::to_string(i + 1));
}

}  // namespace detail

/// Builds the pair context (positive sets, weights) for one forward pass.
inline PairContext make_pair_context(const ForwardOutputs& out, const Batch& batch, const RunConfig& cfg) {
    std::vector<std::optional<int>> pseudo(batch.size());
    if (!cfg.ablation.drop_pseudo) pseudo = pseudo_labels(out.logits_fused.matrix(), batch.labeled, cfg.task());
    PairContext ctx;
    ctx.S = out.S;
    ctx.Z = out.Z;
    ctx.temperature = cfg.temperature;
    ctx.sets = build_positive_sets(batch.labels, batch.labeled, pseudo);
    assign_pair_weights(ctx, WeightOptions{cfg.kernel, cfg.gamma, cfg.ablation.uniform_weights, cfg.weight_filter});
    return ctx;
}

/// One optimization step on a full-modality batch.
inline LossReport train_step(RobultModel& model, const Batch& batch, const RunConfig& cfg, Adam& opt,
                             GradientAudit* audit = nullptr) {
    const auto& ab = cfg.ablation;
    detail::require_finite_inputs(batch);
    ForwardOutputs out = model.forward_all(batch);
    PairContext ctx = make_pair_context(out, batch, cfg);

    LossReport report;
    std::optional<Tensor> l_rec, l_pu, l_sup;
    if (!ab.drop_rec && model.config().unique_branches) {
        l_rec = loss_rec(out.H, out.H_tilde);
        report.l_rec = l_rec->item();
    }
    if (!ab.drop_lb) {
        Tensor lb = loss_lb(ctx);
        report.l_lb = lb.item();
        l_pu = lb;
    }
    if (!ab.drop_ulb) {
        Tensor ulb = loss_ulb(ctx);
        report.l_ulb = ulb.item();
        l_pu = l_pu ? add(*l_pu, ulb) : ulb;
    }
    if (!ab.drop_sup) {
        SupervisedLoss sup = supervised_loss(out, batch, cfg.task());
        report.l_sup = sup.value.item();
        if (sup.supervised) l_sup = sup.value;
    }
    detail::require_finite(report.l_sup, "l_sup");
    detail::require_finite(report.l_rec, "l_rec");
    detail::require_finite(report.l_lb, "l_lb");
    detail::require_finite(report.l_ulb, "l_ulb");

    const ParameterGroups groups = model.parameter_groups(ab.algorithm1_toggle_reading);
    auto run_backward = [&](int flag, const std::optional<Tensor>& loss, double weight, const char* name) {
        if (!loss) return;
        parameters_toggle(groups, flag);
        std::map<const void*, std::vector<double>> before;
        if (audit) before = detail::grads_by_node(model);
        scale(*loss, weight).backward();
        if (audit) detail::record_contribution(*audit, name, model, before);
    };
    run_backward(1, l_rec, cfg.weight_rec, "rec");
    run_backward(2, l_pu, cfg.weight_pu, "pu");
    run_backward(0, l_sup, cfg.weight_sup, "sup");
    parameters_toggle(groups, 0);

    opt.step();
    opt.zero_grad();
    return report;
}

// ---------------------------------------------------------------------------
// Splits

/// Stratified labeled mask: per class, ceil(ratio * count) rows are labeled.
inline std::vector<bool> make_semisupervised_split(const std::vector<int>& labels, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("label_ratio must lie in [0, 1]");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t r = 0; r < labels.size(); ++r) by_class[labels[r]].push_back(r);
    std::vector<bool> mask(labels.size(), false);
    std::mt19937_64 rng(seed);
    for (auto& [cls, rows] : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        // The small slack keeps 0.05 * 100 from rounding up to 6.
        const double want = ratio * static_cast<double>(rows.size());
        const auto take = static_cast<std::size_t>(std::ceil(want - 1e-9));
        for (std::size_t k = 0; k < std::min(take, rows.size()); ++k) mask[rows[k]] = true;
    }
    return mask;
}

struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::vector<bool> labeled;  // indexed by dataset row; only train rows can be set
};

inline DataSplit make_data_split(const Dataset& ds, double test_fraction, double label_ratio, std::uint64_t seed) {
    std::vector<std::size_t> rows = ds.all_rows();
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(rows.size())));
    DataSplit split;
    split.test.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train.assign(rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
    std::ranges::sort(split.test);
    std::ranges::sort(split.train);

    std::vector<int> train_labels;
    for (std::size_t r : split.train) train_labels.push_back(ds.labels[r]);
    const std::vector<bool> local = make_semisupervised_split(train_labels, label_ratio, seed);
    split.labeled.assign(ds.size(), false);
    for (std::size_t k = 0; k < split.train.size(); ++k) split.labeled[split.train[k]] = local[k];
    return split;
}

// ---------------------------------------------------------------------------
// Epoch loop

/// Mean LossReport over the batches of one shuffled pass. Trailing batches
/// smaller than 2 rows are skipped (the in-batch softmax needs a negative).
inline LossReport train_epoch(RobultModel& model, const Dataset& ds, const DataSplit& split, const RunConfig& cfg,
                              Adam& opt, std::mt19937_64& rng, GradientAudit* audit = nullptr) {
    std::vector<std::size_t> order = split.train;
    std::shuffle(order.begin(), order.end(), rng);
    LossReport mean;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        if (end - start < 2) break;
        std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                      order.begin() + static_cast<std::ptrdiff_t>(end));
        const LossReport r = train_step(model, ds.batch(rows, split.labeled), cfg, opt, audit);
        mean.l_sup += r.l_sup;
        mean.l_rec += r.l_rec;
        mean.l_lb += r.l_lb;
        mean.l_ulb += r.l_ulb;
        ++batches;
    }
    if (batches > 0) {
        const double n = static_cast<double>(batches);
        mean.l_sup /= n;
        mean.l_rec /= n;
        mean.l_lb /= n;
        mean.l_ulb /= n;
    }
    return mean;
}

/// Runs cfg.epochs epochs; `on_epoch(epoch, report)` fires after each (1-based).
inline std::vector<LossReport> fit(RobultModel& model, const Dataset& ds, const DataSplit& split, const RunConfig& cfg,
                                   const std::function<void(std::size_t, const LossReport&)>& on_epoch = {}) {
    Adam opt(model.parameters(), cfg.learning_rate);
    std::mt19937_64 rng(cfg.seed ^ 0xba7c4ULL);
    std::vector<LossReport> history;
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        history.push_back(train_epoch(model, ds, split, cfg, opt, rng));
        if (on_epoch) on_epoch(e, history.back());
    }
    return history;
}

/// Retrains only the classifier on frozen representations of the labeled
/// training rows (full-batch, fused and per-branch heads averaged).
inline void train_linear_probe(RobultModel& model, const Dataset& ds, const DataSplit& split, const RunConfig& cfg) {
    std::vector<std::size_t> rows;
    for (std::size_t r : split.train)
        if (split.labeled[r]) rows.push_back(r);
    if (rows.empty()) return;
    std::vector<bool> all_labeled(ds.size(), true);
    const Batch batch = ds.batch(rows, all_labeled);

    // Frozen classifier inputs: S for the fused head, z^i (+ u^i) per branch.
    std::vector<Matrix> inputs;
    {
        NoGradGuard no_grad;
        const ForwardOutputs out = model.forward_all(batch);
        inputs.push_back(out.S.matrix());
        for (std::size_t i = 0; i < model.modalities(); ++i)
            inputs.push_back(model.config().unique_branches ? add(out.Z[i], out.U[i]).matrix() : out.Z[i].matrix());
    }
    Linear& probe = model.classifier();
    std::vector<Tensor> params;
    probe.collect(params);
    Adam opt(params, cfg.probe_learning_rate);
    for (std::size_t e = 0; e < cfg.probe_epochs; ++e) {
        Tensor total;
        for (const auto& x : inputs) {
            Tensor l = loss_sup(probe(Tensor::constant(x)), batch.labels, batch.targets, batch.labeled, cfg.task()).value;
            total = total.defined() ? add(total, l) : l;
        }
        scale(total, 1.0 / static_cast<double>(inputs.size())).backward();
        opt.step();
        opt.zero_grad();
    }
}

}  // namespace robult
