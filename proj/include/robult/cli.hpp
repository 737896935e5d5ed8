#pragma once

// Report-producing commands behind the `robult` executable.
//
// Every report starts with the resolved configuration as "# key = value"
// lines. CSV layouts (column order is fixed):
//
//   losses.csv       epoch,l_sup,l_rec,l_lb,l_ulb,l_total
//   metrics.csv      tag,mae,pearson,accuracy,binary_acc,f1_binary,f1_macro,auroc
//   diagnostics.csv  section,tag,key,value
//
// Modality tags are 1-based and joined with '+', e.g. "m1+m3".

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "robult/checkpoint.hpp"
#include "robult/config.hpp"
#include "robult/errors.hpp"
#include "robult/eval.hpp"
#include "robult/model.hpp"
#include "robult/synthdata.hpp"
#include "robult/training.hpp"

namespace robult {

namespace fs = std::filesystem;

struct ReportBundle {
    fs::path config;
    fs::path losses;
    fs::path metrics;
    fs::path diagnostics;
    fs::path checkpoint;
    fs::path test_data;
};

inline std::string modality_tag(const std::set<std::size_t>& keep) {
    std::string tag;
    for (std::size_t i : keep) tag += (tag.empty() ? "m" : "+m") + std::to_string(i + 1);
    return tag;
}

/// Parses a mask argument into (tag, policy) pairs:
///   all | full | single:i | pair:i,j | random:p   (indices 1-based)
/// "all" yields every nonempty subset, smallest first.
inline std::vector<std::pair<std::string, MaskPolicy>> parse_mask_spec(const std::string& spec, std::size_t M,
                                                                        std::uint64_t seed = 0) {
    std::vector<std::pair<std::string, MaskPolicy>> out;
    auto index = [&](const std::string& s) {
        const std::size_t i = detail::parse_count("mask", detail::trim(s));
        if (i < 1 || i > M) throw ConfigError("mask: modality " + s + " out of range 1.." + std::to_string(M));
        return i - 1;
    };
    std::set<std::size_t> everything;
    for (std::size_t i = 0; i < M; ++i) everything.insert(i);

    if (spec == "all") {
        for (std::size_t size = 1; size <= M; ++size)
            for (std::uint32_t bits = 1; bits < (1U << M); ++bits) {
                if (static_cast<std::size_t>(std::popcount(bits)) != size) continue;
                std::set<std::size_t> keep;
                for (std::size_t i = 0; i < M; ++i)
                    if (bits & (1U << i)) keep.insert(i);
                out.emplace_back(modality_tag(keep),
                                 keep.size() == M ? MaskPolicy::full() : MaskPolicy::subset(keep));
            }
    } else if (spec == "full") {
        out.emplace_back(modality_tag(everything), MaskPolicy::full());
    } else if (spec.rfind("single:", 0) == 0) {
        const std::size_t i = index(spec.substr(7));
        out.emplace_back(modality_tag({i}), MaskPolicy::single(i));
    } else if (spec.rfind("pair:", 0) == 0) {
        const auto parts = detail::split(spec.substr(5), ',');
        if (parts.size() != 2) throw ConfigError("mask: pair needs two indices, got '" + spec + "'");
        const std::size_t i = index(parts[0]), j = index(parts[1]);
        if (i == j) throw ConfigError("mask: pair indices must differ");
        out.emplace_back(modality_tag({i, j}), MaskPolicy::pair(i, j));
    } else if (spec.rfind("random:", 0) == 0) {
        const double p = detail::parse_number<double>("mask", spec.substr(7));
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("mask: random probability must lie in [0, 1]");
        out.emplace_back("random", MaskPolicy::random(p, seed));
    } else {
        throw ConfigError("mask: expected all, full, single:i, pair:i,j or random:p, got '" + spec + "'");
    }
    return out;
}

/// Outputs for every row of `ds`, each row reading only its available modalities.
inline Matrix predict_available(const RobultModel& model, const Dataset& ds) {
    std::map<std::set<std::size_t>, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        std::set<std::size_t> avail;
        for (std::size_t i = 0; i < ds.num_modalities(); ++i)
            if (ds.available[i][r]) avail.insert(i);
        groups[avail].push_back(r);
    }
    Matrix out(ds.size(), model.config().output_dim());
    for (const auto& [avail, rows] : groups) {
        const Matrix y = model.infer(ds.batch(rows), avail).outputs;
        for (std::size_t k = 0; k < rows.size(); ++k) std::ranges::copy(y.row(k), out.row(rows[k]).begin());
    }
    return out;
}

inline std::vector<MetricRow> evaluate_masks(const RobultModel& model, const Dataset& ds,
                                             const std::vector<std::pair<std::string, MaskPolicy>>& masks) {
    std::vector<MetricRow> rows;
    for (const auto& [tag, policy] : masks) {
        const Dataset view = mask_modalities(ds, policy);
        const Matrix y = predict_available(model, view);
        for (double v : y.data)
            if (!std::isfinite(v)) throw NumericError("non-finite model output under mask " + tag);
        rows.push_back(task_metrics(y, view.labels, view.targets, view.task, view.classes, tag));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Representation diagnostics

struct Representations {
    std::vector<Matrix> Z;
    Matrix S;
};

inline Representations representations(const RobultModel& model, const Dataset& ds,
                                       const std::vector<std::size_t>& rows) {
    NoGradGuard no_grad;
    const ForwardOutputs out = model.forward_all(ds.batch(rows));
    Representations reps;
    for (const auto& z : out.Z) reps.Z.push_back(z.matrix());
    reps.S = out.S.matrix();
    return reps;
}

/// Histogram MI(Z^i, S) per modality.
inline std::vector<double> representation_mi(const RobultModel& model, const Dataset& ds,
                                             const std::vector<std::size_t>& rows, std::size_t bins) {
    const Representations reps = representations(model, ds, rows);
    std::vector<double> mi;
    for (const auto& z : reps.Z) mi.push_back(histogram_mi(z, reps.S, bins));
    return mi;
}

struct DiagnosticRow {
    std::string section, tag, key;
    double value = 0.0;
};

inline std::vector<DiagnosticRow> mi_rows(const std::string& section, const std::vector<double>& mi) {
    std::vector<DiagnosticRow> out;
    for (std::size_t i = 0; i < mi.size(); ++i) out.push_back({section, modality_tag({i}), "mi_z_s", mi[i]});
    return out;
}

/// Alignment of (Z^i_j, S_j) pairs and uniformity of S, per modality.
inline std::vector<DiagnosticRow> geometry_rows(const RobultModel& model, const Dataset& ds,
                                                const std::vector<std::size_t>& rows) {
    const Representations reps = representations(model, ds, rows);
    std::vector<DiagnosticRow> out;
    for (std::size_t i = 0; i < reps.Z.size(); ++i) {
        const std::string tag = modality_tag({i});
        const AlignmentUniformity au = alignment_uniformity(reps.Z[i], reps.S, reps.S);
        out.push_back({"geometry", tag, "alignment", au.alignment});
        out.push_back({"geometry", tag, "uniformity", au.uniformity});
        for (const auto& [edge, count] : au.distance_histogram)
            out.push_back({"distance_histogram", tag, format_double(edge), static_cast<double>(count)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Writers

inline std::string optional_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline void write_losses_header(std::ostream& os, const RunConfig& cfg) {
    os << config_echo(cfg) << "epoch,l_sup,l_rec,l_lb,l_ulb,l_total\n";
}

inline void write_loss_row(std::ostream& os, std::size_t epoch, const LossReport& r) {
    os << epoch << ',' << format_double(r.l_sup) << ',' << format_double(r.l_rec) << ',' << format_double(r.l_lb)
       << ',' << format_double(r.l_ulb) << ',' << format_double(r.total()) << '\n';
}

inline void write_metrics(std::ostream& os, const std::string& echo, const std::vector<MetricRow>& rows) {
    os << echo << "tag,mae,pearson,accuracy,binary_acc,f1_binary,f1_macro,auroc\n";
    for (const auto& m : rows) {
        os << m.tag << ',' << optional_cell(m.mae) << ',' << optional_cell(m.pearson_corr) << ','
           << optional_cell(m.accuracy) << ',' << optional_cell(m.binary_acc) << ',' << optional_cell(m.f1_binary)
           << ',' << optional_cell(m.f1_macro) << ',' << optional_cell(m.auroc) << '\n';
    }
}

inline void write_diagnostics(std::ostream& os, const std::string& echo, const std::vector<DiagnosticRow>& rows) {
    os << echo << "section,tag,key,value\n";
    for (const auto& d : rows) os << d.section << ',' << d.tag << ',' << d.key << ',' << format_double(d.value) << '\n';
}

namespace detail {

inline std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
    std::ofstream os(p, mode);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

inline std::ifstream open_in(const fs::path& p, std::ios::openmode mode = std::ios::in) {
    std::ifstream is(p, mode);
    if (!is) throw std::runtime_error("cannot read " + p.string());
    return is;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

inline RunConfig load_config(const std::optional<fs::path>& path) {
    RunConfig cfg;
    if (path) {
        auto is = detail::open_in(*path);
        cfg = parse_config(is);
    }
    apply_environment(cfg);
    cfg.validate();
    return cfg;
}

inline Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.dataset_path.empty()) return generate(cfg.data);
    auto is = detail::open_in(cfg.dataset_path);
    return read_dataset(is);
}

/// Trains under `cfg` and writes the full report bundle into `out_dir`.
/// `after_fit` runs between training and evaluation (used by ablations).
inline ReportBundle run_training(const RunConfig& cfg, const fs::path& out_dir,
                                 const std::function<void(RobultModel&, const Dataset&, const DataSplit&)>& after_fit = {}) {
    cfg.validate();
    fs::create_directories(out_dir);
    ReportBundle bundle{out_dir / "config.txt",      out_dir / "losses.csv", out_dir / "metrics.csv",
                        out_dir / "diagnostics.csv", out_dir / "model.ckpt", out_dir / "test.csv"};
    const std::string echo = config_echo(cfg);
    {
        auto os = detail::open_out(bundle.config);
        os << config_to_string(cfg);
    }

    const Dataset ds = load_dataset(cfg);
    const DataSplit split = make_data_split(ds, cfg.test_fraction, cfg.label_ratio, cfg.seed);
    RobultModel model(cfg.model_config(ds), cfg.seed);

    std::vector<DiagnosticRow> diag;
    const bool mi_ok = split.train.size() >= 10 * cfg.mi_bins;
    if (mi_ok) {
        auto init = mi_rows("mi_init", representation_mi(model, ds, split.train, cfg.mi_bins));
        diag.insert(diag.end(), init.begin(), init.end());
    }

    {
        auto losses = detail::open_out(bundle.losses);
        write_losses_header(losses, cfg);
        fit(model, ds, split, cfg, [&](std::size_t e, const LossReport& r) { write_loss_row(losses, e, r); });
    }
    if (after_fit) after_fit(model, ds, split);

    if (mi_ok) {
        auto fin = mi_rows("mi_final", representation_mi(model, ds, split.train, cfg.mi_bins));
        diag.insert(diag.end(), fin.begin(), fin.end());
    }
    auto geo = geometry_rows(model, ds, split.train);
    diag.insert(diag.end(), geo.begin(), geo.end());
    {
        auto os = detail::open_out(bundle.diagnostics);
        write_diagnostics(os, echo, diag);
    }

    {
        auto ck = detail::open_out(bundle.checkpoint, std::ios::binary);
        save_checkpoint(ck, model);
    }
    const Dataset test = ds.subset(split.test);
    {
        auto os = detail::open_out(bundle.test_data);
        write_dataset(os, test);
    }
    std::vector<MetricRow> metrics;
    if (test.size() > 0) metrics = evaluate_masks(model, test, parse_mask_spec("all", test.num_modalities()));
    auto os = detail::open_out(bundle.metrics);
    write_metrics(os, echo, metrics);
    return bundle;
}

inline ReportBundle cmd_train(const RunConfig& cfg, const fs::path& out_dir) { return run_training(cfg, out_dir); }

inline const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> v{"drop_sup",        "drop_rec",    "drop_lb",    "drop_ulb",
                                            "uniform_weights", "drop_pseudo", "drop_unique"};
    return v;
}

/// Returns `cfg` with the switch for `variant` set.
inline RunConfig apply_variant(RunConfig cfg, const std::string& variant) {
    auto& a = cfg.ablation;
    if (variant == "drop_sup") a.drop_sup = true;
    else if (variant == "drop_rec") a.drop_rec = true;
    else if (variant == "drop_lb") a.drop_lb = true;
    else if (variant == "drop_ulb") a.drop_ulb = true;
    else if (variant == "uniform_weights") a.uniform_weights = true;
    else if (variant == "drop_pseudo") a.drop_pseudo = true;
    else if (variant == "drop_unique") a.drop_unique_branches = true;
    else {
        std::string names;
        for (const auto& n : ablation_variants()) names += (names.empty() ? "" : ", ") + n;
        throw ConfigError("unknown ablation variant '" + variant + "' (expected one of " + names + ")");
    }
    return cfg;
}

inline ReportBundle cmd_ablate(const RunConfig& cfg, const std::string& variant, const fs::path& out_dir) {
    const RunConfig run = apply_variant(cfg, variant);
    if (variant == "drop_sup") {
        return run_training(run, out_dir, [&](RobultModel& m, const Dataset& ds, const DataSplit& split) {
            train_linear_probe(m, ds, split, run);
        });
    }
    return run_training(run, out_dir);
}

/// Evaluates a checkpoint on a dataset file under the given mask spec.
inline std::vector<MetricRow> cmd_eval(const fs::path& checkpoint, const fs::path& data, const std::string& mask,
                                       const fs::path& out_dir, std::uint64_t seed = 0) {
    auto ck = detail::open_in(checkpoint, std::ios::binary);
    const RobultModel model = load_checkpoint(ck);
    auto is = detail::open_in(data);
    const Dataset ds = read_dataset(is);
    if (ds.raw_dims() != model.config().raw_dims)
        throw ConfigError("dataset modality dims do not match the checkpoint");
    const auto rows = evaluate_masks(model, ds, parse_mask_spec(mask, ds.num_modalities(), seed));
    fs::create_directories(out_dir);
    const std::string echo = "# checkpoint = " + checkpoint.string() + "\n# data = " + data.string() +
                             "\n# mask = " + mask + "\n# seed = " + std::to_string(seed) + "\n";
    auto os = detail::open_out(out_dir / "eval_metrics.csv");
    write_metrics(os, echo, rows);
    return rows;
}

inline fs::path cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const fs::path p = out_dir / "dataset.csv";
    auto os = detail::open_out(p);
    write_dataset(os, generate(cfg.data));
    return p;
}

}  // namespace robult
