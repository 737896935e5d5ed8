// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "robult/cli.hpp"
#include "support.hpp"

using namespace robult;
using robult::testing::max_gradient_error;
using robult::testing::random_matrix;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "robult_acceptance" / name;
    fs::remove_all(p);
    return p;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    return out;
}

std::vector<std::vector<std::string>> body_rows(const fs::path& p) {
    std::ifstream is(p);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(is, line))
        if (!line.empty() && line[0] != '#') rows.push_back(split_csv(line));
    return rows;
}

std::string loss_body(const fs::path& p) {
    std::ifstream is(p);
    std::string line, out;
    while (std::getline(is, line))
        if (line.rfind("# ", 0) != 0) out += line + "\n";
    return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    double worst_pu = 0.0, worst_rec = 0.0, worst_sup = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t B = 4 + rng() % 3, d = 2 + rng() % 7, M = 2 + rng() % 2;
        const double tau = 0.1 + 0.9 * std::uniform_real_distribution<double>(0, 1)(rng);

        std::vector<std::size_t> order(B);
        for (std::size_t j = 0; j < B; ++j) order[j] = j;
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<int> labels(B);
        std::vector<bool> mask(B);
        std::vector<std::optional<int>> pseudo(B);
        for (std::size_t j = 0; j < B; ++j) {
            const std::size_t r = order[j];
            labels[r] = static_cast<int>(j % 2);
            mask[r] = j < 4;
            if (!mask[r]) pseudo[r] = static_cast<int>(rng() % 2);
        }
        const PositiveSets sets = build_positive_sets(labels, mask, pseudo);

        std::vector<Tensor> raw{Tensor::constant(random_matrix(B, d, rng))};
        for (std::size_t i = 0; i < M; ++i) raw.push_back(Tensor::constant(random_matrix(B, d, rng)));
        PairContext base;
        base.S = l2_normalize_rows(raw[0]);
        for (std::size_t i = 0; i < M; ++i) base.Z.push_back(l2_normalize_rows(raw[i + 1]));
        base.sets = sets;
        base.temperature = tau;
        WeightOptions wopt;
        wopt.kernel = static_cast<KernelKind>(inst % 3);
        assign_pair_weights(base, wopt);
        const auto weights = base.weights;
        worst_pu = std::max(worst_pu, max_gradient_error(raw, [&](const std::vector<Tensor>& x) {
                                PairContext c;
                                c.S = l2_normalize_rows(x[0]);
                                for (std::size_t i = 0; i < M; ++i) c.Z.push_back(l2_normalize_rows(x[i + 1]));
                                c.sets = sets;
                                c.temperature = tau;
                                c.weights = weights;
                                return loss_pu(c);
                            }));

        std::vector<Tensor> hs;
        for (std::size_t i = 0; i < 2 * M; ++i) hs.push_back(Tensor::constant(random_matrix(B, d, rng)));
        worst_rec = std::max(worst_rec, max_gradient_error(hs, [&](const std::vector<Tensor>& x) {
                                 return loss_rec({x.begin(), x.begin() + M}, {x.begin() + M, x.end()});
                             }));

        const TaskKind task = inst % 2 ? TaskKind::regression : TaskKind::classification;
        const std::size_t width = task == TaskKind::classification ? 3 : 1;
        Batch batch;
        for (std::size_t j = 0; j < B; ++j) {
            batch.labels.push_back(static_cast<int>(rng() % 3));
            batch.targets.push_back(std::uniform_real_distribution<double>(-3, 3)(rng));
            batch.labeled.push_back(j % 3 != 2);
        }
        std::vector<Tensor> heads;
        for (std::size_t i = 0; i <= M; ++i) heads.push_back(Tensor::constant(random_matrix(B, width, rng)));
        worst_sup = std::max(worst_sup, max_gradient_error(heads, [&](const std::vector<Tensor>& x) {
                                 ForwardOutputs out;
                                 out.logits_per_branch.assign(x.begin(), x.begin() + M);
                                 out.logits_fused = x[M];
                                 return supervised_loss(out, batch, task).value;
                             }));
    }
    const double secs = seconds_since(t0);
    const double worst = std::max({worst_pu, worst_rec, worst_sup});
    return {worst <= 1e-4 && secs < 60.0, "max rel err pu=" + fmt(worst_pu) + " rec=" + fmt(worst_rec) +
                                              " sup=" + fmt(worst_sup) + " in " + fmt(secs) + "s"};
}

Outcome selective_backward() {
    RunConfig cfg;
    cfg.data.n = 200;
    cfg.label_ratio = 0.25;
    const Dataset ds = generate(cfg.data);
    const DataSplit split = make_data_split(ds, cfg.test_fraction, cfg.label_ratio, cfg.seed);
    RobultModel model(cfg.model_config(ds), cfg.seed);
    Adam opt(model.parameters(), cfg.learning_rate);
    std::vector<std::size_t> rows(split.train.begin(), split.train.begin() + 32);
    GradientAudit audit;
    train_step(model, ds.batch(rows, split.labeled), cfg, opt, &audit);
    double leak = 0.0;
    for (const char* fam : {"projectors", "fusion", "shared_head", "classifier"}) leak += audit.of("rec", fam);
    leak += audit.of("pu", "reconstructors");
    const bool live = audit.of("rec", "reconstructors") > 0.0 && audit.of("pu", "projectors") > 0.0;
    return {leak == 0.0 && live, "cross-routed |grad| sum=" + fmt(leak) + ", rec->r " + fmt(audit.of("rec", "reconstructors")) +
                                     ", pu->f " + fmt(audit.of("pu", "projectors"))};
}

Outcome majority_bound() {
    const auto t0 = Clock::now();
    const double p = positive_majority_probability(8, 2);
    const double secs = seconds_since(t0);
    return {p < 0.1 && secs < 1.0, "P=" + fmt(p) + " in " + fmt(secs * 1e3) + "ms"};
}

// Default-config runs, shared by the MI and determinism criteria.
std::map<std::uint64_t, ReportBundle> default_runs;

const ReportBundle& default_run(std::uint64_t seed) {
    if (!default_runs.contains(seed)) {
        RunConfig cfg;
        cfg.seed = seed;
        default_runs[seed] = run_training(cfg, scratch("default" + std::to_string(seed)));
    }
    return default_runs[seed];
}

Outcome mi_direction() {
    const auto t0 = Clock::now();
    bool pass = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        std::map<std::string, double> init, fin;
        for (const auto& r : body_rows(default_run(seed).diagnostics)) {
            if (r.size() != 4 || r[2] != "mi_z_s") continue;
            (r[0] == "mi_init" ? init : fin)[r[1]] = std::stod(r[3]);
        }
        if (init.size() != 3 || fin.size() != 3) pass = false;
        detail += " s" + std::to_string(seed) + ":";
        for (const auto& [tag, v] : init) {
            pass = pass && fin[tag] > v;
            detail += " " + tag + " " + fmt(v) + "->" + fmt(fin[tag]);
        }
    }
    const double secs = seconds_since(t0);
    return {pass && secs < 600.0, detail.substr(1) + " (" + fmt(secs) + "s)"};
}

double single_modality_accuracy(const ReportBundle& b, const std::string& tag) {
    for (const auto& r : body_rows(b.metrics))
        if (!r.empty() && r[0] == tag) return std::stod(r.at(3));
    throw std::runtime_error("metrics row " + tag + " missing");
}

Outcome unique_ablation() {
    RunConfig cfg;
    cfg.data.alpha = 0.1;
    cfg.data.beta = {2.0, 0.1, 0.1};
    cfg.data.unique_dim = 4;
    double margin = 0.0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        cfg.seed = seed;
        const double full = single_modality_accuracy(run_training(cfg, scratch("full" + std::to_string(seed))), "m1");
        const double ablated = single_modality_accuracy(
            run_training(apply_variant(cfg, "drop_rec"), scratch("drop_rec" + std::to_string(seed))), "m1");
        margin += (full - ablated) / 3.0;
        detail += " s" + std::to_string(seed) + " " + fmt(full) + " vs " + fmt(ablated) + ";";
    }
    return {margin > 0.0, "m1 acc full vs drop_rec:" + detail + " mean margin " + fmt(margin)};
}

Outcome kernel_properties() {
    bool pass = true;
    const KernelParams rbf{KernelKind::rbf, 3.0, 0.0};
    pass = pass && pair_weight(0.4, 0.4, rbf) == 1.0;
    double prev = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double w = pair_weight(0.0, 0.02 * k, rbf);
        pass = pass && w < prev && w > 0.0;
        prev = w;
    }
    for (KernelKind kind : {KernelKind::l1, KernelKind::l2}) {
        const double dmax = kernel_distance(kind, 0.3, 1.1);
        const KernelParams p{kind, 1.0, dmax};
        pass = pass && pair_weight(0.3, 0.3, p) == 1.0 && pair_weight(0.3, 1.1, p) == 0.0;
        double last = 1.0;
        for (int k = 1; k <= 100; ++k) {
            const double w = pair_weight(0.3, 0.3 + 0.008 * k, p);
            pass = pass && w <= last && w >= 0.0;
            last = w;
        }
    }
    return {pass, "rbf w(0)=1, strictly decreasing on 100 points; l1/l2 endpoints 1 and 0"};
}

double pairwise_auroc(const std::vector<double>& s, const std::vector<bool>& pos) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (!pos[i] || pos[j]) continue;
            den += 1.0;
            num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    return num / den;
}

double confusion_macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int classes) {
    std::vector<std::vector<int>> cm(classes, std::vector<int>(classes, 0));
    for (std::size_t r = 0; r < pred.size(); ++r) ++cm[truth[r]][pred[r]];
    double total = 0.0;
    for (int c = 0; c < classes; ++c) {
        int col = 0, row = 0;
        for (int k = 0; k < classes; ++k) {
            col += cm[k][c];
            row += cm[c][k];
        }
        const double tp = cm[c][c];
        total += (row + col) == 0 ? 0.0 : 2.0 * tp / (row + col);
    }
    return total / classes;
}

Outcome metric_oracles() {
    std::mt19937_64 rng(77);
    int auroc_ok = 0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 2 + rng() % 99;
        std::uniform_int_distribution<int> level(0, t % 2 ? 4 : 1 << 20);
        std::vector<double> s(n);
        std::vector<bool> p(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = level(rng) * 0.25;
            p[i] = rng() % 2;
        }
        p[0] = true;
        p[1] = false;
        auroc_ok += auroc(s, p) == pairwise_auroc(s, p) ? 1 : 0;
    }
    const std::vector<std::tuple<std::vector<int>, std::vector<int>, int>> cases{
        {{0, 1, 1, 1, 0}, {0, 0, 1, 1, 2}, 3},
        {{0, 1}, {0, 1}, 3},
        {{1, 1, 1, 1}, {0, 1, 0, 1}, 2},
        {{0, 0, 0}, {0, 0, 0}, 2},
        {{2, 2, 1, 0, 0, 1}, {2, 1, 1, 0, 2, 1}, 3},
        {{0, 1, 2, 3}, {3, 2, 1, 0}, 4},
        {{0, 0, 1, 1, 2, 2, 3, 3}, {0, 1, 1, 2, 2, 3, 3, 0}, 4},
        {{1, 0, 1, 0, 1, 0, 1}, {1, 1, 1, 0, 0, 0, 1}, 2},
        {{6, 5, 4, 3, 2, 1, 0}, {6, 5, 4, 3, 2, 1, 0}, 7},
        {{0, 2, 2, 2}, {0, 0, 2, 1}, 3},
    };
    int f1_ok = 0;
    for (const auto& [pred, truth, k] : cases)
        f1_ok += std::abs(f1_macro(pred, truth, k) - confusion_macro_f1(pred, truth, k)) < 1e-12 ? 1 : 0;
    return {auroc_ok == 50 && f1_ok == 10,
            "auroc " + std::to_string(auroc_ok) + "/50 exact, macro-F1 " + std::to_string(f1_ok) + "/10"};
}

Outcome complexity() {
    std::size_t count[5] = {};
    for (std::size_t M = 2; M <= 4; ++M) {
        ModelConfig mc;
        mc.raw_dims.assign(M, 16);
        count[M] = RobultModel(mc, 1).branch_parameter_count();
    }
    const long d1 = static_cast<long>(count[3]) - static_cast<long>(count[2]);
    const long d2 = static_cast<long>(count[4]) - static_cast<long>(count[3]);
    return {d1 == d2 && d1 > 0,
            "{g,r} counts " + std::to_string(count[2]) + ", " + std::to_string(count[3]) + ", " +
                std::to_string(count[4]) + " (step " + std::to_string(d1) + ")"};
}

Outcome missing_modality() {
    RunConfig cfg;
    cfg.data.n = 64;
    const Dataset ds = generate(cfg.data);
    const RobultModel model(cfg.model_config(ds), 3);
    std::vector<std::size_t> rows(ds.size());
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
    int finite = 0;
    for (std::uint32_t bits = 1; bits < 8; ++bits) {
        std::set<std::size_t> keep;
        for (std::size_t i = 0; i < 3; ++i)
            if (bits & (1U << i)) keep.insert(i);
        const Dataset masked = mask_modalities(ds, MaskPolicy::subset(keep));
        bool ok = true;
        for (double v : model.infer(masked.batch(rows), keep).outputs.data) ok = ok && std::isfinite(v);
        finite += ok ? 1 : 0;
    }
    return {finite == 7, std::to_string(finite) + "/7 subsets finite"};
}

Outcome determinism() {
    const std::string a = loss_body(default_run(1).losses);
    RunConfig cfg;
    cfg.seed = 1;
    const std::string b = loss_body(run_training(cfg, scratch("repeat1")).losses);
    return {!a.empty() && a == b, "loss CSV bodies " + std::string(a == b ? "identical" : "differ") + " (" +
                                      std::to_string(a.size()) + " bytes)"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient fidelity", gradient_fidelity},    {"selective backward", selective_backward},
        {"positive-majority bound", majority_bound}, {"MI increase", mi_direction},
        {"unique-information ablation", unique_ablation}, {"weight kernels", kernel_properties},
        {"metric oracles", metric_oracles},          {"complexity", complexity},
        {"missing modality", missing_modality},      {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << "criterion " << k + 1 << " " << (o.pass ? "PASS" : "FAIL") << " [" << criteria[k].first << "] "
                  << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
