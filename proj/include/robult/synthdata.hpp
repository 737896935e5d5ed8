#pragma once

// Synthetic multimodal data with controllable redundant / unique / synergistic
// structure.
//
// A shared factor c ~ N(0, I) drives the label; each modality i also has a
// private factor u^i ~ N(0, I). Modality i observes
//     x^i = alpha * E_i c + beta_i * F_i u^i + noise * eps,
// where [E_i | F_i] has orthonormal columns. The label reads
//     score = A c + unique_label_weight * sum_i beta_i * B_i u^i,
// so u^i is label-relevant only to the extent modality i exposes it. With the
// synergy flag the class is shifted by XOR(c_1 > 0, c_2 > 0).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "robult/batch.hpp"
#include "robult/errors.hpp"
#include "robult/losses.hpp"
#include "robult/tensor.hpp"

namespace robult {

struct SynthSpec {
    std::size_t n = 2000;
    std::vector<std::size_t> raw_dims{16, 16, 16};
    TaskKind task = TaskKind::classification;
    std::size_t classes = 2;
    double alpha = 1.0;
    std::vector<double> beta{0.5, 0.5, 0.5};
    bool synergy = false;
    double noise = 0.1;
    std::size_t shared_dim = 4;
    std::size_t unique_dim = 2;
    double unique_label_weight = 1.0;
    std::uint64_t seed = 1234;

    std::size_t modalities() const { return raw_dims.size(); }

    void validate() const {
        if (raw_dims.empty()) throw ConfigError("raw_dims: at least one modality required");
        if (beta.size() != raw_dims.size()) throw ConfigError("beta: need one value per modality");
        if (alpha < 0.0 || noise < 0.0) throw ConfigError("alpha and noise must be nonnegative");
        for (double b : beta)
            if (b < 0.0) throw ConfigError("beta values must be nonnegative");
        if (task == TaskKind::classification && classes < 2) throw ConfigError("classes must be at least 2");
        if (shared_dim == 0) throw ConfigError("shared_dim must be positive");
        if (synergy && shared_dim < 2) throw ConfigError("synergy needs shared_dim >= 2");
        for (std::size_t d : raw_dims)
            if (d < shared_dim + unique_dim) throw ConfigError("raw_dims must be at least shared_dim + unique_dim");
    }
};

struct Dataset {
    TaskKind task = TaskKind::classification;
    std::size_t classes = 2;
    std::vector<Matrix> modalities;
    std::vector<int> labels;  // class ids; discretized bins for regression
    std::vector<double> targets;
    std::vector<std::vector<bool>> available;  // [modality][row]

    std::size_t size() const { return labels.size(); }
    std::size_t num_modalities() const { return modalities.size(); }

    std::vector<std::size_t> raw_dims() const {
        std::vector<std::size_t> dims;
        for (const auto& m : modalities) dims.push_back(m.cols);
        return dims;
    }

    /// Rows `rows` as a batch; `labeled` is indexed by dataset row (empty: nothing labeled).
    Batch batch(const std::vector<std::size_t>& rows, const std::vector<bool>& labeled = {}) const {
        Batch b;
        for (std::size_t i = 0; i < modalities.size(); ++i) {
            Matrix m(rows.size(), modalities[i].cols);
            std::vector<bool> avail(rows.size());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                std::ranges::copy(modalities[i].row(rows[r]), m.row(r).begin());
                avail[r] = available[i][rows[r]];
            }
            b.inputs.push_back(std::move(m));
            b.available.push_back(std::move(avail));
        }
        for (std::size_t r : rows) {
            b.labels.push_back(labels[r]);
            b.targets.push_back(targets[r]);
            b.labeled.push_back(!labeled.empty() && labeled[r]);
        }
        return b;
    }

    std::vector<std::size_t> all_rows() const {
        std::vector<std::size_t> rows(size());
        for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
        return rows;
    }

    Dataset subset(const std::vector<std::size_t>& rows) const {
        Dataset out;
        out.task = task;
        out.classes = classes;
        for (std::size_t i = 0; i < modalities.size(); ++i) {
            Matrix m(rows.size(), modalities[i].cols);
            std::vector<bool> avail(rows.size());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                std::ranges::copy(modalities[i].row(rows[r]), m.row(r).begin());
                avail[r] = available[i][rows[r]];
            }
            out.modalities.push_back(std::move(m));
            out.available.push_back(std::move(avail));
        }
        for (std::size_t r : rows) {
            out.labels.push_back(labels[r]);
            out.targets.push_back(targets[r]);
        }
        return out;
    }
};

namespace detail {

/// rows x cols matrix with orthonormal columns (modified Gram-Schmidt on a Gaussian draw).
inline Matrix random_orthonormal_columns(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix q(rows, cols);
    for (double& v : q.data) v = normal(rng);
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            double proj = 0.0;
            for (std::size_t r = 0; r < rows; ++r) proj += q(r, c) * q(r, p);
            for (std::size_t r = 0; r < rows; ++r) q(r, c) -= proj * q(r, p);
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < rows; ++r) norm += q(r, c) * q(r, c);
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < rows; ++r) q(r, c) /= norm;
    }
    return q;
}

}  // namespace detail

inline Dataset generate(const SynthSpec& spec) {
    spec.validate();
    const std::size_t M = spec.modalities();
    const std::size_t kc = spec.shared_dim, ku = spec.unique_dim;
    const std::size_t K = spec.task == TaskKind::classification ? spec.classes : 1;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<Matrix> embeds;
    for (std::size_t i = 0; i < M; ++i) embeds.push_back(detail::random_orthonormal_columns(spec.raw_dims[i], kc + ku, rng));
    Matrix shared_readout(K, kc);
    for (double& v : shared_readout.data) v = normal(rng);
    std::vector<Matrix> unique_readout(M, Matrix(K, ku));
    for (auto& r : unique_readout)
        for (double& v : r.data) v = normal(rng);

    Dataset ds;
    ds.task = spec.task;
    ds.classes = spec.task == TaskKind::classification ? spec.classes : 7;
    for (std::size_t i = 0; i < M; ++i) {
        ds.modalities.emplace_back(spec.n, spec.raw_dims[i]);
        ds.available.emplace_back(spec.n, true);
    }

    // Scale of the regression score, so that 3 tanh(score) spreads over [-3, 3].
    double score_norm = 0.0;
    if (spec.task == TaskKind::regression) {
        for (double v : shared_readout.data) score_norm += v * v;
        for (std::size_t i = 0; i < M; ++i)
            for (double v : unique_readout[i].data) {
                const double w = spec.unique_label_weight * spec.beta[i] * v;
                score_norm += w * w;
            }
        score_norm = std::sqrt(score_norm);
    }

    std::vector<double> c(kc);
    std::vector<std::vector<double>> u(M, std::vector<double>(ku));
    for (std::size_t n = 0; n < spec.n; ++n) {
        for (double& v : c) v = normal(rng);
        for (auto& ui : u)
            for (double& v : ui) v = normal(rng);

        std::vector<double> score(K, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t a = 0; a < kc; ++a) score[k] += shared_readout(k, a) * c[a];
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t a = 0; a < ku; ++a)
                    score[k] += spec.unique_label_weight * spec.beta[i] * unique_readout[i](k, a) * u[i][a];
        }
        if (spec.task == TaskKind::classification) {
            int y = static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
            if (spec.synergy && ((c[0] > 0.0) != (c[1] > 0.0))) y = (y + 1) % static_cast<int>(K);
            ds.labels.push_back(y);
            ds.targets.push_back(static_cast<double>(y));
        } else {
            double s = score[0] / score_norm;
            if (spec.synergy && ((c[0] > 0.0) != (c[1] > 0.0))) s = -s;
            const double y = 3.0 * std::tanh(s);
            ds.targets.push_back(y);
            ds.labels.push_back(discretize_label(y));
        }

        for (std::size_t i = 0; i < M; ++i) {
            const Matrix& E = embeds[i];
            auto row = ds.modalities[i].row(n);
            for (std::size_t r = 0; r < row.size(); ++r) {
                double x = 0.0;
                for (std::size_t a = 0; a < kc; ++a) x += spec.alpha * E(r, a) * c[a];
                for (std::size_t a = 0; a < ku; ++a) x += spec.beta[i] * E(r, kc + a) * u[i][a];
                row[r] = x;
            }
        }
        for (std::size_t i = 0; i < M; ++i)
            for (double& v : ds.modalities[i].row(n)) v += spec.noise * normal(rng);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Missing-modality views

struct MaskPolicy {
    enum class Kind { full, subset, random };
    Kind kind = Kind::full;
    std::set<std::size_t> keep;  // for subset: 0-based modalities left visible
    double p = 0.0;              // for random: per-modality drop probability
    std::uint64_t seed = 0;

    static MaskPolicy full() { return {}; }
    static MaskPolicy single(std::size_t i) { return {Kind::subset, {i}, 0.0, 0}; }
    static MaskPolicy pair(std::size_t i, std::size_t j) { return {Kind::subset, {i, j}, 0.0, 0}; }
    static MaskPolicy subset(std::set<std::size_t> keep) { return {Kind::subset, std::move(keep), 0.0, 0}; }
    static MaskPolicy random(double p, std::uint64_t seed) { return {Kind::random, {}, p, seed}; }
};

/// Evaluation view: masked modalities get available = false and NaN values.
inline Dataset mask_modalities(const Dataset& ds, const MaskPolicy& policy) {
    const std::size_t M = ds.num_modalities();
    Dataset out = ds;
    auto hide = [&](std::size_t i, std::size_t r) {
        out.available[i][r] = false;
        for (double& v : out.modalities[i].row(r)) v = std::numeric_limits<double>::quiet_NaN();
    };
    switch (policy.kind) {
        case MaskPolicy::Kind::full:
            break;
        case MaskPolicy::Kind::subset:
            if (policy.keep.empty()) throw ContractError("mask_modalities: policy masks every modality");
            for (std::size_t i : policy.keep)
                if (i >= M) throw ContractError("mask_modalities: modality index " + std::to_string(i + 1) + " out of range");
            for (std::size_t i = 0; i < M; ++i)
                if (!policy.keep.contains(i))
                    for (std::size_t r = 0; r < ds.size(); ++r) hide(i, r);
            break;
        case MaskPolicy::Kind::random: {
            if (policy.p < 0.0 || policy.p > 1.0) throw ContractError("mask_modalities: p must lie in [0, 1]");
            std::mt19937_64 rng(policy.seed);
            std::bernoulli_distribution drop(policy.p);
            std::uniform_int_distribution<std::size_t> pick(0, M - 1);
            for (std::size_t r = 0; r < ds.size(); ++r) {
                std::vector<bool> dropped(M);
                for (std::size_t i = 0; i < M; ++i) dropped[i] = drop(rng);
                // Every sample keeps at least one modality.
                if (std::ranges::all_of(dropped, [](bool d) { return d; })) dropped[pick(rng)] = false;
                for (std::size_t i = 0; i < M; ++i)
                    if (dropped[i]) hide(i, r);
            }
            break;
        }
    }
    for (std::size_t r = 0; r < ds.size(); ++r) {
        bool any = false;
        for (std::size_t i = 0; i < M; ++i) any = any || out.available[i][r];
        if (!any) throw ContractError("mask_modalities: sample " + std::to_string(r) + " has no modality left");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Delimited-text serialization
//
//   robult-dataset,1,<task>,<classes>,<dim_1>;<dim_2>;...
//   label,target,avail_1,..,avail_M,m1_0,..,mM_{dM-1}
//   <rows>

inline constexpr int kDatasetFormatVersion = 1;

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline void write_dataset(std::ostream& os, const Dataset& ds) {
    const std::size_t M = ds.num_modalities();
    os << "robult-dataset," << kDatasetFormatVersion << ',' << to_string(ds.task) << ',' << ds.classes << ',';
    for (std::size_t i = 0; i < M; ++i) os << (i ? ";" : "") << ds.modalities[i].cols;
    os << "\nlabel,target";
    for (std::size_t i = 0; i < M; ++i) os << ",avail_" << i + 1;
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t c = 0; c < ds.modalities[i].cols; ++c) os << ",m" << i + 1 << '_' << c;
    os << '\n';
    for (std::size_t r = 0; r < ds.size(); ++r) {
        os << ds.labels[r] << ',' << format_double(ds.targets[r]);
        for (std::size_t i = 0; i < M; ++i) os << ',' << (ds.available[i][r] ? 1 : 0);
        for (std::size_t i = 0; i < M; ++i)
            for (double v : ds.modalities[i].row(r)) os << ',' << format_double(v);
        os << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s) {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters in number '" + s + "'");
    return v;
}

}  // namespace detail

inline Dataset read_dataset(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("dataset: empty input");
    const auto head = detail::split(line, ',');
    if (head.size() != 5 || head[0] != "robult-dataset") throw std::runtime_error("dataset: bad header line");
    if (std::stoi(head[1]) != kDatasetFormatVersion) {
        throw std::runtime_error("dataset: format version " + head[1] + ", expected " + std::to_string(kDatasetFormatVersion));
    }
    Dataset ds;
    if (head[2] == "classification") ds.task = TaskKind::classification;
    else if (head[2] == "regression") ds.task = TaskKind::regression;
    else throw std::runtime_error("dataset: unknown task '" + head[2] + "'");
    ds.classes = static_cast<std::size_t>(std::stoul(head[3]));
    std::vector<std::size_t> dims;
    for (const auto& d : detail::split(head[4], ';')) dims.push_back(static_cast<std::size_t>(std::stoul(d)));
    const std::size_t M = dims.size();
    if (!std::getline(is, line)) throw std::runtime_error("dataset: missing column header");

    std::vector<std::vector<double>> values(M);
    ds.available.assign(M, {});
    std::size_t width = 2 + M;
    for (std::size_t d : dims) width += d;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split(line, ',');
        if (cells.size() != width) throw std::runtime_error("dataset: row has " + std::to_string(cells.size()) + " cells, expected " + std::to_string(width));
        ds.labels.push_back(std::stoi(cells[0]));
        ds.targets.push_back(detail::parse_double(cells[1]));
        for (std::size_t i = 0; i < M; ++i) ds.available[i].push_back(cells[2 + i] == "1");
        std::size_t pos = 2 + M;
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t c = 0; c < dims[i]; ++c) values[i].push_back(detail::parse_double(cells[pos++]));
    }
    for (std::size_t i = 0; i < M; ++i) ds.modalities.emplace_back(ds.labels.size(), dims[i], std::move(values[i]));
    return ds;
}

}  // namespace robult
