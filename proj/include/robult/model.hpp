#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "robult/batch.hpp"
#include "robult/errors.hpp"
#include "robult/tensor.hpp"

namespace robult {

/// Affine map y = x W + b, with W stored [in x out].
struct Linear {
    std::string name;
    Tensor weight;
    Tensor bias;

    Linear() = default;
    Linear(std::string layer_name, std::size_t in, std::size_t out, std::mt19937_64& rng) : name(std::move(layer_name)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Matrix w(in, out), b(1, out);
        for (double& v : w.data) v = dist(rng);
        for (double& v : b.data) v = dist(rng);
        weight = Tensor::parameter(w);
        bias = Tensor::parameter(b);
    }

    Tensor operator()(const Tensor& x) const { return add_row_bias(matmul(x, weight), bias); }

    std::size_t in_features() const { return weight.rows(); }
    std::size_t out_features() const { return weight.cols(); }
    std::size_t parameter_count() const { return weight.size() + bias.size(); }

    void zero() {
        std::ranges::fill(weight.mutable_values(), 0.0);
        std::ranges::fill(bias.mutable_values(), 0.0);
    }

    void collect(std::vector<Tensor>& out) const {
        out.push_back(weight);
        out.push_back(bias);
    }
};

/// Linear -> ReLU -> Linear.
struct TwoLayerPerceptron {
    Linear first;
    Linear second;

    TwoLayerPerceptron() = default;
    TwoLayerPerceptron(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                       std::mt19937_64& rng)
        : first(name + ".0", in, hidden, rng), second(name + ".1", hidden, out, rng) {}

    Tensor operator()(const Tensor& x) const { return second(relu(first(x))); }

    std::size_t parameter_count() const { return first.parameter_count() + second.parameter_count(); }
    void collect(std::vector<Tensor>& out) const {
        first.collect(out);
        second.collect(out);
    }
};

struct ModelConfig {
    std::vector<std::size_t> raw_dims;
    std::size_t latent_dim = 60;
    TaskKind task = TaskKind::classification;
    std::size_t num_classes = 2;
    // When false, branch predictions read c(z^i) directly and U^i is never built.
    bool unique_branches = true;

    std::size_t modalities() const { return raw_dims.size(); }
    std::size_t output_dim() const { return task == TaskKind::classification ? num_classes : 1; }
};

/// Everything a single forward pass over a full-modality batch produces.
struct ForwardOutputs {
    std::vector<Tensor> H;
    std::vector<Tensor> Z;
    std::vector<Tensor> U;
    Tensor S;
    std::vector<Tensor> H_tilde;
    std::vector<Tensor> logits_per_branch;
    Tensor logits_fused;
};

/// Late-fusion predictions for one batch.
struct Predictions {
    Matrix outputs;           // B x K averaged logits, or B x 1 regression values
    std::vector<int> classes;  // argmax per row; empty for regression
};

/// Disjoint-by-role parameter views. Handles alias the model's storage.
struct ParameterGroups {
    std::vector<Tensor> all;
    std::vector<Tensor> unique_heads_and_reconstructors;
    std::vector<Tensor> projectors_and_shared_head;
    std::vector<Tensor> classifier;
};

class RobultModel {
public:
    RobultModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
        if (config_.modalities() == 0) throw ConfigError("model needs at least one modality");
        if (config_.latent_dim == 0) throw ConfigError("latent_dim must be positive");
        if (config_.task == TaskKind::classification && config_.num_classes < 2) {
            throw ConfigError("classification needs at least 2 classes");
        }
        std::mt19937_64 rng(seed);
        const std::size_t d = config_.latent_dim;
        const std::size_t M = config_.modalities();
        std::size_t total_raw = 0;
        for (std::size_t i = 0; i < M; ++i) {
            projectors_.emplace_back("f" + std::to_string(i + 1), config_.raw_dims[i], d, rng);
            total_raw += config_.raw_dims[i];
        }
        fusion_ = Linear("f0", total_raw, d, rng);
        shared_head_ = TwoLayerPerceptron("g0", d, d, d, rng);
        for (std::size_t i = 0; i < M; ++i) unique_heads_.emplace_back("g" + std::to_string(i + 1), d, d, rng);
        for (std::size_t i = 0; i < M; ++i)
            reconstructors_.emplace_back("r" + std::to_string(i + 1), 2 * d, d, d, rng);
        classifier_ = Linear("c", d, config_.output_dim(), rng);
    }

    const ModelConfig& config() const { return config_; }
    std::size_t modalities() const { return config_.modalities(); }
    std::size_t latent_dim() const { return config_.latent_dim; }

    const Linear& projector(std::size_t i) const { return projectors_.at(i); }
    const Linear& fusion() const { return fusion_; }
    const TwoLayerPerceptron& shared_head() const { return shared_head_; }
    const Linear& unique_head(std::size_t i) const { return unique_heads_.at(i); }
    const TwoLayerPerceptron& reconstructor(std::size_t i) const { return reconstructors_.at(i); }
    const Linear& classifier() const { return classifier_; }
    Linear& classifier() { return classifier_; }
    TwoLayerPerceptron& reconstructor(std::size_t i) { return reconstructors_.at(i); }

    /// g^0: shared between the per-modality Z^i path and the fused S path.
    Tensor shared(const Tensor& h) const { return l2_normalize_rows(shared_head_(h)); }
    Tensor unique(const Tensor& h, std::size_t i) const { return l2_normalize_rows(unique_heads_.at(i)(h)); }

    /// H~^i = r^i([U | Z]).
    Tensor reconstruct(const Tensor& u, const Tensor& z, std::size_t i) const {
        const std::size_t d = config_.latent_dim;
        if (u.cols() != d || z.cols() != d || u.rows() != z.rows()) {
            throw DimensionError("reconstruct: expected two [Bx" + std::to_string(d) + "] inputs, got " +
                                 shape_string(u.shape()) + " and " + shape_string(z.shape()));
        }
        return reconstructors_.at(i)(concat_cols(u, z));
    }

    ForwardOutputs forward_all(const Batch& batch) const {
        const std::size_t M = modalities();
        check_inputs(batch);
        if (!batch.fully_available()) {
            throw ContractError("forward_all: training batches must provide every modality");
        }
        ForwardOutputs out;
        for (std::size_t i = 0; i < M; ++i) {
            Tensor x = Tensor::constant(batch.inputs[i]);
            Tensor h = projectors_[i](x);
            Tensor z = shared(h);
            out.H.push_back(h);
            out.Z.push_back(z);
            if (config_.unique_branches) {
                Tensor u = unique(h, i);
                out.U.push_back(u);
                out.H_tilde.push_back(reconstruct(u, z, i));
                out.logits_per_branch.push_back(classifier_(add(z, u)));
            } else {
                out.logits_per_branch.push_back(classifier_(z));
            }
        }
        out.S = shared(fusion_(Tensor::constant(concat_inputs(batch))));
        out.logits_fused = classifier_(out.S);
        return out;
    }

    /// Prediction for one branch ỹ^i, reading only modality i.
    Tensor branch_output(const Matrix& input, std::size_t i) const {
        Tensor h = projectors_.at(i)(Tensor::constant(input));
        Tensor z = shared(h);
        return config_.unique_branches ? classifier_(add(z, unique(h, i))) : classifier_(z);
    }

    /// c(g^0(f^0(x))); reads every modality.
    Tensor fused_output(const Batch& batch) const {
        return classifier_(shared(fusion_(Tensor::constant(concat_inputs(batch)))));
    }

    /// Inference with the given modalities. All modalities use the fused path;
    /// a strict subset averages the per-branch outputs (late fusion).
    Predictions infer(const Batch& batch, const std::set<std::size_t>& available) const {
        const std::size_t M = modalities();
        if (available.empty()) throw ContractError("infer: empty modality set");
        for (std::size_t i : available)
            if (i >= M) throw ContractError("infer: modality index " + std::to_string(i) + " out of range");
        check_inputs(batch);

        NoGradGuard no_grad;
        Predictions pred;
        if (available.size() == M) {
            pred.outputs = fused_output(batch).matrix();
        } else {
            for (std::size_t i : available) {
                Matrix y = branch_output(batch.inputs[i], i).matrix();
                if (pred.outputs.data.empty()) {
                    pred.outputs = std::move(y);
                } else {
                    for (std::size_t k = 0; k < y.data.size(); ++k) pred.outputs.data[k] += y.data[k];
                }
            }
            const double n = static_cast<double>(available.size());
            for (double& v : pred.outputs.data) v /= n;
        }
        if (config_.task == TaskKind::classification) pred.classes = argmax_rows(pred.outputs);
        return pred;
    }

    ParameterGroups parameter_groups(bool algorithm1_toggle_reading = false) const {
        ParameterGroups g;
        g.all = parameters();
        for (const auto& u : unique_heads_) u.collect(g.unique_heads_and_reconstructors);
        for (const auto& r : reconstructors_) r.collect(g.unique_heads_and_reconstructors);
        for (const auto& f : projectors_) f.collect(g.projectors_and_shared_head);
        fusion_.collect(g.projectors_and_shared_head);
        shared_head_.collect(g.projectors_and_shared_head);
        // Literal reading of the toggle for flag 2: every f^i and g^i, i = 0..M.
        if (algorithm1_toggle_reading)
            for (const auto& u : unique_heads_) u.collect(g.projectors_and_shared_head);
        classifier_.collect(g.classifier);
        return g;
    }

    /// All parameters in declaration order: f^1..f^M, f^0, g^0, g^1..g^M, r^1..r^M, c.
    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (const auto& f : projectors_) f.collect(out);
        fusion_.collect(out);
        shared_head_.collect(out);
        for (const auto& u : unique_heads_) u.collect(out);
        for (const auto& r : reconstructors_) r.collect(out);
        classifier_.collect(out);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : parameters()) n += p.size();
        return n;
    }

    /// Parameters in g^0..g^M and r^1..r^M (the latent-space modules).
    std::size_t branch_parameter_count() const {
        std::size_t n = shared_head_.parameter_count();
        for (const auto& u : unique_heads_) n += u.parameter_count();
        for (const auto& r : reconstructors_) n += r.parameter_count();
        return n;
    }

    static std::vector<int> argmax_rows(const Matrix& m) {
        std::vector<int> out(m.rows);
        for (std::size_t r = 0; r < m.rows; ++r) {
            auto row = m.row(r);
            out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        }
        return out;
    }

private:
    void check_inputs(const Batch& batch) const {
        if (batch.modalities() != modalities()) {
            throw DimensionError("batch has " + std::to_string(batch.modalities()) + " modalities, model expects " +
                                 std::to_string(modalities()));
        }
        for (std::size_t i = 0; i < modalities(); ++i) {
            if (batch.inputs[i].cols != config_.raw_dims[i] || batch.inputs[i].rows != batch.size()) {
                throw DimensionError("modality " + std::to_string(i + 1) + " input is [" +
                                     std::to_string(batch.inputs[i].rows) + "x" +
                                     std::to_string(batch.inputs[i].cols) + "], expected width " +
                                     std::to_string(config_.raw_dims[i]));
            }
        }
    }

    static Matrix concat_inputs(const Batch& batch) {
        std::size_t width = 0;
        for (const auto& m : batch.inputs) width += m.cols;
        Matrix out(batch.size(), width);
        for (std::size_t r = 0; r < out.rows; ++r) {
            std::size_t offset = 0;
            for (const auto& m : batch.inputs) {
                std::ranges::copy(m.row(r), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
                offset += m.cols;
            }
        }
        return out;
    }

    ModelConfig config_;
    std::vector<Linear> projectors_;
    Linear fusion_;
    TwoLayerPerceptron shared_head_;
    std::vector<Linear> unique_heads_;
    std::vector<TwoLayerPerceptron> reconstructors_;
    Linear classifier_;
};

}  // namespace robult
