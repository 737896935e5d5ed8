#pragma once

// Dense rank-2 tensors with a dynamic reverse-mode autodiff tape.
//
// Every op appends a node holding its operands and a local backward rule.
// Nodes carry a per-thread creation sequence number, so the reverse creation
// order is also a valid reverse topological order. Leaves own a persistent
// `requires_grad` flag; interior nodes decide at backward time whether any of
// their ancestors still wants gradient, which lets callers flip parameter
// flags between several backward passes over one forward graph.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "robult/errors.hpp"

namespace robult {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Plain row-major matrix used for data, constants and detached values.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != r * c) {
            throw DimensionError("Matrix: " + std::to_string(data.size()) + " values for shape [" +
                                 std::to_string(r) + "x" + std::to_string(c) + "]");
        }
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad and accumulates into inputs whose `active` flag is set.
    std::function<void(Node&)> backward;
    // Scratch state owned by the backward pass in progress.
    bool active = false;
};

inline std::uint64_t next_seq() {
    thread_local std::uint64_t counter = 0;
    return ++counter;
}

inline bool& grad_mode_disabled() {
    thread_local bool disabled = false;
    return disabled;
}

}  // namespace detail

/// While alive, ops on this thread build no graph and return constant leaves.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_disabled()) { detail::grad_mode_disabled() = true; }
    ~NoGradGuard() { detail::grad_mode_disabled() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = shape_size(shape);
        return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
        if (shape_size(shape) != values.size()) {
            throw DimensionError("Tensor: " + std::to_string(values.size()) + " values for shape " +
                                 shape_string(shape));
        }
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->grad.assign(values.size(), 0.0);
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        node->seq = detail::next_seq();
        return Tensor(std::move(node));
    }

    static Tensor constant(const Matrix& m) { return from({m.rows, m.cols}, m.data, false); }
    static Tensor parameter(const Matrix& m) { return from({m.rows, m.cols}, m.data, true); }
    static Tensor scalar(double v, bool requires_grad = false) { return from({1, 1}, {v}, requires_grad); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }

    std::span<const double> values() const { return node_->value; }
    std::span<double> mutable_values() { return node_->value; }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad; }

    double value(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    double item() const {
        if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
        return node_->value[0];
    }

    Matrix matrix() const { return Matrix(rows(), cols(), node_->value); }
    Matrix grad_matrix() const { return Matrix(rows(), cols(), node_->grad); }

    bool is_leaf() const { return node_->leaf; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }

    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

    /// Same storage identity check used for parameter bookkeeping.
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    /// Accumulates d(this)/d(leaf) into every reachable leaf whose flag is set.
    void backward() const;

    // Internal: used by op implementations.
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

inline void set_requires_grad(std::span<Tensor> params, bool flag) {
    for (auto& p : params) p.set_requires_grad(flag);
}

inline void zero_grad(std::span<Tensor> params) {
    for (auto& p : params) p.zero_grad();
}

inline void Tensor::backward() const {
    if (size() != 1) {
        throw ContractError("backward() requires a scalar root, got shape " + shape_string(shape()));
    }
    // Collect the reachable subgraph.
    std::vector<detail::Node*> nodes;
    {
        std::vector<detail::Node*> stack{node_.get()};
        std::unordered_set<const detail::Node*> seen;
        while (!stack.empty()) {
            detail::Node* n = stack.back();
            stack.pop_back();
            if (!seen.insert(n).second) continue;
            nodes.push_back(n);
            for (auto& in : n->inputs) stack.push_back(in.get());
        }
    }
    std::sort(nodes.begin(), nodes.end(), [](auto* a, auto* b) { return a->seq < b->seq; });

    // Leaves first (they may come from another thread's counter), then an
    // interior node is active if any operand is.
    for (auto* n : nodes)
        if (n->leaf) n->active = n->requires_grad;
    for (auto* n : nodes) {
        if (n->leaf) continue;
        n->active = std::any_of(n->inputs.begin(), n->inputs.end(), [](auto& in) { return in->active; });
        std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
    detail::Node* root = node_.get();
    if (!root->active) return;
    root->grad[0] += 1.0;

    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        detail::Node* n = *it;
        if (!n->leaf && n->active && n->backward) n->backward(*n);
    }
    for (auto* n : nodes) n->active = false;
}

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> operands,
                          std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->grad.assign(value.size(), 0.0);
    node->value = std::move(value);
    node->seq = next_seq();
    if (!grad_mode_disabled()) {
        node->leaf = false;
        node->inputs.reserve(operands.size());
        for (auto& t : operands) node->inputs.push_back(t.node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

inline void require_rank2(const Tensor& t, const char* op) {
    if (t.shape().size() != 2) {
        throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " + shape_string(t.shape()));
    }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, Forward f, Derivative df) {
    std::vector<double> out(a.size());
    auto in = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return make_result(a.shape(), std::move(out), {a}, [df](Node& self) {
        Node& x = *self.inputs[0];
        if (!x.active) return;
        for (std::size_t i = 0; i < x.grad.size(); ++i) x.grad[i] += self.grad[i] * df(x.value[i], self.value[i]);
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
        }
    }
    return detail::make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        detail::Node& A = *self.inputs[0];
        detail::Node& B = *self.inputs[1];
        const auto& G = self.grad;
        if (A.active) {  // dA = G * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B.value[p * n + j];
                    A.grad[i * k + p] += acc;
                }
        }
        if (B.active) {  // dB = A^T * G
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A.value[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) B.grad[p * n + j] += aip * G[i * n + j];
                }
        }
    });
}

inline Tensor transpose(const Tensor& a) {
    detail::require_rank2(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    auto av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    return detail::make_result({n, m}, std::move(out), {a}, [m, n](detail::Node& self) {
        detail::Node& A = *self.inputs[0];
        if (!A.active) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) A.grad[i * n + j] += self.grad[j * m + i];
    });
}

/// x[m x n] + bias[1 x n], bias repeated over rows.
inline Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
    detail::require_rank2(x, "add_row_bias");
    detail::require_rank2(bias, "add_row_bias");
    const std::size_t m = x.rows(), n = x.cols();
    if (bias.rows() != 1 || bias.cols() != n) {
        throw DimensionError("add_row_bias: bias " + shape_string(bias.shape()) + " does not fit " +
                             shape_string(x.shape()));
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    auto bv = bias.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    return detail::make_result({m, n}, std::move(out), {x, bias}, [m, n](detail::Node& self) {
        detail::Node& X = *self.inputs[0];
        detail::Node& b = *self.inputs[1];
        if (X.active)
            for (std::size_t i = 0; i < m * n; ++i) X.grad[i] += self.grad[i];
        if (b.active)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) b.grad[j] += self.grad[i * n + j];
    });
}

/// Column-wise concatenation [a | b].
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    detail::require_rank2(a, "concat_cols");
    detail::require_rank2(b, "concat_cols");
    if (a.rows() != b.rows()) {
        throw DimensionError("concat_cols: row counts differ, " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.rows(), na = a.cols(), nb = b.cols(), n = na + nb;
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(a.values().begin() + i * na, na, out.begin() + i * n);
        std::copy_n(b.values().begin() + i * nb, nb, out.begin() + i * n + na);
    }
    return detail::make_result({m, n}, std::move(out), {a, b}, [m, na, nb, n](detail::Node& self) {
        detail::Node& A = *self.inputs[0];
        detail::Node& B = *self.inputs[1];
        for (std::size_t i = 0; i < m; ++i) {
            if (A.active)
                for (std::size_t j = 0; j < na; ++j) A.grad[i * na + j] += self.grad[i * n + j];
            if (B.active)
                for (std::size_t j = 0; j < nb; ++j) B.grad[i * nb + j] += self.grad[i * n + na + j];
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        for (auto& in : self.inputs)
            if (in->active)
                for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        detail::Node& A = *self.inputs[0];
        detail::Node& B = *self.inputs[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (A.active) A.grad[i] += self.grad[i];
            if (B.active) B.grad[i] -= self.grad[i];
        }
    });
}

/// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        detail::Node& A = *self.inputs[0];
        detail::Node& B = *self.inputs[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (A.active) A.grad[i] += self.grad[i] * B.value[i];
            if (B.active) B.grad[i] += self.grad[i] * A.value[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double factor) {
    return detail::unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

inline Tensor add_scalar(const Tensor& a, double offset) {
    return detail::unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                         [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
    for (double v : a.values()) {
        if (!(v > 0.0)) throw DomainError("log: nonpositive input " + std::to_string(v));
    }
    return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor square(const Tensor& a) {
    return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// |x|; subgradient 0 at the kink.
inline Tensor absolute(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::abs(x); },
                         [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    return detail::make_result({1, 1}, {total}, {a}, [](detail::Node& self) {
        detail::Node& A = *self.inputs[0];
        if (!A.active) return;
        for (double& g : A.grad) g += self.grad[0];
    });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// [m x n] -> [m x 1] row sums.
inline Tensor sum_rows(const Tensor& a) {
    detail::require_rank2(a, "sum_rows");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += a.values()[i * n + j];
    return detail::make_result({m, 1}, std::move(out), {a}, [m, n](detail::Node& self) {
        detail::Node& A = *self.inputs[0];
        if (!A.active) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) A.grad[i * n + j] += self.grad[i];
    });
}

/// Sum of a ⊙ weights with constant weights.
inline Tensor weighted_sum(const Tensor& a, const Matrix& weights) {
    if (a.shape() != Shape{weights.rows, weights.cols}) {
        throw DimensionError("weighted_sum: " + shape_string(a.shape()) + " vs weights " +
                             shape_string({weights.rows, weights.cols}));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += a.values()[i] * weights.data[i];
    return detail::make_result({1, 1}, {total}, {a}, [w = weights.data](detail::Node& self) {
        detail::Node& A = *self.inputs[0];
        if (!A.active) return;
        for (std::size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += self.grad[0] * w[i];
    });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

inline constexpr double kMinRowNorm = 1e-12;

/// Scales each row to unit Euclidean norm. Rows with norm below 1e-12 are rejected.
inline Tensor l2_normalize_rows(const Tensor& a) {
    detail::require_rank2(a, "l2_normalize_rows");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    std::vector<double> norms(m);
    auto av = a.values();
    for (std::size_t i = 0; i < m; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < n; ++j) sq += av[i * n + j] * av[i * n + j];
        const double norm = std::sqrt(sq);
        if (!(norm >= kMinRowNorm) || !std::isfinite(norm)) {
            throw DegenerateInputError("l2_normalize_rows: row " + std::to_string(i) + " has norm " +
                                       std::to_string(norm));
        }
        norms[i] = norm;
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] / norm;
    }
    return detail::make_result({m, n}, std::move(out), {a}, [m, n, norms](detail::Node& self) {
        detail::Node& A = *self.inputs[0];
        if (!A.active) return;
        // dx = (g - y (y.g)) / |x|
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += self.value[i * n + j] * self.grad[i * n + j];
            for (std::size_t j = 0; j < n; ++j)
                A.grad[i * n + j] += (self.grad[i * n + j] - self.value[i * n + j] * dot) / norms[i];
        }
    });
}

/// Numerically stable row-wise log-softmax.
inline Tensor log_softmax_rows(const Tensor& a) {
    detail::require_rank2(a, "log_softmax_rows");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    auto av = a.values();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = av.data() + i * n;
        const double shift = *std::max_element(row, row + n);
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += std::exp(row[j] - shift);
        const double lse = shift + std::log(acc);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
    }
    return detail::make_result({m, n}, std::move(out), {a}, [m, n](detail::Node& self) {
        detail::Node& A = *self.inputs[0];
        if (!A.active) return;
        for (std::size_t i = 0; i < m; ++i) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) gsum += self.grad[i * n + j];
            for (std::size_t j = 0; j < n; ++j)
                A.grad[i * n + j] += self.grad[i * n + j] - std::exp(self.value[i * n + j]) * gsum;
        }
    });
}

}  // namespace robult
