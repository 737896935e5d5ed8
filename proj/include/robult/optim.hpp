#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "robult/errors.hpp"
#include "robult/tensor.hpp"

namespace robult {

/// Adam with bias-corrected moments.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params, double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8)
        : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
        if (!(lr_ > 0.0)) throw ConfigError("learning_rate must be positive");
        if (beta1_ < 0.0 || beta1_ >= 1.0 || beta2_ < 0.0 || beta2_ >= 1.0) {
            throw ConfigError("Adam betas must lie in [0, 1)");
        }
        for (const auto& p : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    /// Applies the accumulated gradients of every parameter.
    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t idx = 0; idx < params_.size(); ++idx) {
            auto values = params_[idx].mutable_values();
            auto grad = params_[idx].grad();
            auto& m = m_[idx];
            auto& v = v_[idx];
            for (std::size_t k = 0; k < values.size(); ++k) {
                m[k] = beta1_ * m[k] + (1.0 - beta1_) * grad[k];
                v[k] = beta2_ * v[k] + (1.0 - beta2_) * grad[k] * grad[k];
                values[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    std::uint64_t steps() const { return t_; }
    double learning_rate() const { return lr_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
    const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }

private:
    std::vector<Tensor> params_;
    double lr_, beta1_, beta2_, eps_;
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace robult
