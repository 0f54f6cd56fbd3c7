#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mstn/tensor.hpp"

namespace mstn {

struct Param {
    RealArray value;
    RealArray grad;
    RealArray m;  // Adam first moment
    RealArray v;  // Adam second moment
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named parameters with gradient slots and Adam state. Iteration order is the
// name order (std::map), which keeps clipping, updates and serialization
// deterministic.
class ParamStore {
  public:
    Param& create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        if (params_.count(name)) throw Error("duplicate parameter: " + name);
        Param p;
        p.value = RealArray::Zero(rows, cols);
        p.grad = RealArray::Zero(rows, cols);
        p.m = RealArray::Zero(rows, cols);
        p.v = RealArray::Zero(rows, cols);
        return params_.emplace(name, std::move(p)).first->second;
    }

    Param& create_normal(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                         double std_dev, Rng& rng) {
        Param& p = create(name, rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) p.value(i, j) = std_dev * rng.next_normal();
        }
        return p;
    }

    Param& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw Error("unknown parameter: " + name);
        return it->second;
    }
    const Param& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw Error("unknown parameter: " + name);
        return it->second;
    }
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    void zero_grad() {
        for (auto& [_, p] : params_) p.grad.setZero();
    }

    double grad_norm() const {
        double sq = 0.0;
        for (const auto& [_, p] : params_) sq += p.grad.squaredNorm();
        return std::sqrt(sq);
    }

    void clip_grad_norm(double max_norm) {
        const double norm = grad_norm();
        if (norm > max_norm && norm > 0.0) {
            const double s = max_norm / norm;
            for (auto& [_, p] : params_) p.grad *= s;
        }
    }

    // One Adam update over every parameter; gradients are cleared afterwards.
    void adam_step(double lr, const AdamConfig& cfg = {}) {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
        for (auto& [_, p] : params_) {
            p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * p.grad;
            p.v = cfg.beta2 * p.v +
                  (1.0 - cfg.beta2) * p.grad.array().square().matrix();
            p.value.array() -=
                lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + cfg.eps);
            p.grad.setZero();
        }
    }

    std::int64_t step() const { return step_; }
    void set_step(std::int64_t s) { step_ = s; }

    std::size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

  private:
    std::map<std::string, Param> params_;
    std::int64_t step_ = 0;
};

// Max relative error between analytic gradients and central differences over
// sampled coordinates. `loss` must be deterministic; when called with `true`
// it must also populate the store's gradients.
inline double gradient_check(const std::function<double(bool)>& loss, ParamStore& store,
                             double eps = 1e-5, int samples_per_param = 8,
                             std::uint64_t seed = 0) {
    store.zero_grad();
    loss(true);
    std::map<std::string, RealArray> analytic;
    for (auto& [name, p] : store) analytic[name] = p.grad;

    Rng rng(seed);
    double worst = 0.0;
    for (auto& [name, p] : store) {
        const Eigen::Index n = p.value.size();
        const int k = samples_per_param < n ? samples_per_param : static_cast<int>(n);
        for (int s = 0; s < k; ++s) {
            const Eigen::Index idx =
                static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(n)));
            double* cell = p.value.data() + idx;
            const double saved = *cell;
            *cell = saved + eps;
            const double up = loss(false);
            *cell = saved - eps;
            const double down = loss(false);
            *cell = saved;
            const double cd = (up - down) / (2.0 * eps);
            const double an = analytic[name](idx);
            const double denom = std::max({std::abs(an), std::abs(cd), 1e-12});
            const double rel = std::abs(an - cd) / denom;
            if (rel > worst) worst = rel;
        }
    }
    store.zero_grad();
    return worst;
}

}  // namespace mstn
