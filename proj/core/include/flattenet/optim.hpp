#pragma once

// Optimizers update a fixed parameter list in place from the gradients the
// backward pass accumulated. Learning-rate schedules are plain functions of
// the step index so the training loop owns the clock.

#include "flattenet/param.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace flattenet {

template <typename T>
class Adam {
  public:
    explicit Adam(std::vector<Param<T>*> params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const Param<T>* p : params_) {
            m_.emplace_back(p->value.values().size(), T(0));
            v_.emplace_back(p->value.values().size(), T(0));
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Param<T>& p = *params_[i];
            for (std::int64_t j = 0; j < p.value.numel(); ++j) {
                const double g = static_cast<double>(p.grad[j]);
                const double m = beta1_ * static_cast<double>(m_[i][static_cast<std::size_t>(j)]) + (1.0 - beta1_) * g;
                const double v = beta2_ * static_cast<double>(v_[i][static_cast<std::size_t>(j)]) + (1.0 - beta2_) * g * g;
                m_[i][static_cast<std::size_t>(j)] = static_cast<T>(m);
                v_[i][static_cast<std::size_t>(j)] = static_cast<T>(v);
                p.value[j] -= static_cast<T>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps_));
            }
        }
    }

    std::int64_t steps() const { return t_; }

  private:
    std::vector<Param<T>*> params_;
    std::vector<std::vector<T>> m_, v_;
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

template <typename T>
class Sgd {
  public:
    explicit Sgd(std::vector<Param<T>*> params, double momentum = 0.0, double weight_decay = 0.0)
        : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
        for (const Param<T>* p : params_)
            vel_.emplace_back(p->value.values().size(), T(0));
    }

    void step(double lr) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Param<T>& p = *params_[i];
            for (std::int64_t j = 0; j < p.value.numel(); ++j) {
                const double g = static_cast<double>(p.grad[j]) +
                                 weight_decay_ * static_cast<double>(p.value[j]);
                const double v = momentum_ * static_cast<double>(vel_[i][static_cast<std::size_t>(j)]) + g;
                vel_[i][static_cast<std::size_t>(j)] = static_cast<T>(v);
                p.value[j] -= static_cast<T>(lr * v);
            }
        }
    }

  private:
    std::vector<Param<T>*> params_;
    std::vector<std::vector<T>> vel_;
    double momentum_, weight_decay_;
};

struct StepDropSchedule {
    double base_lr = 1e-3;
    std::int64_t drop_every = 1000;
    double factor = 0.1;

    double lr(std::int64_t step) const {
        if (drop_every < 1) throw std::invalid_argument("schedule: drop_every must be positive");
        return base_lr * std::pow(factor, static_cast<double>(step / drop_every));
    }
};

struct PolySchedule {
    double base_lr = 1e-3;
    std::int64_t total_steps = 1000;
    double power = 0.9;

    double lr(std::int64_t step) const {
        if (total_steps < 1) throw std::invalid_argument("schedule: total_steps must be positive");
        if (step >= total_steps) return 0.0;
        return base_lr * std::pow(1.0 - static_cast<double>(step) / static_cast<double>(total_steps), power);
    }
};

} // namespace flattenet
