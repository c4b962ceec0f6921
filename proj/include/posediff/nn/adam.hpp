#pragma once

#include <vector>

#include "posediff/nn/layers.hpp"

namespace posediff::nn {

// Plain Adam, no weight decay or schedule.
template <typename T>
class Adam {
public:
    Adam(std::vector<Param<T>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (Param<T>* p : params_) {
            if (!p->adam_m.defined()) p->adam_m = Tensor<T>::zeros(p->value.shape());
            if (!p->adam_v.defined()) p->adam_v = Tensor<T>::zeros(p->value.shape());
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void zero_grad() {
        for (Param<T>* p : params_) p->zero_grad();
    }

    void step() {
        step_count_++;
        const double bc1 = 1.0 - std::pow(beta1_, step_count_);
        const double bc2 = 1.0 - std::pow(beta2_, step_count_);
        for (Param<T>* p : params_) {
            for (int64_t i = 0; i < p->value.numel(); i++) {
                const T grad = p->grad[i];
                p->adam_m[i] = static_cast<T>(beta1_ * p->adam_m[i] + (1.0 - beta1_) * grad);
                p->adam_v[i] = static_cast<T>(beta2_ * p->adam_v[i] + (1.0 - beta2_) * grad * grad);
                const double mhat = p->adam_m[i] / bc1;
                const double vhat = p->adam_v[i] / bc2;
                p->value[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

private:
    std::vector<Param<T>*> params_;
    double lr_, beta1_, beta2_, eps_;
    int64_t step_count_ = 0;
};

}  // namespace posediff::nn
