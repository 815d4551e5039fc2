#ifndef TABGPT_ADAM_HPP
#define TABGPT_ADAM_HPP

#include <cmath>
#include <vector>

#include "tabgpt/tensor.hpp"

namespace tabgpt {

template <typename Real>
struct AdamState {
    std::vector<Tensor<Real>> first_moment;
    std::vector<Tensor<Real>> second_moment;
    long step = 0;

    static AdamState init(const std::vector<Tensor<Real>*>& params) {
        AdamState s;
        for (const auto* p : params) {
            s.first_moment.push_back(Tensor<Real>::zeros(p->shape));
            s.second_moment.push_back(Tensor<Real>::zeros(p->shape));
        }
        return s;
    }
};

// Standard bias-corrected Adam update, in place.
template <typename Real>
void adam_step(const std::vector<Tensor<Real>*>& params, const std::vector<const Tensor<Real>*>& grads,
               AdamState<Real>& state, Real lr, Real beta1, Real beta2, Real eps) {
    if (lr <= Real(0)) throw Error("adam_step: learning rate must be positive");
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw Error("adam_step: parameter/gradient/state counts disagree");
    state.step += 1;
    const Real bc1 = Real(1) - static_cast<Real>(std::pow(static_cast<double>(beta1), state.step));
    const Real bc2 = Real(1) - static_cast<Real>(std::pow(static_cast<double>(beta2), state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor<Real>& p = *params[k];
        const Tensor<Real>& g = *grads[k];
        Tensor<Real>& m = state.first_moment[k];
        Tensor<Real>& v = state.second_moment[k];
        if (!p.same_shape(g) || !p.same_shape(m))
            throw Error("adam_step: shape mismatch at parameter " + std::to_string(k) + " (" + p.shape_str() +
                        " vs " + g.shape_str() + ")");
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = beta1 * m.data[i] + (Real(1) - beta1) * g.data[i];
            v.data[i] = beta2 * v.data[i] + (Real(1) - beta2) * g.data[i] * g.data[i];
            const Real mhat = m.data[i] / bc1;
            const Real vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

} // namespace tabgpt

#endif
