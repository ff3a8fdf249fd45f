#include "dpipe/optim.hpp"

#include <cmath>

namespace dpipe {

double RmsProp::lr_at_epoch(int epoch) const {
    return cfg_.lr * std::pow(cfg_.lr_decay_per_epoch, epoch);
}

void RmsProp::step(const ParamList& params, const ParamGrads& grads, double lr) {
    if (grads.grads.size() != params.size())
        throw std::logic_error("rmsprop: gradient/parameter count mismatch");
    if (acc_.empty()) {
        acc_.reserve(params.size());
        for (const ParamRef& p : params) acc_.emplace_back(p.value->h, p.value->w, p.value->c);
    }
    if (acc_.size() != params.size()) throw std::logic_error("rmsprop: parameter set changed");

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].value;
        const Tensor& g = grads.grads[i];
        if (!p.same_shape(g)) throw std::logic_error("rmsprop: gradient shape mismatch");
        Tensor& a = acc_[i];
        a.data = cfg_.decay * a.data + (1.0 - cfg_.decay) * g.data.square();
        p.data -= lr * g.data / (a.data + cfg_.eps).sqrt();
    }
}

} // namespace dpipe
