#include "dpipe/params.hpp"

namespace dpipe {

void ParamGrads::accumulate(const ParamGrads& other, double scale) {
    if (names.empty()) {
        names = other.names;
        grads.reserve(other.grads.size());
        for (const Tensor& g : other.grads) {
            Tensor t = g;
            t.data *= scale;
            grads.push_back(std::move(t));
        }
        return;
    }
    if (names != other.names) throw std::logic_error("ParamGrads: mismatched accumulation");
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i].data += scale * other.grads[i].data;
}

double ParamGrads::max_abs_entry() const {
    double m = 0.0;
    for (const Tensor& g : grads) m = std::max(m, max_abs(g));
    return m;
}

Var BoundParams::var(const std::string& name) const {
    for (std::size_t i = 0; i < list->size(); ++i)
        if ((*list)[i].name == name) return vars[i];
    throw std::logic_error("BoundParams: unknown parameter '" + name + "'");
}

BoundParams bind_params(Tape& t, const ParamList& params, bool trainable) {
    BoundParams b;
    b.list = &params;
    b.vars.reserve(params.size());
    for (const ParamRef& p : params)
        b.vars.push_back(trainable ? t.leaf(*p.value) : t.constant(*p.value));
    return b;
}

ParamGrads collect_grads(const Tape& t, const BoundParams& bound) {
    ParamGrads g;
    g.names.reserve(bound.vars.size());
    g.grads.reserve(bound.vars.size());
    for (std::size_t i = 0; i < bound.vars.size(); ++i) {
        Tensor grad = t.grad_or_zero(bound.vars[i]);
        if (!all_finite(grad))
            throw NumericalError("non-finite gradient for parameter '" +
                                 (*bound.list)[i].name + "'");
        g.names.push_back((*bound.list)[i].name);
        g.grads.push_back(std::move(grad));
    }
    return g;
}

} // namespace dpipe
