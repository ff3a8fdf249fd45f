#pragma once

#include "dpipe/params.hpp"

namespace dpipe {

struct OptimizerConfig {
    double lr = 4.5e-3;
    double decay = 0.9;
    double eps = 1.0;
    double lr_decay_per_epoch = 0.94;
};

/// RMSProp: acc <- decay*acc + (1-decay)*g^2; p <- p - lr*g/sqrt(acc + eps).
class RmsProp {
public:
    explicit RmsProp(OptimizerConfig cfg) : cfg_(cfg) {}

    const OptimizerConfig& config() const { return cfg_; }
    double lr_at_epoch(int epoch) const;

    /// Applies one update in parameter-list order. `lr` is the (possibly
    /// decayed) learning rate for this step.
    void step(const ParamList& params, const ParamGrads& grads, double lr);

private:
    OptimizerConfig cfg_;
    std::vector<Tensor> acc_;
};

} // namespace dpipe
