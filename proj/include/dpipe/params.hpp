#pragma once

#include <string>
#include <vector>

#include "dpipe/tape.hpp"

namespace dpipe {

/// Named handle to a trainable parameter array owned by a model struct.
struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
};

using ParamList = std::vector<ParamRef>;

/// One gradient array per parameter array, aligned with the ParamList that
/// produced it.
struct ParamGrads {
    std::vector<std::string> names;
    std::vector<Tensor> grads;

    Tensor* find(const std::string& name) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return &grads[i];
        return nullptr;
    }
    void accumulate(const ParamGrads& other, double scale = 1.0);
    double max_abs_entry() const;
};

/// Parameters registered on a tape for one forward pass, in list order.
struct BoundParams {
    const ParamList* list = nullptr;
    std::vector<Var> vars;

    Var var(const std::string& name) const;
};

/// Registers every parameter as a leaf (trainable) or constant.
BoundParams bind_params(Tape& t, const ParamList& params, bool trainable = true);

/// Reads gradients off a tape after backward; throws NumericalError on
/// non-finite entries, naming the offending array.
ParamGrads collect_grads(const Tape& t, const BoundParams& bound);

} // namespace dpipe
