#pragma once

#include <functional>
#include <vector>

#include "dpipe/tensor.hpp"

namespace dpipe {

class Tape;

/// Handle to a node on a tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode differentiation record for one forward pass. Nodes are
/// appended in execution order, so walking ids backwards visits them in
/// reverse topological order. Adjoints accumulate by summation; a second
/// backward on the same tape is an error.
class Tape {
public:
    struct Node {
        Tensor val;
        ComplexField cval;
        bool complex = false;
        bool needs_grad = false;
        const char* op = "";
        std::vector<int> inputs;
        // Reads this node's adjoint and accumulates into its inputs' adjoints.
        std::function<void(Tape&, int)> backward;
        Tensor grad;
        ComplexField cgrad;
        bool has_grad = false;
    };

    Var constant(Tensor v);
    Var constant_complex(ComplexField v);
    /// Trainable leaf; participates in gradient propagation.
    Var leaf(Tensor v);

    Var emplace(Tensor v, const char* op, std::vector<int> inputs,
                std::function<void(Tape&, int)> backward);
    Var emplace_complex(ComplexField v, const char* op, std::vector<int> inputs,
                        std::function<void(Tape&, int)> backward);

    const Tensor& val(Var v) const { return at(v).val; }
    const ComplexField& cval(Var v) const { return at(v).cval; }
    bool is_complex(Var v) const { return at(v).complex; }
    bool needs_grad(Var v) const { return at(v).needs_grad; }

    /// Adjoint accumulation buffers; allocate zeros on first touch.
    Tensor& grad_buf(int id);
    ComplexField& cgrad_buf(int id);

    /// Runs reverse accumulation from a scalar loss node. Throws
    /// NumericalError if any adjoint goes non-finite (naming the op), and
    /// std::logic_error on reuse.
    void backward(Var loss);
    bool backward_done() const { return backward_done_; }

    /// Gradient of the loss w.r.t. a (real) node; zeros if no path reached it.
    Tensor grad_or_zero(Var v) const;

    std::size_t size() const { return nodes_.size(); }
    const Node& at(Var v) const;
    Node& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }

private:
    Var push(Node n);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

} // namespace dpipe
