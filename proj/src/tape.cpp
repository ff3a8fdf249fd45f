#include "dpipe/tape.hpp"

#include <string>

namespace dpipe {

const Tape::Node& Tape::at(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw std::logic_error("tape: invalid var");
    return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor v) {
    Node n;
    n.val = std::move(v);
    n.op = "constant";
    return push(std::move(n));
}

Var Tape::constant_complex(ComplexField v) {
    Node n;
    n.cval = std::move(v);
    n.complex = true;
    n.op = "constant";
    return push(std::move(n));
}

Var Tape::leaf(Tensor v) {
    Node n;
    n.val = std::move(v);
    n.needs_grad = true;
    n.op = "leaf";
    return push(std::move(n));
}

Var Tape::emplace(Tensor v, const char* op, std::vector<int> inputs,
                  std::function<void(Tape&, int)> backward) {
    Node n;
    n.val = std::move(v);
    n.op = op;
    for (int in : inputs)
        if (nodes_.at(static_cast<std::size_t>(in)).needs_grad) n.needs_grad = true;
    n.inputs = std::move(inputs);
    if (n.needs_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

Var Tape::emplace_complex(ComplexField v, const char* op, std::vector<int> inputs,
                          std::function<void(Tape&, int)> backward) {
    Node n;
    n.cval = std::move(v);
    n.complex = true;
    n.op = op;
    for (int in : inputs)
        if (nodes_.at(static_cast<std::size_t>(in)).needs_grad) n.needs_grad = true;
    n.inputs = std::move(inputs);
    if (n.needs_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (!n.has_grad) {
        n.grad = Tensor(n.val.h, n.val.w, n.val.c);
        n.has_grad = true;
    }
    return n.grad;
}

ComplexField& Tape::cgrad_buf(int id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (!n.has_grad) {
        n.cgrad = ComplexField(n.cval.h, n.cval.w);
        n.has_grad = true;
    }
    return n.cgrad;
}

void Tape::backward(Var loss) {
    if (backward_done_) throw std::logic_error("tape: backward already ran on this tape");
    const Node& top = at(loss);
    if (top.complex || top.val.size() != 1)
        throw std::invalid_argument("tape: backward requires a scalar loss node");
    backward_done_ = true;

    grad_buf(loss.id).data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || !n.has_grad || !n.backward) continue;
        const bool finite = n.complex ? all_finite(n.cgrad) : all_finite(n.grad);
        if (!finite)
            throw NumericalError(std::string("tape: non-finite adjoint at node '") + n.op + "'");
        n.backward(*this, id);
    }
}

Tensor Tape::grad_or_zero(Var v) const {
    const Node& n = at(v);
    if (n.complex) throw std::logic_error("tape: grad_or_zero on complex node");
    if (n.has_grad) return n.grad;
    return Tensor(n.val.h, n.val.w, n.val.c);
}

} // namespace dpipe
