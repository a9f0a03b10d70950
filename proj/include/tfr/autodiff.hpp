#pragma once

#include <vector>

#include "tfr/matrix.hpp"

namespace tfr::ad {

using num::Matrix;

/// Handle into a Tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over Matrix values. One tape per forward pass; nodes
/// are appended during the forward computation and replayed in reverse by
/// backward(). Values are immutable once recorded.
class Tape {
public:
    /// Leaf node (parameter or constant input).
    Var input(Matrix m);

    const Matrix& value(Var v) const { return nodes_[v.id].val; }
    /// Gradient of the last backward() loss w.r.t. this node.
    const Matrix& grad(Var v) const { return grads_[v.id]; }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var add3(Var a, Var b, Var c) { return add(add(a, b), c); }
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var sigmoid(Var a);
    Var tanh(Var a);
    /// mul*x + shift, elementwise.
    Var affine(Var a, double mul, double shift);
    /// Vertical stack of column vectors.
    Var concat(const std::vector<Var>& parts);
    /// Rows [row, row+len) of a column vector.
    Var slice(Var a, int row, int len);
    /// One matrix row, returned as a column vector.
    Var row(Var a, int r);
    Var element(Var a, int row) { return slice(a, row, 1); }
    /// Sum of all entries, as 1x1.
    Var sum(Var a);
    Var add_many(const std::vector<Var>& terms);
    /// Quantile (pinball) loss of a 1x1 prediction against constant y.
    Var pinball(double y, Var yhat, double tau);

    /// Accumulate gradients of a scalar loss into every node.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op { Input, Matmul, Add, Sub, Hadamard, Sigmoid, Tanh, Affine, Concat, Slice, Row, Sum, AddMany, Pinball };

    struct Node {
        Op op = Op::Input;
        Matrix val;
        int a = -1, b = -1;
        double aux0 = 0.0, aux1 = 0.0;
        std::vector<int> srcs;  // Concat / AddMany
    };

    static Node make(Op op, Matrix val, int a = -1, int b = -1) {
        Node n;
        n.op = op;
        n.val = std::move(val);
        n.a = a;
        n.b = b;
        return n;
    }
    Var push(Node n);
    Matrix& g(int id) { return grads_[id]; }

    std::vector<Node> nodes_;
    std::vector<Matrix> grads_;
};

}  // namespace tfr::ad
