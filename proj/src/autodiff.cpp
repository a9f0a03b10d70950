#include "tfr/autodiff.hpp"

#include <cmath>

namespace tfr::ad {

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Matrix m) {
    Node n = make(Op::Input, std::move(m));
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    Node n = make(Op::Matmul, num::matmul(value(a), value(b)), a.id, b.id);
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    Node n = make(Op::Add, num::add(value(a), value(b)), a.id, b.id);
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    Node n = make(Op::Sub, num::sub(value(a), value(b)), a.id, b.id);
    return push(std::move(n));
}

Var Tape::hadamard(Var a, Var b) {
    Node n = make(Op::Hadamard, num::hadamard(value(a), value(b)), a.id, b.id);
    return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
    Node n = make(Op::Sigmoid, num::sigmoid(value(a)), a.id);
    return push(std::move(n));
}

Var Tape::tanh(Var a) {
    Node n = make(Op::Tanh, num::tanh(value(a)), a.id);
    return push(std::move(n));
}

Var Tape::affine(Var a, double mul, double shift) {
    Matrix out = value(a);
    for (double& x : out.data) x = mul * x + shift;
    Node n = make(Op::Affine, std::move(out), a.id);
    n.aux0 = mul;
    return push(std::move(n));
}

Var Tape::concat(const std::vector<Var>& parts) {
    int rows = 0;
    for (Var p : parts) {
        num::require_shape(value(p).cols == 1, "concat expects column vectors");
        rows += value(p).rows;
    }
    Matrix out(rows, 1);
    int at = 0;
    Node n = make(Op::Concat, Matrix());
    for (Var p : parts) {
        const Matrix& v = value(p);
        for (int i = 0; i < v.rows; ++i) out(at + i, 0) = v(i, 0);
        at += v.rows;
        n.srcs.push_back(p.id);
    }
    n.val = std::move(out);
    return push(std::move(n));
}

Var Tape::slice(Var a, int row, int len) {
    const Matrix& v = value(a);
    num::require_shape(v.cols == 1 && row >= 0 && row + len <= v.rows, "slice");
    Matrix out(len, 1);
    for (int i = 0; i < len; ++i) out(i, 0) = v(row + i, 0);
    Node n = make(Op::Slice, std::move(out), a.id);
    n.aux0 = row;
    return push(std::move(n));
}

Var Tape::row(Var a, int r) {
    const Matrix& v = value(a);
    num::require_shape(r >= 0 && r < v.rows, "row");
    Matrix out(v.cols, 1);
    for (int j = 0; j < v.cols; ++j) out(j, 0) = v(r, j);
    Node n = make(Op::Row, std::move(out), a.id);
    n.aux0 = r;
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    double s = 0.0;
    for (double x : value(a).data) s += x;
    Node n = make(Op::Sum, Matrix(1, 1, s), a.id);
    return push(std::move(n));
}

Var Tape::add_many(const std::vector<Var>& terms) {
    Matrix out = value(terms.front());
    Node n = make(Op::AddMany, Matrix());
    n.srcs.push_back(terms.front().id);
    for (std::size_t i = 1; i < terms.size(); ++i) {
        out = num::add(out, value(terms[i]));
        n.srcs.push_back(terms[i].id);
    }
    n.val = std::move(out);
    return push(std::move(n));
}

Var Tape::pinball(double y, Var yhat, double tau) {
    num::require_shape(value(yhat).rows == 1 && value(yhat).cols == 1, "pinball expects scalar");
    double d = y - value(yhat)(0, 0);
    double loss = d >= 0.0 ? tau * d : (tau - 1.0) * d;
    Node n = make(Op::Pinball, Matrix(1, 1, loss), yhat.id);
    n.aux0 = y;
    n.aux1 = tau;
    return push(std::move(n));
}

void Tape::backward(Var loss) {
    num::require_shape(value(loss).size() == 1, "backward expects scalar loss");
    grads_.assign(nodes_.size(), Matrix());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        grads_[i] = Matrix(nodes_[i].val.rows, nodes_[i].val.cols);
    grads_[loss.id](0, 0) = 1.0;

    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        const Node& n = nodes_[id];
        const Matrix& go = grads_[id];
        switch (n.op) {
            case Op::Input:
                break;
            case Op::Matmul: {
                // dA += gO * B^T ; dB += A^T * gO
                const Matrix& A = nodes_[n.a].val;
                const Matrix& B = nodes_[n.b].val;
                Matrix dA = num::matmul(go, num::transpose(B));
                Matrix dB = num::matmul(num::transpose(A), go);
                grads_[n.a] = num::add(grads_[n.a], dA);
                grads_[n.b] = num::add(grads_[n.b], dB);
                break;
            }
            case Op::Add:
                grads_[n.a] = num::add(grads_[n.a], go);
                grads_[n.b] = num::add(grads_[n.b], go);
                break;
            case Op::Sub:
                grads_[n.a] = num::add(grads_[n.a], go);
                grads_[n.b] = num::sub(grads_[n.b], go);
                break;
            case Op::Hadamard:
                grads_[n.a] = num::add(grads_[n.a], num::hadamard(go, nodes_[n.b].val));
                grads_[n.b] = num::add(grads_[n.b], num::hadamard(go, nodes_[n.a].val));
                break;
            case Op::Sigmoid: {
                Matrix d = go;
                for (std::size_t i = 0; i < d.size(); ++i) {
                    double s = n.val.data[i];
                    d.data[i] *= s * (1.0 - s);
                }
                grads_[n.a] = num::add(grads_[n.a], d);
                break;
            }
            case Op::Tanh: {
                Matrix d = go;
                for (std::size_t i = 0; i < d.size(); ++i) {
                    double t = n.val.data[i];
                    d.data[i] *= 1.0 - t * t;
                }
                grads_[n.a] = num::add(grads_[n.a], d);
                break;
            }
            case Op::Affine:
                grads_[n.a] = num::add(grads_[n.a], num::scale(go, n.aux0));
                break;
            case Op::Concat: {
                int at = 0;
                for (int src : n.srcs) {
                    Matrix& gs = grads_[src];
                    for (int i = 0; i < gs.rows; ++i) gs(i, 0) += go(at + i, 0);
                    at += gs.rows;
                }
                break;
            }
            case Op::Slice: {
                int row = static_cast<int>(n.aux0);
                Matrix& gs = grads_[n.a];
                for (int i = 0; i < n.val.rows; ++i) gs(row + i, 0) += go(i, 0);
                break;
            }
            case Op::Row: {
                int r = static_cast<int>(n.aux0);
                Matrix& gs = grads_[n.a];
                for (int j = 0; j < n.val.rows; ++j) gs(r, j) += go(j, 0);
                break;
            }
            case Op::Sum: {
                Matrix& gs = grads_[n.a];
                double s = go(0, 0);
                for (double& x : gs.data) x += s;
                break;
            }
            case Op::AddMany:
                for (int src : n.srcs) grads_[src] = num::add(grads_[src], go);
                break;
            case Op::Pinball: {
                double d = n.aux0 - nodes_[n.a].val(0, 0);
                double tau = n.aux1;
                // subgradient: d/dyhat = -tau for d > 0, (1 - tau) for d <= 0
                double slope = d > 0.0 ? -tau : (1.0 - tau);
                grads_[n.a](0, 0) += go(0, 0) * slope;
                break;
            }
        }
    }
}

}  // namespace tfr::ad
