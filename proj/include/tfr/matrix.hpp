#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tfr::num {

/// Dense row-major matrix of doubles. Column vectors are n x 1.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    static Matrix column(const std::vector<double>& v) {
        Matrix m(static_cast<int>(v.size()), 1);
        m.data = v;
        return m;
    }

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline void require_shape(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("shape mismatch: ") + what);
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    require_shape(a.cols == b.rows, "matmul");
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    require_shape(a.same_shape(b), "add");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    require_shape(a.same_shape(b), "sub");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_shape(a.same_shape(b), "hadamard");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (double& x : out.data) x *= s;
    return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Matrix sigmoid(const Matrix& a) {
    Matrix out = a;
    for (double& x : out.data) x = sigmoid(x);
    return out;
}

inline Matrix tanh(const Matrix& a) {
    Matrix out = a;
    for (double& x : out.data) x = std::tanh(x);
    return out;
}

inline bool all_finite(const Matrix& a) {
    for (double x : a.data)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace tfr::num
