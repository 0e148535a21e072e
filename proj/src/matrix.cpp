#include "mpssm/matrix.hpp"

#include <cmath>

namespace mpssm {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                    std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                                    " vs " + std::to_string(b.rows) + "x" +
                                    std::to_string(b.cols) + ")");
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols) +
                                    " vs " + std::to_string(b.rows) + ")");
    }
    Matrix c(a.rows, b.cols);
    // i-k-j order keeps the inner loop contiguous in b and c.
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * a.cols];
        double* crow = &c.data[static_cast<size_t>(i) * c.cols];
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix c = a;
    for (size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix c = a;
    for (size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

Matrix& operator+=(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add-assign");
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
    return a;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (double& v : c.data) v *= s;
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix c = a;
    for (size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
    return c;
}

Matrix col_sum(const Matrix& a) {
    Matrix s(1, a.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) s.at(0, j) += a.at(i, j);
    return s;
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::fabs(v));
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

bool all_finite(const Matrix& a) {
    for (double v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

CMatrix cmatmul(const CMatrix& a, const CMatrix& b) {
    CMatrix c;
    c.re = matmul(a.re, b.re) - matmul(a.im, b.im);
    c.im = matmul(a.re, b.im) + matmul(a.im, b.re);
    return c;
}

CMatrix cmatmul_real_left(const Matrix& a, const CMatrix& b) {
    CMatrix c;
    c.re = matmul(a, b.re);
    c.im = matmul(a, b.im);
    return c;
}

CMatrix conj(const CMatrix& a) {
    CMatrix c = a;
    for (double& v : c.im.data) v = -v;
    return c;
}

CMatrix chadamard(const CMatrix& a, const CMatrix& b) {
    CMatrix c;
    c.re = hadamard(a.re, b.re) - hadamard(a.im, b.im);
    c.im = hadamard(a.re, b.im) + hadamard(a.im, b.re);
    return c;
}

CMatrix operator+(const CMatrix& a, const CMatrix& b) {
    CMatrix c;
    c.re = a.re + b.re;
    c.im = a.im + b.im;
    return c;
}

bool all_finite(const CMatrix& a) { return all_finite(a.re) && all_finite(a.im); }

Matrix glorot_uniform(int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix m(fan_in, fan_out);
    for (double& v : m.data) v = rng.uniform(-limit, limit);
    return m;
}

Matrix random_matrix(int rows, int cols, Rng& rng, double scale) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

}  // namespace mpssm
