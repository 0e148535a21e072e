#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mpssm {

/// Dense real matrix, row-major.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative dimension");
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix& operator+=(Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);

/// Sum of each column, returned as a 1 x cols row vector.
Matrix col_sum(const Matrix& a);

double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);

/// Complex dense matrix stored as separate real and imaginary parts.
struct CMatrix {
    Matrix re;
    Matrix im;

    CMatrix() = default;
    CMatrix(int r, int c) : re(r, c), im(r, c) {}
    explicit CMatrix(Matrix real) : re(std::move(real)) { im = Matrix(re.rows, re.cols); }

    int rows() const { return re.rows; }
    int cols() const { return re.cols; }
};

CMatrix cmatmul(const CMatrix& a, const CMatrix& b);
/// real(a) * b, avoiding the zero imaginary multiplies.
CMatrix cmatmul_real_left(const Matrix& a, const CMatrix& b);
CMatrix conj(const CMatrix& a);
CMatrix chadamard(const CMatrix& a, const CMatrix& b);
CMatrix operator+(const CMatrix& a, const CMatrix& b);
bool all_finite(const CMatrix& a);

/// Deterministic RNG. Draws are generated from raw mt19937_64 words so that
/// streams are reproducible across standard library implementations.
struct Rng {
    std::mt19937_64 gen;

    explicit Rng(uint64_t seed) : gen(seed) {}

    uint64_t next() { return gen(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n).
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        const uint64_t bound = ~uint64_t{0} - (~uint64_t{0} % static_cast<uint64_t>(n));
        uint64_t x;
        do {
            x = next();
        } while (x >= bound);
        return static_cast<int>(x % static_cast<uint64_t>(n));
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

  private:
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Glorot-uniform initialized fan_in x fan_out matrix.
Matrix glorot_uniform(int fan_in, int fan_out, Rng& rng);

Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0);

}  // namespace mpssm
