#include "mpssm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mpssm {

namespace {

using cd = std::complex<double>;

void require_square(const Matrix& a, const char* op) {
    if (a.rows != a.cols) {
        throw std::invalid_argument(std::string(op) + ": matrix must be square");
    }
}

std::vector<cd> to_complex(const Matrix& a) {
    std::vector<cd> m(a.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) m[i] = a.data[i];
    return m;
}

CMatrix from_columns(int n, const std::vector<std::vector<cd>>& cols) {
    CMatrix v(n, static_cast<int>(cols.size()));
    for (int j = 0; j < static_cast<int>(cols.size()); ++j) {
        for (int i = 0; i < n; ++i) {
            v.re.at(i, j) = cols[j][i].real();
            v.im.at(i, j) = cols[j][i].imag();
        }
    }
    return v;
}

/// Reduce a complex matrix (flat n x n) to upper Hessenberg form in place
/// via Householder reflectors. Similarity transforms only; eigenvalues kept.
void hessenberg_inplace(std::vector<cd>& h, int n) {
    auto at = [&](int i, int j) -> cd& { return h[static_cast<size_t>(i) * n + j]; };
    for (int k = 0; k < n - 2; ++k) {
        double colnorm = 0.0;
        for (int i = k + 1; i < n; ++i) colnorm += std::norm(at(i, k));
        colnorm = std::sqrt(colnorm);
        if (colnorm <= 0.0) continue;
        cd alpha = at(k + 1, k);
        const double aabs = std::abs(alpha);
        cd phase = (aabs > 0.0) ? alpha / aabs : cd(1.0, 0.0);
        cd beta = -phase * colnorm;
        std::vector<cd> v(n, cd(0.0, 0.0));
        v[k + 1] = alpha - beta;
        for (int i = k + 2; i < n; ++i) v[i] = at(i, k);
        double vnorm2 = 0.0;
        for (int i = k + 1; i < n; ++i) vnorm2 += std::norm(v[i]);
        if (vnorm2 <= 0.0) continue;
        // H := (I - 2 v v^*/|v|^2) H (I - 2 v v^*/|v|^2)
        for (int j = 0; j < n; ++j) {
            cd s(0.0, 0.0);
            for (int i = k + 1; i < n; ++i) s += std::conj(v[i]) * at(i, j);
            s *= 2.0 / vnorm2;
            for (int i = k + 1; i < n; ++i) at(i, j) -= v[i] * s;
        }
        for (int i = 0; i < n; ++i) {
            cd s(0.0, 0.0);
            for (int j = k + 1; j < n; ++j) s += at(i, j) * v[j];
            s *= 2.0 / vnorm2;
            for (int j = k + 1; j < n; ++j) at(i, j) -= s * std::conj(v[j]);
        }
    }
}

/// Eigenvalues of a complex upper Hessenberg matrix by the shifted QR
/// iteration with Givens rotations and Wilkinson shifts.
std::vector<cd> hessenberg_qr_eigenvalues(std::vector<cd> h, int n) {
    auto at = [&](int i, int j) -> cd& { return h[static_cast<size_t>(i) * n + j]; };
    std::vector<cd> eig(n);
    int hi = n - 1;
    int iter_budget = 60 * std::max(n, 1);
    while (hi >= 0) {
        if (hi == 0) {
            eig[0] = at(0, 0);
            break;
        }
        // Deflate converged subdiagonals.
        int k = hi;
        while (k > 0) {
            const double sub = std::abs(at(k, k - 1));
            const double diag = std::abs(at(k - 1, k - 1)) + std::abs(at(k, k));
            if (sub <= 1e-15 * (diag + 1e-300)) {
                at(k, k - 1) = 0.0;
                break;
            }
            --k;
        }
        if (k == hi) {
            eig[hi] = at(hi, hi);
            --hi;
            continue;
        }
        int lo = (k > 0 && at(k, k - 1) == cd(0.0, 0.0)) ? k : 0;
        if (--iter_budget < 0) {
            throw std::runtime_error("general_eig: QR iteration failed to converge");
        }
        // Wilkinson shift from the trailing 2x2 of the active block.
        const cd a = at(hi - 1, hi - 1), b = at(hi - 1, hi);
        const cd c = at(hi, hi - 1), d = at(hi, hi);
        const cd tr = a + d;
        const cd det = a * d - b * c;
        cd disc = std::sqrt(tr * tr - 4.0 * det);
        cd mu1 = (tr + disc) * 0.5, mu2 = (tr - disc) * 0.5;
        cd mu = (std::abs(mu1 - d) < std::abs(mu2 - d)) ? mu1 : mu2;
        // One implicit QR sweep on [lo, hi] via Givens rotations.
        std::vector<std::pair<cd, cd>> rot(hi);  // (c, s) per row pair
        for (int i = lo; i <= hi; ++i) at(i, i) -= mu;
        for (int i = lo; i < hi; ++i) {
            cd x = at(i, i), y = at(i + 1, i);
            double r = std::sqrt(std::norm(x) + std::norm(y));
            cd cs, sn;
            if (r <= 0.0) {
                cs = 1.0;
                sn = 0.0;
            } else {
                cs = x / r;
                sn = y / r;
            }
            rot[i] = {cs, sn};
            for (int j = i; j <= hi; ++j) {
                const cd t1 = at(i, j), t2 = at(i + 1, j);
                at(i, j) = std::conj(cs) * t1 + std::conj(sn) * t2;
                at(i + 1, j) = -sn * t1 + cs * t2;
            }
        }
        for (int i = lo; i < hi; ++i) {
            const cd cs = rot[i].first, sn = rot[i].second;
            const int jl = lo;
            for (int j = jl; j <= std::min(i + 2, hi); ++j) {
                const cd t1 = at(j, i), t2 = at(j, i + 1);
                at(j, i) = t1 * cs + t2 * sn;
                at(j, i + 1) = -t1 * std::conj(sn) + t2 * std::conj(cs);
            }
        }
        for (int i = lo; i <= hi; ++i) at(i, i) += mu;
    }
    return eig;
}

/// LU factorization with partial pivoting of a complex matrix (flat n x n).
/// Returns false when a pivot collapses entirely.
bool lu_factor(std::vector<cd>& m, int n, std::vector<int>& piv) {
    piv.resize(n);
    auto at = [&](int i, int j) -> cd& { return m[static_cast<size_t>(i) * n + j]; };
    for (int k = 0; k < n; ++k) {
        int p = k;
        double best = std::abs(at(k, k));
        for (int i = k + 1; i < n; ++i) {
            const double v = std::abs(at(i, k));
            if (v > best) {
                best = v;
                p = i;
            }
        }
        piv[k] = p;
        if (p != k)
            for (int j = 0; j < n; ++j) std::swap(at(k, j), at(p, j));
        if (best == 0.0) return false;
        const cd inv = 1.0 / at(k, k);
        for (int i = k + 1; i < n; ++i) {
            const cd f = at(i, k) * inv;
            at(i, k) = f;
            for (int j = k + 1; j < n; ++j) at(i, j) -= f * at(k, j);
        }
    }
    return true;
}

void lu_solve(const std::vector<cd>& m, int n, const std::vector<int>& piv, std::vector<cd>& b) {
    auto at = [&](int i, int j) -> cd { return m[static_cast<size_t>(i) * n + j]; };
    for (int k = 0; k < n; ++k) {
        if (piv[k] != k) std::swap(b[k], b[piv[k]]);
        for (int i = k + 1; i < n; ++i) b[i] -= at(i, k) * b[k];
    }
    for (int i = n - 1; i >= 0; --i) {
        for (int j = i + 1; j < n; ++j) b[i] -= at(i, j) * b[j];
        b[i] /= at(i, i);
    }
}

}  // namespace

SymEig sym_eig(const Matrix& a) {
    require_square(a, "sym_eig");
    const int n = a.rows;
    const double scale = max_abs(a);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::fabs(a.at(i, j) - a.at(j, i)) > 1e-12 * std::max(1.0, scale))
                throw std::invalid_argument("sym_eig: input is not symmetric");

    Matrix b = a;
    Matrix v = Matrix::identity(n);
    const double fro = frobenius_norm(a);
    const double target = 1e-12 * std::max(fro, 1e-300);

    auto off_norm = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += 2.0 * b.at(i, j) * b.at(i, j);
        return std::sqrt(s);
    };

    bool converged = (n <= 1) || off_norm() <= target;
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = b.at(p, q);
                if (std::fabs(apq) <= 1e-300) continue;
                const double app = b.at(p, p), aqq = b.at(q, q);
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = ((theta >= 0.0) ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                // Rotate rows/columns p and q of B.
                for (int i = 0; i < n; ++i) {
                    const double bip = b.at(i, p), biq = b.at(i, q);
                    b.at(i, p) = c * bip - s * biq;
                    b.at(i, q) = s * bip + c * biq;
                }
                for (int i = 0; i < n; ++i) {
                    const double bpi = b.at(p, i), bqi = b.at(q, i);
                    b.at(p, i) = c * bpi - s * bqi;
                    b.at(q, i) = s * bpi + c * bqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = v.at(i, p), viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
        converged = off_norm() <= target;
    }
    if (!converged) throw std::runtime_error("sym_eig: Jacobi sweeps did not converge");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return b.at(x, x) > b.at(y, y); });

    SymEig out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (int j = 0; j < n; ++j) {
        out.values[j] = b.at(order[j], order[j]);
        for (int i = 0; i < n; ++i) out.vectors.at(i, j) = v.at(i, order[j]);
    }
    return out;
}

GeneralEig general_eig(const Matrix& a) {
    require_square(a, "general_eig");
    const int n = a.rows;
    const double scale = std::max(max_abs(a), 1e-300);

    std::vector<cd> h = to_complex(a);
    hessenberg_inplace(h, n);
    std::vector<cd> eig = hessenberg_qr_eigenvalues(std::move(h), n);

    // Real input: polish eigenvalues into exact conjugate pairs / reals.
    std::vector<bool> used(n, false);
    for (int i = 0; i < n; ++i) {
        if (used[i]) continue;
        if (std::fabs(eig[i].imag()) <= 1e-9 * scale) {
            eig[i] = cd(eig[i].real(), 0.0);
            used[i] = true;
            continue;
        }
        int best = -1;
        double best_d = 1e-6 * scale;
        for (int j = i + 1; j < n; ++j) {
            if (used[j]) continue;
            const double d = std::abs(eig[j] - std::conj(eig[i]));
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        if (best >= 0) {
            const cd m = 0.5 * (eig[i] + std::conj(eig[best]));
            eig[i] = m;
            eig[best] = std::conj(m);
            used[i] = used[best] = true;
        } else {
            used[i] = true;
        }
    }

    std::sort(eig.begin(), eig.end(), [](const cd& x, const cd& y) {
        if (x.real() != y.real()) return x.real() > y.real();
        return x.imag() > y.imag();
    });

    // Eigenvectors by inverse iteration on the original matrix.
    const std::vector<cd> base = to_complex(a);
    std::vector<std::vector<cd>> cols(n);
    for (int j = 0; j < n; ++j) {
        cd shift = eig[j];
        std::vector<cd> m;
        std::vector<int> piv;
        bool ok = false;
        double eps = 1e-13 * scale;
        for (int attempt = 0; attempt < 4 && !ok; ++attempt) {
            m = base;
            for (int i = 0; i < n; ++i) m[static_cast<size_t>(i) * n + i] -= shift;
            ok = lu_factor(m, n, piv);
            if (!ok) shift += cd(eps, eps);
            eps *= 16.0;
        }
        if (!ok) throw std::runtime_error("general_eig: inverse iteration shift failed");

        std::vector<cd> x(n);
        for (int i = 0; i < n; ++i)
            x[i] = (i == j % n) ? cd(1.0, 0.0) : cd(1e-3, 0.0);
        for (int it = 0; it < 4; ++it) {
            lu_solve(m, n, piv, x);
            double nm = 0.0;
            for (const cd& v : x) nm += std::norm(v);
            nm = std::sqrt(nm);
            if (nm == 0.0 || !std::isfinite(nm))
                throw std::runtime_error("general_eig: inverse iteration collapsed");
            for (cd& v : x) v /= nm;
        }
        // Fix the phase: make the largest entry real positive.
        int arg = 0;
        double mx = 0.0;
        for (int i = 0; i < n; ++i)
            if (std::abs(x[i]) > mx) {
                mx = std::abs(x[i]);
                arg = i;
            }
        const cd ph = std::abs(x[arg]) / x[arg];
        for (cd& v : x) v *= ph;
        cols[j] = std::move(x);
    }

    GeneralEig out;
    out.values = std::move(eig);
    out.v = from_columns(n, cols);
    out.v_inv = cinverse(out.v);

    const double cond = cfrobenius_norm(out.v) * cfrobenius_norm(out.v_inv);
    if (!(cond < 1e8)) {
        throw std::runtime_error(
            "general_eig: eigenvector matrix is too ill conditioned (near-defective input); "
            "use the sequential path");
    }

    // Reconstruction check: ||V S V^{-1} - A|| <= 1e-6 ||A||.
    CMatrix vs = out.v;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const cd s = out.values[j];
            const cd val = cd(vs.re.at(i, j), vs.im.at(i, j)) * s;
            vs.re.at(i, j) = val.real();
            vs.im.at(i, j) = val.imag();
        }
    CMatrix rec = cmatmul(vs, out.v_inv);
    double err = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double dr = rec.re.at(i, j) - a.at(i, j);
            const double di = rec.im.at(i, j);
            err += dr * dr + di * di;
        }
    err = std::sqrt(err);
    const double afro = std::max(frobenius_norm(a), 1e-300);
    if (!(err <= 1e-6 * afro)) {
        throw std::runtime_error("general_eig: reconstruction residual too large");
    }
    return out;
}

double spectral_norm(const Matrix& a) {
    if (a.rows == 0 || a.cols == 0) return 0.0;
    if (!all_finite(a)) throw std::invalid_argument("spectral_norm: non-finite input");
    const int n = a.cols;
    // Deterministic start with a mild ramp so it is not orthogonal to the
    // leading singular vector by accident.
    std::vector<double> v(n);
    double nm = 0.0;
    for (int i = 0; i < n; ++i) {
        v[i] = 1.0 + 1e-3 * i;
        nm += v[i] * v[i];
    }
    nm = std::sqrt(nm);
    for (double& x : v) x /= nm;

    const Matrix at = transpose(a);
    double sigma = 0.0;
    std::vector<double> av(a.rows), w(n);
    for (int it = 0; it < 1000; ++it) {
        for (int i = 0; i < a.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += a.at(i, j) * v[j];
            av[i] = s;
        }
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < a.rows; ++i) s += at.at(j, i) * av[i];
            w[j] = s;
        }
        double wn = 0.0;
        for (double x : w) wn += x * x;
        wn = std::sqrt(wn);
        if (wn == 0.0) return 0.0;
        const double next = std::sqrt(wn);  // ||A v|| grows as sigma^2 through A^T A
        for (int j = 0; j < n; ++j) v[j] = w[j] / wn;
        if (it > 0 && std::fabs(next - sigma) <= 1e-10 * std::max(next, 1e-300)) {
            sigma = next;
            break;
        }
        sigma = next;
    }
    return sigma;
}

Matrix mat_power(const Matrix& a, long t) {
    require_square(a, "mat_power");
    if (t < 0) throw std::invalid_argument("mat_power: negative exponent");
    Matrix result = Matrix::identity(a.rows);
    Matrix base = a;
    while (t > 0) {
        if (t & 1) result = matmul(result, base);
        t >>= 1;
        if (t > 0) base = matmul(base, base);
    }
    return result;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

CMatrix cinverse(const CMatrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("cinverse: matrix must be square");
    const int n = a.rows();
    std::vector<cd> m(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            m[static_cast<size_t>(i) * n + j] = cd(a.re.at(i, j), a.im.at(i, j));
    std::vector<int> piv;
    if (!lu_factor(m, n, piv)) throw std::runtime_error("cinverse: singular matrix");
    CMatrix inv(n, n);
    std::vector<cd> e(n);
    for (int j = 0; j < n; ++j) {
        std::fill(e.begin(), e.end(), cd(0.0, 0.0));
        e[j] = 1.0;
        lu_solve(m, n, piv, e);
        for (int i = 0; i < n; ++i) {
            inv.re.at(i, j) = e[i].real();
            inv.im.at(i, j) = e[i].imag();
        }
    }
    return inv;
}

double cfrobenius_norm(const CMatrix& a) {
    double s = 0.0;
    for (double v : a.re.data) s += v * v;
    for (double v : a.im.data) s += v * v;
    return std::sqrt(s);
}

}  // namespace mpssm
