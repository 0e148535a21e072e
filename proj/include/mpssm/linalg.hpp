#pragma once

#include <complex>
#include <vector>

#include "mpssm/matrix.hpp"

namespace mpssm {

struct SymEig {
    std::vector<double> values;  // descending
    Matrix vectors;              // orthogonal, column l pairs with values[l]
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// Requires the input to be symmetric within 1e-12 relative; throws otherwise.
/// Guarantees ||P L P^T - A||_F <= 1e-8 ||A||_F and ||P^T P - I||_F <= 1e-8.
SymEig sym_eig(const Matrix& a);

struct GeneralEig {
    std::vector<std::complex<double>> values;  // sorted by (Re desc, Im desc)
    CMatrix v;
    CMatrix v_inv;
};

/// Eigendecomposition of a general real square matrix: A = V S V^{-1} over C.
/// Eigenvalues via complex Hessenberg reduction + shifted QR; eigenvectors by
/// inverse iteration. Throws when V is too ill conditioned (near-defective
/// input); callers needing the diagonalized path should fall back to the
/// sequential implementation in that case.
GeneralEig general_eig(const Matrix& a);

/// Largest singular value via power iteration on A^T A
/// (relative tolerance 1e-10, at most 1000 iterations).
double spectral_norm(const Matrix& a);

/// A^t by repeated squaring; t = 0 yields the identity.
Matrix mat_power(const Matrix& a, long t);

double frobenius_norm(const Matrix& a);

/// Inverse of a complex square matrix by Gauss-Jordan with partial pivoting.
CMatrix cinverse(const CMatrix& a);

double cfrobenius_norm(const CMatrix& a);

}  // namespace mpssm
