#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mpssm/graph.hpp"
#include "mpssm/linalg.hpp"

using namespace mpssm;

namespace {

Matrix random_symmetric(int n, Rng& rng) {
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) a.at(i, j) = a.at(j, i) = rng.normal();
    return a;
}

double reconstruction_error(const Matrix& a, const SymEig& eig) {
    const int n = a.rows;
    Matrix rec(n, n);
    for (int l = 0; l < n; ++l)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                rec.at(i, j) += eig.values[l] * eig.vectors.at(i, l) * eig.vectors.at(j, l);
    return frobenius_norm(rec - a);
}

}  // namespace

TEST_CASE("sym_eig on the K3 shift operator") {
    const Graph k3 = Graph::from_edges(3, {{0, 1}, {0, 2}, {1, 2}});
    const SymEig eig = sym_eig(build_gso(k3).to_dense());
    CHECK(eig.values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eig.values[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(eig.values[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sym_eig trivial spectra") {
    const SymEig id = sym_eig(Matrix::identity(2));
    CHECK(id.values[0] == doctest::Approx(1.0));
    CHECK(id.values[1] == doctest::Approx(1.0));

    Matrix d(2, 2);
    d.at(0, 0) = 2.0;
    d.at(1, 1) = -1.0;
    const SymEig de = sym_eig(d);
    CHECK(de.values[0] == doctest::Approx(2.0));
    CHECK(de.values[1] == doctest::Approx(-1.0));
}

TEST_CASE("sym_eig rejects non-symmetric input") {
    Matrix a(2, 2);
    a.at(0, 1) = 1.0;
    CHECK_THROWS_AS(sym_eig(a), std::invalid_argument);
}

TEST_CASE("sym_eig round-trip on random symmetric matrices") {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + rng.uniform_int(127);
        const Matrix a = random_symmetric(n, rng);
        const SymEig eig = sym_eig(a);
        const double afro = frobenius_norm(a);
        CHECK(reconstruction_error(a, eig) <= 1e-8 * afro);
        const Matrix ortho = matmul(transpose(eig.vectors), eig.vectors) - Matrix::identity(n);
        CHECK(frobenius_norm(ortho) <= 1e-8);
        for (size_t l = 1; l < eig.values.size(); ++l) CHECK(eig.values[l - 1] >= eig.values[l]);
    }
}

TEST_CASE("general_eig on the plane rotation has eigenvalues +-i") {
    Matrix rot(2, 2);
    rot.at(0, 1) = -1.0;
    rot.at(1, 0) = 1.0;
    const GeneralEig eig = general_eig(rot);
    CHECK(eig.values[0].real() == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(eig.values[0].imag() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(eig.values[1].imag() == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("general_eig on symmetric input gives real eigenvalues") {
    Rng rng(7);
    const Matrix a = random_symmetric(6, rng);
    const GeneralEig eig = general_eig(a);
    for (const auto& v : eig.values) CHECK(std::fabs(v.imag()) <= 1e-9);
}

TEST_CASE("general_eig on a descending diagonal gives V = I") {
    Matrix d(3, 3);
    d.at(0, 0) = 3.0;
    d.at(1, 1) = 1.0;
    d.at(2, 2) = -2.0;
    const GeneralEig eig = general_eig(d);
    CHECK(eig.values[0].real() == doctest::Approx(3.0));
    CHECK(eig.values[1].real() == doctest::Approx(1.0));
    CHECK(eig.values[2].real() == doctest::Approx(-2.0));
    CHECK(frobenius_norm(eig.v.re - Matrix::identity(3)) <= 1e-8);
    CHECK(frobenius_norm(eig.v.im) <= 1e-8);
}

TEST_CASE("general_eig reconstruction and conjugate pairing on random matrices") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + rng.uniform_int(11);
        const Matrix a = random_matrix(n, n, rng, 1.0 / std::sqrt(n));
        GeneralEig eig;
        try {
            eig = general_eig(a);
        } catch (const std::runtime_error&) {
            continue;  // near-defective draw; the error path is the contract
        }
        // Conjugate-pair symmetry: every eigenvalue's conjugate is present.
        for (const auto& v : eig.values) {
            bool found = false;
            for (const auto& w : eig.values)
                if (std::abs(w - std::conj(v)) <= 1e-8 * std::max(1.0, std::abs(v)))
                    found = true;
            CHECK(found);
        }
    }
}

TEST_CASE("spectral_norm basics") {
    CHECK(spectral_norm(Matrix::identity(4)) == doctest::Approx(1.0).epsilon(1e-9));
    Matrix d(2, 2);
    d.at(0, 0) = 3.0;
    d.at(1, 1) = -5.0;
    CHECK(spectral_norm(d) == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(spectral_norm(Matrix(3, 3)) == 0.0);
}

TEST_CASE("spectral_norm of a connected shift operator is 1") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const Graph g = gen_erdos_renyi(12 + trial, 0.4, rng.next(), true);
        CHECK(spectral_norm(build_gso(g).to_dense()) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("spectral_norm agrees with sym_eig on symmetric matrices") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix a = random_symmetric(3 + rng.uniform_int(20), rng);
        const SymEig eig = sym_eig(a);
        double rho = 0.0;
        for (double v : eig.values) rho = std::max(rho, std::fabs(v));
        CHECK(spectral_norm(a) == doctest::Approx(rho).epsilon(1e-8));
    }
}

TEST_CASE("mat_power basics and the K3 idempotent") {
    Rng rng(9);
    const Matrix a = random_matrix(5, 5, rng, 1.0);
    CHECK(max_abs_diff(mat_power(a, 0), Matrix::identity(5)) == 0.0);

    Matrix two(1, 1);
    two.at(0, 0) = 2.0;
    CHECK(mat_power(two, 3).at(0, 0) == doctest::Approx(8.0));

    const Graph k3 = Graph::from_edges(3, {{0, 1}, {0, 2}, {1, 2}});
    const Matrix gso = build_gso(k3).to_dense();
    CHECK(max_abs_diff(mat_power(gso, 2), gso) <= 1e-15);
}

TEST_CASE("mat_power is multiplicative in the exponent") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + rng.uniform_int(6);
        const Matrix a = random_matrix(n, n, rng, 0.6);
        const int s = rng.uniform_int(6), t = rng.uniform_int(6);
        const Matrix lhs = mat_power(a, s + t);
        const Matrix rhs = matmul(mat_power(a, s), mat_power(a, t));
        CHECK(max_abs_diff(lhs, rhs) <= 1e-10 * std::max(1.0, max_abs(lhs)));
    }
}

TEST_CASE("frobenius_norm basics") {
    Matrix d(2, 2);
    d.at(0, 0) = 3.0;
    d.at(1, 1) = 4.0;
    CHECK(frobenius_norm(d) == doctest::Approx(5.0));
    CHECK(frobenius_norm(Matrix(4, 7)) == 0.0);
    CHECK(frobenius_norm(Matrix::identity(9)) == doctest::Approx(3.0));
}
