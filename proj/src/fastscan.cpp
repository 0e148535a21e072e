#include "mpssm/fastscan.hpp"

#include <cmath>
#include <complex>
#include <fstream>

#include "json.hpp"

namespace mpssm {

using nlohmann::json;
using cd = std::complex<double>;

DiagGso precompute_gso_eig(const Gso& gso) {
    const SymEig eig = sym_eig(gso.to_dense());
    DiagGso d;
    d.n = gso.n;
    d.eigenvalues = eig.values;
    d.p = eig.vectors;
    d.fingerprint = gso.graph_fingerprint;
    for (double v : d.eigenvalues) {
        if (v < -1.0 - 1e-9 || v > 1.0 + 1e-9)
            throw std::runtime_error("precompute_gso_eig: eigenvalue outside [-1, 1]");
    }
    return d;
}

void save_diag_gso(const DiagGso& d, const std::string& path) {
    json doc;
    doc["fingerprint"] = d.fingerprint;
    doc["n"] = d.n;
    doc["eigenvalues"] = d.eigenvalues;
    doc["p"] = d.p.data;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_diag_gso: cannot open " + path);
    f << doc.dump() << "\n";
}

DiagGso load_diag_gso(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_diag_gso: cannot open " + path);
    json doc;
    f >> doc;
    DiagGso d;
    d.fingerprint = doc.at("fingerprint").get<uint64_t>();
    d.n = doc.at("n").get<int>();
    d.eigenvalues = doc.at("eigenvalues").get<std::vector<double>>();
    d.p = Matrix(d.n, d.n);
    const auto& pdata = doc.at("p");
    if (pdata.size() != d.p.data.size())
        throw std::runtime_error("load_diag_gso: eigenvector matrix size mismatch");
    for (size_t i = 0; i < d.p.data.size(); ++i) d.p.data[i] = pdata[i].get<double>();
    return d;
}

FastBlockParams to_exact_fast(const BlockParams& params) {
    const GeneralEig eig = general_eig(params.w);
    const int c = params.w.rows;
    FastBlockParams fp;
    fp.mode = FastBlockParams::Mode::exact;
    fp.k = params.k;
    fp.sigma = CMatrix(1, c);
    for (int j = 0; j < c; ++j) {
        fp.sigma.re.at(0, j) = eig.values[j].real();
        fp.sigma.im.at(0, j) = eig.values[j].imag();
    }
    fp.v = eig.v;
    fp.v_inv = eig.v_inv;
    fp.b_hat = cmatmul_real_left(params.b, eig.v);
    // Fold V^{-1} into the first MLP layer.
    fp.w1_hat.re = matmul(eig.v_inv.re, params.mlp.w1);
    fp.w1_hat.im = matmul(eig.v_inv.im, params.mlp.w1);
    fp.w2 = params.mlp.w2;
    fp.b1 = params.mlp.b1;
    fp.b2 = params.mlp.b2;
    fp.act = params.mlp.act;
    return fp;
}

FastBlockParams init_merged_params(int c_in, int c, int h, int c_out, int k, double r_min,
                                   double r_max, uint64_t seed) {
    if (!(r_min > 0.0) || !(r_min <= r_max) || !(r_max <= 1.0))
        throw std::invalid_argument("init_merged_params: need 0 < r_min <= r_max <= 1");
    Rng rng(seed);
    FastBlockParams fp;
    fp.mode = FastBlockParams::Mode::merged;
    fp.k = k;
    fp.sigma = CMatrix(1, c);
    for (int j = 0; j < c; ++j) {
        const double r = rng.uniform(r_min, r_max);
        const double theta = rng.uniform(0.0, 6.283185307179586476925286766559);
        fp.sigma.re.at(0, j) = r * std::cos(theta);
        fp.sigma.im.at(0, j) = r * std::sin(theta);
    }
    const double inv_sqrt2 = 0.7071067811865475244;
    fp.b_hat.re = scale(glorot_uniform(c_in, c, rng), inv_sqrt2);
    fp.b_hat.im = scale(glorot_uniform(c_in, c, rng), inv_sqrt2);
    fp.w1_hat.re = scale(glorot_uniform(c, h, rng), inv_sqrt2);
    fp.w1_hat.im = scale(glorot_uniform(c, h, rng), inv_sqrt2);
    fp.w2 = glorot_uniform(h, c_out, rng);
    fp.b1 = Matrix(1, h);
    fp.b2 = Matrix(1, c_out);
    return fp;
}

namespace {

/// phi(Re(P Z W1) + b1) W2 + b2
Matrix decode(const DiagGso& diag, const CMatrix& z, const FastBlockParams& p) {
    CMatrix pz = cmatmul_real_left(diag.p, z);
    Matrix h = matmul(pz.re, p.w1_hat.re) - matmul(pz.im, p.w1_hat.im);
    for (int i = 0; i < h.rows; ++i)
        for (int j = 0; j < h.cols; ++j) h.at(i, j) = activate(h.at(i, j) + p.b1.at(0, j), p.act);
    Matrix y = matmul(h, p.w2);
    for (int i = 0; i < y.rows; ++i)
        for (int j = 0; j < y.cols; ++j) y.at(i, j) += p.b2.at(0, j);
    return y;
}

void check_dims(const DiagGso& diag, const FastBlockParams& params, const NodeSequence& input) {
    if (input.steps.empty()) throw std::invalid_argument("fast_forward: empty input sequence");
    if (input.k() != params.k)
        throw std::invalid_argument("fast_forward: sequence length != k + 1");
    if (input.n() != diag.n) throw std::invalid_argument("fast_forward: node count mismatch");
    if (input.channels() != params.b_hat.rows())
        throw std::invalid_argument("fast_forward: input channels do not match B-hat");
}

}  // namespace

FastResult fast_forward(const DiagGso& diag, const FastBlockParams& params,
                        const NodeSequence& input, size_t memory_budget_bytes) {
    check_dims(diag, params, input);
    const int k = params.k;
    const int n = diag.n;
    const int c = params.sigma.cols();

    const size_t working_bytes =
        static_cast<size_t>(k + 1) * static_cast<size_t>(n) * static_cast<size_t>(c) * 16;
    if (working_bytes > memory_budget_bytes) {
        throw std::runtime_error(
            "fast_forward: (k+1) x n x c complex working set exceeds the memory budget (" +
            std::to_string(working_bytes) + " > " + std::to_string(memory_budget_bytes) +
            " bytes); use the sequential block instead");
    }

    const Matrix pt = transpose(diag.p);
    const bool constant = input.mode == SeqMode::constant;

    // Pre-projected inputs U-hat = P^T U, then G = U-hat B-hat.
    CMatrix g_const;
    if (constant) g_const = cmatmul_real_left(matmul(pt, input.steps[0]), params.b_hat);

    std::vector<double> lam_pow(n, 1.0);
    std::vector<cd> sig(c), sig_pow(c, cd(1.0, 0.0));
    for (int j = 0; j < c; ++j) sig[j] = cd(params.sigma.re.at(0, j), params.sigma.im.at(0, j));

    const bool exact = params.mode == FastBlockParams::Mode::exact;
    FastResult result;
    result.outputs.reserve(k + 1);
    if (exact) result.states.reserve(k + 1);

    CMatrix z(n, c);
    for (int i = 0; i <= k; ++i) {
        // Summand i uses the time-flipped input U_{k+1-i}.
        CMatrix g =
            constant ? g_const
                     : cmatmul_real_left(matmul(pt, input.steps[k - i]), params.b_hat);
        for (int a = 0; a < n; ++a) {
            const double lp = lam_pow[a];
            for (int b = 0; b < c; ++b) {
                const cd scaled = lp * cd(g.re.at(a, b), g.im.at(a, b)) * sig_pow[b];
                z.re.at(a, b) += scaled.real();
                z.im.at(a, b) += scaled.imag();
            }
        }
        result.outputs.push_back(decode(diag, z, params));
        if (exact) {
            CMatrix x = cmatmul(cmatmul_real_left(diag.p, z), params.v_inv);
            result.states.push_back(std::move(x.re));
        }
        for (int a = 0; a < n; ++a) lam_pow[a] *= diag.eigenvalues[a];
        for (int b = 0; b < c; ++b) sig_pow[b] *= sig[b];
    }
    return result;
}

Matrix fast_forward_final(const DiagGso& diag, const FastBlockParams& params,
                          const NodeSequence& input) {
    check_dims(diag, params, input);
    if (input.mode != SeqMode::constant)
        throw std::invalid_argument(
            "fast_forward_final: constant-mode inputs only; use fast_forward for sequences");
    const int k = params.k;
    const int n = diag.n;
    const int c = params.sigma.cols();

    const Matrix pt = transpose(diag.p);
    CMatrix g = cmatmul_real_left(matmul(pt, input.steps[0]), params.b_hat);

    // Z[a][b] = G[a][b] * sum_{i=0}^{k} (lambda_a sigma_b)^i, with the
    // geometric sum in closed form so the cost does not grow with k.
    CMatrix z(n, c);
    for (int a = 0; a < n; ++a) {
        const double lam = diag.eigenvalues[a];
        for (int b = 0; b < c; ++b) {
            const cd x = lam * cd(params.sigma.re.at(0, b), params.sigma.im.at(0, b));
            const cd one_minus = 1.0 - x;
            cd ksum;
            if (std::abs(one_minus) < 1e-9) {
                ksum = static_cast<double>(k + 1) * (1.0 - one_minus * (0.5 * k));
            } else {
                ksum = (1.0 - std::pow(x, k + 1)) / one_minus;
            }
            const cd val = cd(g.re.at(a, b), g.im.at(a, b)) * ksum;
            z.re.at(a, b) = val.real();
            z.im.at(a, b) = val.imag();
        }
    }
    return decode(diag, z, params);
}

}  // namespace mpssm
