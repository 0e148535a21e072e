#include "mpssm/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "mpssm/linalg.hpp"

namespace mpssm {

Matrix exact_jacobian(const Gso& gso, const Matrix& w, int i, int j, int delta) {
    if (delta < 0) throw std::invalid_argument("exact_jacobian: delta must be >= 0");
    if (i < 0 || j < 0 || i >= gso.n || j >= gso.n)
        throw std::invalid_argument("exact_jacobian: node index out of range");
    const Matrix apow = mat_power(gso.to_dense(), delta);
    const double scalar = apow.at(i, j);
    return scale(mat_power(transpose(w), delta), scalar);
}

Matrix finite_diff_jacobian(const Gso& gso, const BlockParams& params, int i, int j, int s,
                            int t, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_jacobian: h must be positive");
    if (t < s) throw std::invalid_argument("finite_diff_jacobian: need t >= s");
    const int c = params.w.rows;
    const int cp = params.b.rows;

    // Fixed base state and inputs; the recurrence is linear so their values
    // cancel in the central difference.
    Rng rng(12345);
    Matrix x_base = random_matrix(gso.n, c, rng, 0.5);
    std::vector<Matrix> u(t - s);
    for (auto& m : u) m = random_matrix(gso.n, cp, rng, 0.5);

    auto roll_forward = [&](const Matrix& xs) {
        Matrix x = xs;
        for (int step = 0; step < t - s; ++step) {
            Matrix next = matmul(gso.apply(x), params.w);
            next += matmul(u[step], params.b);
            x = std::move(next);
        }
        return x;
    };

    Matrix jac(c, c);  // jac(p, q) = d X_t[i][p] / d X_s[j][q]
    for (int q = 0; q < c; ++q) {
        Matrix xp = x_base;
        xp.at(j, q) += h;
        const Matrix fp = roll_forward(xp);
        Matrix xm = x_base;
        xm.at(j, q) -= h;
        const Matrix fm = roll_forward(xm);
        for (int p = 0; p < c; ++p) jac.at(p, q) = (fp.at(i, p) - fm.at(i, p)) / (2.0 * h);
    }
    return jac;
}

double local_sensitivity(const Gso& gso, const Matrix& w, int i, int j, int delta) {
    if (delta < 0) throw std::invalid_argument("local_sensitivity: delta must be >= 0");
    const Matrix apow = mat_power(gso.to_dense(), delta);
    return std::fabs(apow.at(i, j)) * spectral_norm(mat_power(w, delta));
}

std::string SensitivityReport::to_text() const {
    std::ostringstream os;
    os << "delta          " << delta << "\n";
    os << "s_global       " << s_global << "\n";
    os << "s_min          " << s_min << "\n";
    os << "bound_global   " << bound_global << "  (" << (pass_global ? "pass" : "FAIL") << ")\n";
    if (bound_min) {
        os << "bound_min      " << *bound_min << "  ("
           << (pass_min.value_or(false) ? "pass" : "FAIL") << ")\n";
    } else {
        os << "bound_min      (omitted: graph not connected)\n";
    }
    if (sampled_pairs > 0) os << "sampled_pairs  " << sampled_pairs << "\n";
    return os.str();
}

std::string SensitivityReport::to_json() const {
    nlohmann::json doc;
    doc["delta"] = delta;
    doc["s_global"] = s_global;
    doc["s_min"] = s_min;
    doc["bound_global"] = bound_global;
    doc["pass_global"] = pass_global;
    doc["connected"] = connected;
    if (bound_min) {
        doc["bound_min"] = *bound_min;
        doc["pass_min"] = pass_min.value_or(false);
    }
    if (sampled_pairs > 0) doc["sampled_pairs"] = sampled_pairs;
    return doc.dump();
}

std::string SensitivityReport::pair_matrix_csv() const {
    if (!pair_matrix) return {};
    std::ostringstream os;
    const Matrix& m = *pair_matrix;
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) {
            if (j) os << ",";
            os << m.at(i, j);
        }
        os << "\n";
    }
    return os.str();
}

SensitivityReport sensitivity_profile(const Graph& graph, const Matrix& w, int delta,
                                      bool allow_sampling, int sample_pairs, uint64_t seed) {
    if (delta < 0) throw std::invalid_argument("sensitivity_profile: delta must be >= 0");
    const int n = graph.n;
    if (n > 128 && !allow_sampling)
        throw std::invalid_argument(
            "sensitivity_profile: n > 128 requires the sampling flag");

    const Gso gso = build_gso(graph);
    const Matrix a = gso.to_dense();
    const Matrix apow = mat_power(a, delta);
    const double w_norm = spectral_norm(mat_power(w, delta));
    const double rho = spectral_norm(a);  // symmetric, so the spectral radius
    const StructuralOracle oracle = bfs_oracle(graph);

    SensitivityReport report;
    report.delta = delta;
    report.connected = oracle.connected;
    report.bound_global = std::pow(rho, delta) * w_norm / n;

    double max_abs_entry = 0.0;
    double min_abs_entry = std::numeric_limits<double>::infinity();
    if (n <= 128) {
        Matrix pairs(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double s = std::fabs(apow.at(i, j)) * w_norm;
                pairs.at(i, j) = s;
                max_abs_entry = std::max(max_abs_entry, std::fabs(apow.at(i, j)));
                // Minimum over pairs in the same component.
                if (oracle.at(i, j) != StructuralOracle::unreachable)
                    min_abs_entry = std::min(min_abs_entry, std::fabs(apow.at(i, j)));
            }
        }
        report.pair_matrix = std::move(pairs);
    } else {
        Rng rng(seed);
        report.sampled_pairs = sample_pairs;
        for (int s = 0; s < sample_pairs; ++s) {
            const int i = rng.uniform_int(n);
            const int j = rng.uniform_int(n);
            max_abs_entry = std::max(max_abs_entry, std::fabs(apow.at(i, j)));
            if (oracle.at(i, j) != StructuralOracle::unreachable)
                min_abs_entry = std::min(min_abs_entry, std::fabs(apow.at(i, j)));
        }
    }
    if (!std::isfinite(min_abs_entry)) min_abs_entry = 0.0;

    report.s_global = max_abs_entry * w_norm;
    report.s_min = min_abs_entry * w_norm;
    report.pass_global = report.s_global >= report.bound_global - 1e-12;
    if (oracle.connected) {
        report.bound_min = 2.0 * w_norm / (n + 2.0 * graph.edge_count());
        report.pass_min = report.s_min >= *report.bound_min - 1e-12;
    }
    return report;
}

double deep_regime_factor(const Graph& graph, int i, int j) {
    if (i < 0 || j < 0 || i >= graph.n || j >= graph.n)
        throw std::invalid_argument("deep_regime_factor: node index out of range");
    if (!bfs_oracle(graph).connected)
        throw std::invalid_argument("deep_regime_factor: graph must be connected");
    const double di = graph.degree(i), dj = graph.degree(j);
    return std::sqrt((1.0 + di) * (1.0 + dj)) / (graph.n + 2.0 * graph.edge_count());
}

DeepRegimeFit deep_regime_fit(const Graph& graph, int delta_lo, int delta_hi) {
    if (delta_lo < 1 || delta_hi <= delta_lo)
        throw std::invalid_argument("deep_regime_fit: need 1 <= delta_lo < delta_hi");
    if (!bfs_oracle(graph).connected)
        throw std::invalid_argument("deep_regime_fit: graph must be connected");

    const int n = graph.n;
    const Gso gso = build_gso(graph);
    Matrix factor(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) factor.at(i, j) = deep_regime_factor(graph, i, j);

    const Matrix a = gso.to_dense();
    const SymEig eig = sym_eig(a);
    double lambda2 = 0.0;
    for (size_t l = 1; l < eig.values.size(); ++l)
        lambda2 = std::max(lambda2, std::fabs(eig.values[l]));

    // Log-linear least squares on deviations above rounding noise.
    std::vector<std::pair<int, double>> points;
    const int stride = std::max(1, (delta_hi - delta_lo) / 15);
    for (int d = delta_lo; d <= delta_hi; d += stride) {
        const double dev = max_abs_diff(mat_power(a, d), factor);
        if (dev > 1e-12) points.emplace_back(d, std::log(dev));
    }
    if (points.size() < 2)
        throw std::runtime_error(
            "deep_regime_fit: deviation already below noise in the requested range");

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [d, logdev] : points) {
        sx += d;
        sy += logdev;
        sxx += static_cast<double>(d) * d;
        sxy += d * logdev;
    }
    const double m = points.size();
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);

    DeepRegimeFit fit;
    fit.fitted_ratio = std::exp(slope);
    fit.lambda2 = lambda2;
    fit.rel_err = std::fabs(fit.fitted_ratio - lambda2) / std::max(lambda2, 1e-300);
    fit.delta_lo = points.front().first;
    fit.delta_hi = points.back().first;
    fit.dev_lo = std::exp(points.front().second);
    fit.dev_hi = std::exp(points.back().second);
    return fit;
}

SpectrumLemmaReport verify_spectrum_lemma(const Gso& gso, int t_max) {
    SpectrumLemmaReport report;
    const Matrix a = gso.to_dense();
    const SymEig eig = sym_eig(a);
    report.min_eigenvalue = eig.values.back();
    report.max_eigenvalue = eig.values.front();
    if (report.min_eigenvalue < -1.0 - 1e-9 || report.max_eigenvalue > 1.0 + 1e-9)
        report.failures.push_back("eigenvalues escape [-1, 1]");

    // d = diag(D^{1/2}) is fixed by A.
    Matrix d(gso.n, 1);
    for (int i = 0; i < gso.n; ++i) d.at(i, 0) = 1.0 / gso.inv_sqrt_deg[i];
    const Matrix ad = gso.apply(d);
    report.fixed_vector_residual = max_abs_diff(ad, d);
    if (report.fixed_vector_residual > 1e-9)
        report.failures.push_back("A d != d beyond tolerance");

    report.min_frobenius = std::numeric_limits<double>::infinity();
    Matrix apow = a;
    for (int t = 1; t <= t_max; ++t) {
        if (t > 1) apow = matmul(apow, a);
        const double sn = spectral_norm(apow);
        report.worst_norm_deviation = std::max(report.worst_norm_deviation, std::fabs(sn - 1.0));
        report.min_frobenius = std::min(report.min_frobenius, frobenius_norm(apow));
    }
    if (report.worst_norm_deviation > 1e-6)
        report.failures.push_back("spectral norm of a power drifts from 1");
    if (report.min_frobenius < 1.0 - 1e-6)
        report.failures.push_back("Frobenius norm of a power decays below 1");

    report.pass = report.failures.empty();
    return report;
}

VanishingRateResult vanishing_rate_experiment(const Graph& graph, int k, int width, int trials,
                                              uint64_t seed, double bias) {
    if (k < 2) throw std::invalid_argument("vanishing_rate_experiment: need k >= 2");
    if (width < 32) throw std::invalid_argument("vanishing_rate_experiment: need width >= 32");
    if (trials < 1) throw std::invalid_argument("vanishing_rate_experiment: need trials >= 1");
    if (!bfs_oracle(graph).connected)
        throw std::invalid_argument("vanishing_rate_experiment: graph must be connected");

    const Gso gso = build_gso(graph);
    const int n = graph.n;
    VanishingRateResult result;
    result.per_trial.reserve(trials);

    for (int trial = 0; trial < trials; ++trial) {
        Rng rng(seed + 0x9e3779b97f4a7c15ull * (trial + 1));
        const double wscale = 1.0 / std::sqrt(static_cast<double>(width));
        Matrix w = random_matrix(width, width, rng, wscale);
        Matrix u = random_matrix(n, width, rng, 1.0);

        // Residual-GCN states feeding the ReLU masks.
        std::vector<Matrix> states;
        states.push_back(u);
        for (int t = 0; t < k; ++t) {
            Matrix pre = matmul(gso.apply(states.back()), w) + states.back();
            states.push_back(activate(pre, Activation::relu));
        }

        // Random walk (self-steps allowed; the shift operator has a diagonal).
        std::vector<int> walk(k + 1);
        walk[0] = rng.uniform_int(n);
        for (int t = 0; t < k; ++t) {
            const int u_node = walk[t];
            const int deg = graph.csr_offsets[u_node + 1] - graph.csr_offsets[u_node];
            const int pick = rng.uniform_int(deg + 1);  // +1 for the self entry
            walk[t + 1] = (pick == deg)
                              ? u_node
                              : graph.csr_neighbors[graph.csr_offsets[u_node] + pick];
        }

        const Matrix wt = transpose(w);
        Matrix v(1, width), lin(1, width);
        for (int q = 0; q < width; ++q) v.at(0, q) = rng.normal();
        lin = v;

        for (int t = 0; t < k; ++t) {
            const int jt = walk[t], it = walk[t + 1];
            const double aij = gso.entry(it, jt);
            // Mask from the single-neighbor preactivation a_ij X_t^(j) W + bias.
            Matrix row(1, width);
            for (int q = 0; q < width; ++q) row.at(0, q) = states[t].at(jt, q);
            Matrix pre = scale(matmul(row, w), aij);
            v = matmul(v, wt);
            lin = matmul(lin, wt);
            for (int q = 0; q < width; ++q)
                if (pre.at(0, q) + bias <= 0.0) v.at(0, q) = 0.0;
        }
        const double nv = frobenius_norm(v);
        const double nl = frobenius_norm(lin);
        result.per_trial.push_back(std::log2(nv / nl) / k);
    }
    double sum = 0.0;
    for (double t : result.per_trial) sum += t;
    result.mean_log2_ratio = sum / trials;
    return result;
}

}  // namespace mpssm
