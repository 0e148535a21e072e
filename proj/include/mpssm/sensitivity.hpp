#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mpssm/block.hpp"
#include "mpssm/graph.hpp"
#include "mpssm/matrix.hpp"

namespace mpssm {

/// Jacobian of node i's state at depth delta with respect to node j's state:
/// the scalar (A^delta)_{ij} times (W^T)^delta.
Matrix exact_jacobian(const Gso& gso, const Matrix& w, int i, int j, int delta);

/// Central-difference Jacobian of X_t^{(i)} w.r.t. X_s^{(j)} obtained by
/// perturbing the state and running the literal recurrence. Oracle for the
/// closed form above.
Matrix finite_diff_jacobian(const Gso& gso, const BlockParams& params, int i, int j, int s,
                            int t, double h);

/// |(A^delta)_{ij}| * ||W^delta||, using the scalar factorization of the
/// Jacobian rather than forming the product.
double local_sensitivity(const Gso& gso, const Matrix& w, int i, int j, int delta);

struct SensitivityReport {
    int delta = 0;
    double s_global = 0.0;
    double s_min = 0.0;
    double bound_global = 0.0;           // rho(A)^delta ||W^delta|| / |V|
    std::optional<double> bound_min;     // 2 ||W^delta|| / (|V| + 2|E|), connected only
    bool connected = false;
    bool pass_global = false;
    std::optional<bool> pass_min;
    std::optional<Matrix> pair_matrix;   // S_ij for all pairs when n <= 128
    int sampled_pairs = 0;               // 0 when the full matrix was used

    std::string to_text() const;
    std::string to_json() const;
    std::string pair_matrix_csv() const;
};

/// All-pairs (n <= 128) or sampled local sensitivities with the global and
/// minimum bounds and their literal pass flags.
SensitivityReport sensitivity_profile(const Graph& graph, const Matrix& w, int delta,
                                      bool allow_sampling = false, int sample_pairs = 4096,
                                      uint64_t seed = 0);

/// sqrt((1+d_i)(1+d_j)) / (|V| + 2|E|); the limit of (A^delta)_{ij} on a
/// connected graph.
double deep_regime_factor(const Graph& graph, int i, int j);

struct DeepRegimeFit {
    double fitted_ratio = 0.0;
    double lambda2 = 0.0;   // second-largest eigenvalue magnitude
    double rel_err = 0.0;   // |fitted - lambda2| / lambda2
    int delta_lo = 0;
    int delta_hi = 0;
    double dev_lo = 0.0;    // max-entry deviation at delta_lo
    double dev_hi = 0.0;
};

/// Fits the geometric decay ratio of max_ij |(A^delta)_{ij} - factor_ij| over
/// [delta_lo, delta_hi] (log-linear least squares on deltas where the
/// deviation is above rounding noise).
DeepRegimeFit deep_regime_fit(const Graph& graph, int delta_lo, int delta_hi);

struct SpectrumLemmaReport {
    bool pass = false;
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    double fixed_vector_residual = 0.0;   // ||A d - d||_inf for d = sqrt(1 + deg)
    double worst_norm_deviation = 0.0;    // max_t | ||A^t||_2 - 1 |
    double min_frobenius = 0.0;           // min_t ||A^t||_F
    std::vector<std::string> failures;
};

/// Eigenvalues in [-1, 1], A d = d for d = diag(D^{1/2}), and unit spectral
/// norm of every power up to t_max.
SpectrumLemmaReport verify_spectrum_lemma(const Gso& gso, int t_max);

struct VanishingRateResult {
    double mean_log2_ratio = 0.0;  // per-layer log2 of ||masked|| / ||linear||
    std::vector<double> per_trial;
};

/// Monte-Carlo estimate of how much faster a ReLU residual-GCN attenuates a
/// perturbation along a walk than the linear recurrence with the same
/// weights. Expected per-layer log2 ratio is about -0.5.
VanishingRateResult vanishing_rate_experiment(const Graph& graph, int k, int width, int trials,
                                              uint64_t seed, double bias = 0.0);

}  // namespace mpssm
