#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpssm/block.hpp"
#include "mpssm/graph.hpp"
#include "mpssm/linalg.hpp"

namespace mpssm {

/// Cached eigendecomposition of a shift operator: A = P diag(eigenvalues) P^T
/// with P orthogonal, keyed by the graph fingerprint.
struct DiagGso {
    int n = 0;
    std::vector<double> eigenvalues;  // descending
    Matrix p;                         // n x n orthogonal
    uint64_t fingerprint = 0;
};

DiagGso precompute_gso_eig(const Gso& gso);

void save_diag_gso(const DiagGso& d, const std::string& path);
DiagGso load_diag_gso(const std::string& path);

/// Diagonalized complex block parameters. Exact mode carries the weight
/// eigenvector matrices so outputs reproduce the sequential block; merged
/// mode folds them into the learnable complex weights.
struct FastBlockParams {
    enum class Mode { exact, merged };

    CMatrix sigma;   // 1 x c, diagonal of the recurrence weight
    CMatrix b_hat;   // c' x c
    CMatrix w1_hat;  // c x h
    Matrix w2;       // h x c_out
    Matrix b1;       // 1 x h
    Matrix b2;       // 1 x c_out
    Activation act = Activation::relu;
    Mode mode = Mode::merged;
    CMatrix v;       // c x c, exact mode only
    CMatrix v_inv;   // c x c, exact mode only
    int k = 0;
};

/// Diagonalize a sequential block's recurrence weight and fold the
/// eigenvector matrices into B and W1. Throws on near-defective W.
FastBlockParams to_exact_fast(const BlockParams& params);

/// Merged-mode initialization: sigma on the complex ring with radius in
/// [r_min, r_max] and uniform phase, complex Glorot B-hat / W1-hat, real
/// Glorot W2.
FastBlockParams init_merged_params(int c_in, int c, int h, int c_out, int k, double r_min,
                                   double r_max, uint64_t seed);

struct FastResult {
    /// One decoded output per step, Y_1..Y_{k+1}. With a constant input every
    /// prefix is a valid state; with a temporal input only the final entry is
    /// guaranteed to match the sequential recurrence.
    std::vector<Matrix> outputs;
    /// Exact mode only: reconstructed real states X_1..X_{k+1}.
    std::vector<Matrix> states;
};

inline constexpr size_t kDefaultFastMemoryBudget = size_t{1} << 30;

/// Scaled-term / cumulative-sum evaluation of the diagonalized block over the
/// whole sequence. The (k+1) x n x c complex working set must fit the memory
/// budget; exceeding it is an error (fall back to the sequential block).
FastResult fast_forward(const DiagGso& diag, const FastBlockParams& params,
                        const NodeSequence& input,
                        size_t memory_budget_bytes = kDefaultFastMemoryBudget);

/// Final-step output only, via the closed-form geometric kernel
/// K[a][b] = sum_i (lambda_a sigma_b)^i. Constant-mode inputs only; runtime is
/// independent of k up to the kernel's scalar powers.
Matrix fast_forward_final(const DiagGso& diag, const FastBlockParams& params,
                          const NodeSequence& input);

}  // namespace mpssm
