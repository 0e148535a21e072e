#pragma once

#include <string>
#include <vector>

#include "mpssm/block.hpp"
#include "mpssm/graph.hpp"

namespace mpssm {

struct LayerNormParams {
    Matrix gamma;  // 1 x c
    Matrix beta;   // 1 x c
};

enum class Pooling { none, mean };

/// Stack of recurrence blocks with the usual deep-sequence-model heuristics:
/// pre-block layer normalization, dropout on block outputs, and identity
/// residual connections across whole blocks.
struct DeepModel {
    Matrix enc_w;  // c' x c
    Matrix enc_b;  // 1 x c
    std::vector<BlockParams> blocks;
    std::vector<LayerNormParams> norms;  // one per block when use_norm
    Matrix head_w;  // c x out
    Matrix head_b;  // 1 x out
    double dropout = 0.0;
    bool residual = true;
    bool use_norm = true;
    Pooling pooling = Pooling::none;

    int hidden() const { return enc_w.cols; }
    int blocks_count() const { return static_cast<int>(blocks.size()); }
};

DeepModel init_deep_model(int in_dim, int hidden, int out_dim, int blocks, int k,
                          double dropout, bool residual, bool use_norm, Pooling pooling,
                          Activation act, Rng& rng);

/// Forward pass. With train_mode and dropout > 0 an RNG must be supplied; the
/// caller owns determinism. Returns predictions (n x out, or 1 x out after
/// mean pooling).
Matrix deep_forward(const DeepModel& model, const Gso& gso, const Matrix& features,
                    bool train_mode = false, Rng* rng = nullptr);

Matrix layer_norm_forward(const Matrix& x, const LayerNormParams& p, Matrix* mean_out = nullptr,
                          Matrix* inv_std_out = nullptr);

/// Residual graph-convolution stack: X_{t+1} = act(A X_t W_t + X_t).
/// With weight sharing the single layer is applied k times.
struct GcnStack {
    std::vector<Matrix> weights;  // per layer (or a single shared one)
    std::vector<Matrix> biases;   // 1 x c each
    bool weight_shared = false;
    Activation act = Activation::relu;
    int k = 0;

    const Matrix& weight(int t) const { return weights[weight_shared ? 0 : t]; }
    const Matrix& bias(int t) const { return biases[weight_shared ? 0 : t]; }
};

GcnStack init_gcn_stack(int c, int k, bool weight_shared, Activation act, Rng& rng);

/// Returns all states X_0..X_k.
std::vector<Matrix> gcn_forward(const Gso& gso, const GcnStack& stack, const Matrix& features);

/// Checkpoint format: JSON object with a format-version field and named flat
/// arrays plus shape metadata.
void save_named_tensors(const std::vector<std::pair<std::string, const Matrix*>>& tensors,
                        const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& meta = {});
std::vector<std::pair<std::string, Matrix>> load_named_tensors(
    const std::string& path, std::vector<std::pair<std::string, std::string>>* meta = nullptr);

}  // namespace mpssm
