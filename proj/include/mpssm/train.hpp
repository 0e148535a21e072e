#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpssm/dataset.hpp"
#include "mpssm/fastscan.hpp"
#include "mpssm/model.hpp"

namespace mpssm {

enum class Implementation { sequential, fast_merged };
enum class ModelVariant {
    mpssm,              // blocks + norm + residual (+ dropout)
    gcn,                // residual graph convolution with ReLU, per-layer weights
    linear_gcn,         // same, identity activation
    linear_gcn_ws,      // identity activation, shared weights
    one_block_linear,   // one recurrence block + MLP, no heuristics
    multi_block_linear  // stacked blocks, no heuristics
};

Implementation implementation_from_string(const std::string& s);
ModelVariant variant_from_string(const std::string& s);
std::string variant_to_string(ModelVariant v);

struct TrainConfig {
    Task task = Task::diameter;
    ModelVariant variant = ModelVariant::mpssm;
    Implementation implementation = Implementation::sequential;
    double lr = 1e-3;
    double weight_decay = 0.0;
    bool decoupled_weight_decay = false;  // AdamW-style when set
    double dropout = 0.0;
    int k = 10;
    int hidden = 20;
    int blocks = 2;
    int epochs = 100;
    int patience = 20;
    int batch_size = 32;
    uint64_t seed = 0;
    double r_min = 0.9;
    double r_max = 0.999;
    double gcn_init_scale = 0.5;  // keeps deep residual stacks stable at init
};

/// Trainable diagonalized-block model (merged fast implementation).
struct FastDeepModel {
    Matrix enc_w, enc_b;
    std::vector<FastBlockParams> blocks;
    std::vector<LayerNormParams> norms;
    Matrix head_w, head_b;
    double dropout = 0.0;
    bool residual = true;
    bool use_norm = true;
    Pooling pooling = Pooling::none;
};

struct GcnModel {
    Matrix enc_w, enc_b;
    GcnStack stack;
    Matrix head_w, head_b;
    Pooling pooling = Pooling::none;
};

struct TrainModel {
    enum class Kind { deep, fast, gcn } kind = Kind::deep;
    DeepModel deep;
    FastDeepModel fast;
    GcnModel gcn;
};

TrainModel build_model(const TrainConfig& config, int in_dim, int out_dim, Pooling pooling);

/// Named views over every real parameter tensor, in a fixed order. Complex
/// parameters appear as separate _re / _im tensors.
struct ParamView {
    std::string name;
    Matrix* tensor;
};
std::vector<ParamView> parameters(TrainModel& model);

/// Stored intermediates of one forward pass; replaying it (same dropout
/// masks) reproduces the outputs bit for bit.
struct GradientTape {
    struct BlockTape {
        Matrix input;
        Matrix normed;
        Matrix mean, inv_std;
        std::vector<Matrix> states;  // sequential path: X_0..X_{k+1}
        Matrix u_hat;                // fast path stages
        CMatrix g, ksum, dksum, z, pz;
        Matrix mlp_pre, mlp_h;
        Matrix block_out;
        Matrix drop_mask;  // scaled inverted-dropout mask; empty when unused
    };
    Matrix features;
    Matrix enc_out;
    std::vector<BlockTape> blocks;
    std::vector<Matrix> gcn_pre;  // pre-activations per layer
    std::vector<Matrix> gcn_states;
    Matrix trunk;
    Matrix head_out;
    Matrix pred;
};

/// Forward pass recording the tape. `diag` is required for fast-kind models.
/// When `replay` is given its dropout masks are reused instead of sampling.
Matrix model_forward(const TrainModel& model, const Gso& gso, const DiagGso* diag,
                     const Matrix& features, bool train_mode, Rng* rng, GradientTape& tape,
                     const GradientTape* replay = nullptr);

/// Parameter gradients for the recorded pass, aligned with parameters().
/// `loss_grad` is dL/dpred.
std::vector<Matrix> model_backward(const TrainModel& model, const Gso& gso, const DiagGso* diag,
                                   const GradientTape& tape, const Matrix& loss_grad);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool decoupled = false;
    long step = 0;
    std::vector<Matrix> m, v;
};

AdamState init_adam(const std::vector<ParamView>& params, double lr, double weight_decay,
                    bool decoupled);

/// Bias-corrected update. Throws on non-finite gradients.
void adam_step(AdamState& state, const std::vector<ParamView>& params,
               const std::vector<Matrix>& grads);

struct Metrics {
    double mse = 0.0;
    double log10_mse = -12.0;  // log10(max(mse, 1e-12))
};

Metrics evaluate(const TrainModel& model, const std::vector<const GppRecord*>& records);

struct EpochStats {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
    double log10_val_mse = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    TrainModel model;  // best-validation parameters
    std::vector<EpochStats> history;
    int best_epoch = 0;
    Metrics val;
    Metrics test;
};

TrainResult train_model(const TrainConfig& config, const GppDataset& dataset);

void save_history_jsonl(const std::vector<EpochStats>& history, const std::string& path);

void save_checkpoint(TrainModel& model, const TrainConfig& config, int in_dim, int out_dim,
                     const std::string& path);
TrainModel load_checkpoint(const std::string& path, TrainConfig* config_out = nullptr);

}  // namespace mpssm
