#pragma once

#include <vector>

#include "mpssm/graph.hpp"
#include "mpssm/matrix.hpp"

namespace mpssm {

enum class SeqMode { constant, temporal };

/// Input sequence U_1..U_{k+1} of n x c' matrices. In constant (static graph)
/// mode all steps are the same matrix.
struct NodeSequence {
    SeqMode mode = SeqMode::constant;
    std::vector<Matrix> steps;  // size k + 1

    int k() const { return static_cast<int>(steps.size()) - 1; }
    int n() const { return steps.empty() ? 0 : steps[0].rows; }
    int channels() const { return steps.empty() ? 0 : steps[0].cols; }
};

NodeSequence make_input_sequence(const Matrix& u1, int k);
NodeSequence make_input_sequence(std::vector<Matrix> steps, int k);

enum class Activation { relu, gelu, identity };

double activate(double x, Activation act);
double activate_grad(double x, Activation act);
Matrix activate(const Matrix& x, Activation act);

/// Two dense layers with an elementwise nonlinearity in between.
struct Mlp {
    Matrix w1;  // c x h
    Matrix b1;  // 1 x h
    Matrix w2;  // h x c_out
    Matrix b2;  // 1 x c_out
    Activation act = Activation::relu;

    Matrix apply(const Matrix& x) const;
    /// Identity-weight MLP of width c: apply(x) == act(x).
    static Mlp identity_mlp(int c, Activation act);
};

/// One recurrence block: k steps of X_{t+1} = A X_t W + U_{t+1} B from
/// X_0 = 0, then the MLP decoder.
struct BlockParams {
    Matrix w;  // c x c
    Matrix b;  // c' x c
    Mlp mlp;
    int k = 0;
};

BlockParams init_block_params(int c_in, int c, int h, int c_out, int k, Activation act, Rng& rng);

struct BlockResult {
    std::vector<Matrix> states;   // X_0..X_{k+1}
    std::vector<Matrix> outputs;  // constant mode: {Y_{k+1}}; temporal: Y_1..Y_{k+1}
};

BlockResult block_forward(const Gso& gso, const BlockParams& params, const NodeSequence& input);

/// Closed-form evaluation of the same block: X_{k+1} = sum_i A^i U_{k+1-i} B W^i,
/// then the MLP. Returns the final-step output only.
Matrix unfolded_forward(const Gso& gso, const BlockParams& params, const NodeSequence& input);

}  // namespace mpssm
