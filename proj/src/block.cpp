#include "mpssm/block.hpp"

#include <cmath>

#include "mpssm/linalg.hpp"

namespace mpssm {

NodeSequence make_input_sequence(const Matrix& u1, int k) {
    if (k < 0) throw std::invalid_argument("make_input_sequence: k must be >= 0");
    if (u1.rows == 0 || u1.cols == 0) throw std::invalid_argument("make_input_sequence: empty input");
    NodeSequence seq;
    seq.mode = SeqMode::constant;
    seq.steps.assign(k + 1, u1);
    return seq;
}

NodeSequence make_input_sequence(std::vector<Matrix> steps, int k) {
    if (steps.empty()) throw std::invalid_argument("make_input_sequence: empty input");
    if (static_cast<int>(steps.size()) != k + 1)
        throw std::invalid_argument("make_input_sequence: temporal list must have k+1 entries");
    for (const Matrix& m : steps)
        if (!m.same_shape(steps[0]))
            throw std::invalid_argument("make_input_sequence: step shapes differ");
    NodeSequence seq;
    seq.mode = SeqMode::temporal;
    seq.steps = std::move(steps);
    return seq;
}

double activate(double x, Activation act) {
    switch (act) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::gelu: {
            // tanh approximation
            const double c = 0.7978845608028654;  // sqrt(2/pi)
            const double u = c * (x + 0.044715 * x * x * x);
            return 0.5 * x * (1.0 + std::tanh(u));
        }
        case Activation::identity: return x;
    }
    return x;
}

double activate_grad(double x, Activation act) {
    switch (act) {
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::gelu: {
            const double c = 0.7978845608028654;
            const double u = c * (x + 0.044715 * x * x * x);
            const double t = std::tanh(u);
            const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        }
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

Matrix activate(const Matrix& x, Activation act) {
    Matrix y = x;
    for (double& v : y.data) v = activate(v, act);
    return y;
}

Matrix Mlp::apply(const Matrix& x) const {
    Matrix h = matmul(x, w1);
    for (int i = 0; i < h.rows; ++i)
        for (int j = 0; j < h.cols; ++j) h.at(i, j) = activate(h.at(i, j) + b1.at(0, j), act);
    Matrix y = matmul(h, w2);
    for (int i = 0; i < y.rows; ++i)
        for (int j = 0; j < y.cols; ++j) y.at(i, j) += b2.at(0, j);
    return y;
}

Mlp Mlp::identity_mlp(int c, Activation act) {
    Mlp m;
    m.w1 = Matrix::identity(c);
    m.b1 = Matrix(1, c);
    m.w2 = Matrix::identity(c);
    m.b2 = Matrix(1, c);
    m.act = act;
    return m;
}

BlockParams init_block_params(int c_in, int c, int h, int c_out, int k, Activation act,
                              Rng& rng) {
    if (k < 0) throw std::invalid_argument("init_block_params: k must be >= 0");
    BlockParams p;
    p.k = k;
    p.w = glorot_uniform(c, c, rng);
    p.b = glorot_uniform(c_in, c, rng);
    p.mlp.w1 = glorot_uniform(c, h, rng);
    p.mlp.b1 = Matrix(1, h);
    p.mlp.w2 = glorot_uniform(h, c_out, rng);
    p.mlp.b2 = Matrix(1, c_out);
    p.mlp.act = act;
    return p;
}

BlockResult block_forward(const Gso& gso, const BlockParams& params, const NodeSequence& input) {
    if (input.steps.empty()) throw std::invalid_argument("block_forward: empty input sequence");
    if (input.k() != params.k)
        throw std::invalid_argument("block_forward: sequence length != k + 1");
    if (input.n() != gso.n)
        throw std::invalid_argument("block_forward: node count mismatch");
    if (input.channels() != params.b.rows)
        throw std::invalid_argument("block_forward: input channels do not match B");

    const int c = params.w.rows;
    BlockResult out;
    out.states.reserve(params.k + 2);
    out.states.emplace_back(gso.n, c);  // X_0 = 0
    for (int t = 0; t <= params.k; ++t) {
        Matrix next = matmul(gso.apply(out.states.back()), params.w);
        next += matmul(input.steps[t], params.b);
        out.states.push_back(std::move(next));
    }
    if (input.mode == SeqMode::temporal) {
        for (int t = 1; t <= params.k + 1; ++t)
            out.outputs.push_back(params.mlp.apply(out.states[t]));
    } else {
        out.outputs.push_back(params.mlp.apply(out.states.back()));
    }
    return out;
}

Matrix unfolded_forward(const Gso& gso, const BlockParams& params, const NodeSequence& input) {
    if (input.steps.empty()) throw std::invalid_argument("unfolded_forward: empty input sequence");
    if (input.k() != params.k)
        throw std::invalid_argument("unfolded_forward: sequence length != k + 1");
    if (input.n() != gso.n)
        throw std::invalid_argument("unfolded_forward: node count mismatch");

    const int k = params.k;
    // term_i = A^i U_{k+1-i} B W^i; powers applied incrementally from i = 0.
    Matrix sum = matmul(input.steps[k], params.b);
    Matrix w_pow = Matrix::identity(params.w.rows);
    std::vector<Matrix> ub(k + 1);
    for (int i = 0; i <= k; ++i) ub[i] = matmul(input.steps[i], params.b);
    // a_pow_u[i] accumulates A^j applied to U_i B as j grows.
    for (int i = 1; i <= k; ++i) {
        w_pow = matmul(w_pow, params.w);
        Matrix term = ub[k - i];
        for (int j = 0; j < i; ++j) term = gso.apply(term);
        sum += matmul(term, w_pow);
    }
    return params.mlp.apply(sum);
}

}  // namespace mpssm
