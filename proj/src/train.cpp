#include "mpssm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "mpssm/linalg.hpp"

namespace mpssm {

using nlohmann::json;
using cd = std::complex<double>;

Implementation implementation_from_string(const std::string& s) {
    if (s == "sequential") return Implementation::sequential;
    if (s == "fast-merged" || s == "fast_merged") return Implementation::fast_merged;
    throw std::invalid_argument("unknown implementation: " + s);
}

ModelVariant variant_from_string(const std::string& s) {
    if (s == "mpssm") return ModelVariant::mpssm;
    if (s == "gcn") return ModelVariant::gcn;
    if (s == "linear-gcn" || s == "linear_gcn") return ModelVariant::linear_gcn;
    if (s == "linear-gcn-ws" || s == "linear_gcn_ws") return ModelVariant::linear_gcn_ws;
    if (s == "one-block-linear" || s == "one_block_linear") return ModelVariant::one_block_linear;
    if (s == "multi-block-linear" || s == "multi_block_linear")
        return ModelVariant::multi_block_linear;
    throw std::invalid_argument("unknown model variant: " + s);
}

std::string variant_to_string(ModelVariant v) {
    switch (v) {
        case ModelVariant::mpssm: return "mpssm";
        case ModelVariant::gcn: return "gcn";
        case ModelVariant::linear_gcn: return "linear-gcn";
        case ModelVariant::linear_gcn_ws: return "linear-gcn-ws";
        case ModelVariant::one_block_linear: return "one-block-linear";
        case ModelVariant::multi_block_linear: return "multi-block-linear";
    }
    return "?";
}

TrainModel build_model(const TrainConfig& config, int in_dim, int out_dim, Pooling pooling) {
    Rng rng(config.seed);
    TrainModel model;
    switch (config.variant) {
        case ModelVariant::gcn:
        case ModelVariant::linear_gcn:
        case ModelVariant::linear_gcn_ws: {
            model.kind = TrainModel::Kind::gcn;
            GcnModel& m = model.gcn;
            m.enc_w = glorot_uniform(in_dim, config.hidden, rng);
            m.enc_b = Matrix(1, config.hidden);
            const bool shared = config.variant == ModelVariant::linear_gcn_ws;
            const Activation act = config.variant == ModelVariant::gcn ? Activation::relu
                                                                       : Activation::identity;
            m.stack = init_gcn_stack(config.hidden, config.k, shared, act, rng);
            for (Matrix& w : m.stack.weights) w = scale(w, config.gcn_init_scale);
            m.head_w = glorot_uniform(config.hidden, out_dim, rng);
            m.head_b = Matrix(1, out_dim);
            m.pooling = pooling;
            return model;
        }
        default: break;
    }

    const bool heuristics = config.variant == ModelVariant::mpssm;
    const int blocks = config.variant == ModelVariant::one_block_linear ? 1 : config.blocks;
    if (config.implementation == Implementation::fast_merged) {
        model.kind = TrainModel::Kind::fast;
        FastDeepModel& m = model.fast;
        m.enc_w = glorot_uniform(in_dim, config.hidden, rng);
        m.enc_b = Matrix(1, config.hidden);
        for (int b = 0; b < blocks; ++b) {
            m.blocks.push_back(init_merged_params(config.hidden, config.hidden, config.hidden,
                                                  config.hidden, config.k, config.r_min,
                                                  config.r_max, rng.next()));
            LayerNormParams ln;
            ln.gamma = Matrix(1, config.hidden, 1.0);
            ln.beta = Matrix(1, config.hidden);
            m.norms.push_back(std::move(ln));
        }
        m.head_w = glorot_uniform(config.hidden, out_dim, rng);
        m.head_b = Matrix(1, out_dim);
        m.dropout = heuristics ? config.dropout : 0.0;
        m.residual = heuristics;
        m.use_norm = heuristics;
        m.pooling = pooling;
        return model;
    }

    model.kind = TrainModel::Kind::deep;
    model.deep = init_deep_model(in_dim, config.hidden, out_dim, blocks, config.k,
                                 heuristics ? config.dropout : 0.0, heuristics, heuristics,
                                 pooling, Activation::relu, rng);
    return model;
}

std::vector<ParamView> parameters(TrainModel& model) {
    std::vector<ParamView> out;
    auto add = [&out](const std::string& name, Matrix& m) { out.push_back({name, &m}); };
    switch (model.kind) {
        case TrainModel::Kind::deep: {
            DeepModel& m = model.deep;
            add("enc.w", m.enc_w);
            add("enc.b", m.enc_b);
            for (size_t b = 0; b < m.blocks.size(); ++b) {
                const std::string p = "block" + std::to_string(b) + ".";
                if (m.use_norm) {
                    add(p + "norm.gamma", m.norms[b].gamma);
                    add(p + "norm.beta", m.norms[b].beta);
                }
                add(p + "w", m.blocks[b].w);
                add(p + "b", m.blocks[b].b);
                add(p + "mlp.w1", m.blocks[b].mlp.w1);
                add(p + "mlp.b1", m.blocks[b].mlp.b1);
                add(p + "mlp.w2", m.blocks[b].mlp.w2);
                add(p + "mlp.b2", m.blocks[b].mlp.b2);
            }
            add("head.w", m.head_w);
            add("head.b", m.head_b);
            break;
        }
        case TrainModel::Kind::fast: {
            FastDeepModel& m = model.fast;
            add("enc.w", m.enc_w);
            add("enc.b", m.enc_b);
            for (size_t b = 0; b < m.blocks.size(); ++b) {
                const std::string p = "block" + std::to_string(b) + ".";
                if (m.use_norm) {
                    add(p + "norm.gamma", m.norms[b].gamma);
                    add(p + "norm.beta", m.norms[b].beta);
                }
                add(p + "sigma_re", m.blocks[b].sigma.re);
                add(p + "sigma_im", m.blocks[b].sigma.im);
                add(p + "b_hat_re", m.blocks[b].b_hat.re);
                add(p + "b_hat_im", m.blocks[b].b_hat.im);
                add(p + "w1_hat_re", m.blocks[b].w1_hat.re);
                add(p + "w1_hat_im", m.blocks[b].w1_hat.im);
                add(p + "w2", m.blocks[b].w2);
                add(p + "b1", m.blocks[b].b1);
                add(p + "b2", m.blocks[b].b2);
            }
            add("head.w", m.head_w);
            add("head.b", m.head_b);
            break;
        }
        case TrainModel::Kind::gcn: {
            GcnModel& m = model.gcn;
            add("enc.w", m.enc_w);
            add("enc.b", m.enc_b);
            for (size_t t = 0; t < m.stack.weights.size(); ++t) {
                const std::string p = "gcn.layer" + std::to_string(t) + ".";
                add(p + "w", m.stack.weights[t]);
                add(p + "b", m.stack.biases[t]);
            }
            add("head.w", m.head_w);
            add("head.b", m.head_b);
            break;
        }
    }
    return out;
}

namespace {

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix y = matmul(x, w);
    for (int i = 0; i < y.rows; ++i)
        for (int j = 0; j < y.cols; ++j) y.at(i, j) += b.at(0, j);
    return y;
}

/// Geometric kernels K[a][b] = sum_{i=0}^k x^i and D[a][b] = dK/dsigma_b,
/// with x = lambda_a sigma_b.
void fast_kernels(const DiagGso& diag, const FastBlockParams& p, CMatrix& ksum, CMatrix& dksum) {
    const int n = diag.n;
    const int c = p.sigma.cols();
    const int k = p.k;
    ksum = CMatrix(n, c);
    dksum = CMatrix(n, c);
    for (int a = 0; a < n; ++a) {
        const double lam = diag.eigenvalues[a];
        for (int b = 0; b < c; ++b) {
            const cd sig(p.sigma.re.at(0, b), p.sigma.im.at(0, b));
            const cd x = lam * sig;
            cd xp(1.0, 0.0);
            cd ks(0.0, 0.0), s1(0.0, 0.0);
            for (int i = 0; i <= k; ++i) {
                ks += xp;
                if (i < k) s1 += static_cast<double>(i + 1) * xp;
                xp *= x;
            }
            const cd d = lam * s1;
            ksum.re.at(a, b) = ks.real();
            ksum.im.at(a, b) = ks.imag();
            dksum.re.at(a, b) = d.real();
            dksum.im.at(a, b) = d.imag();
        }
    }
}

void apply_dropout(Matrix& y, double dropout, bool train_mode, Rng* rng, GradientTape::BlockTape& bt,
                   const GradientTape::BlockTape* replay) {
    if (!(train_mode && dropout > 0.0)) return;
    if (replay && !replay->drop_mask.empty()) {
        bt.drop_mask = replay->drop_mask;
    } else {
        if (!rng) throw std::invalid_argument("model_forward: dropout requires an RNG");
        const double keep = 1.0 - dropout;
        bt.drop_mask = Matrix(y.rows, y.cols);
        for (double& m : bt.drop_mask.data) m = (rng->uniform() < keep) ? 1.0 / keep : 0.0;
    }
    y = hadamard(y, bt.drop_mask);
}

Matrix layer_norm_backward(const Matrix& x, const LayerNormParams& p, const Matrix& mean,
                           const Matrix& inv_std, const Matrix& dnormed, Matrix& dgamma,
                           Matrix& dbeta) {
    const int n = x.rows, c = x.cols;
    Matrix dx(n, c);
    for (int i = 0; i < n; ++i) {
        const double mu = mean.at(i, 0);
        const double is = inv_std.at(i, 0);
        double mean_g = 0.0, mean_gx = 0.0;
        for (int j = 0; j < c; ++j) {
            const double xhat = (x.at(i, j) - mu) * is;
            const double g = dnormed.at(i, j) * p.gamma.at(0, j);
            mean_g += g;
            mean_gx += g * xhat;
            dgamma.at(0, j) += dnormed.at(i, j) * xhat;
            dbeta.at(0, j) += dnormed.at(i, j);
        }
        mean_g /= c;
        mean_gx /= c;
        for (int j = 0; j < c; ++j) {
            const double xhat = (x.at(i, j) - mu) * is;
            const double g = dnormed.at(i, j) * p.gamma.at(0, j);
            dx.at(i, j) = is * (g - mean_g - xhat * mean_gx);
        }
    }
    return dx;
}

}  // namespace

Matrix model_forward(const TrainModel& model, const Gso& gso, const DiagGso* diag,
                     const Matrix& features, bool train_mode, Rng* rng, GradientTape& tape,
                     const GradientTape* replay) {
    tape = GradientTape{};
    tape.features = features;

    const Matrix* enc_w = nullptr;
    const Matrix* enc_b = nullptr;
    const Matrix* head_w = nullptr;
    const Matrix* head_b = nullptr;
    Pooling pooling = Pooling::none;

    switch (model.kind) {
        case TrainModel::Kind::deep: {
            const DeepModel& m = model.deep;
            enc_w = &m.enc_w;
            enc_b = &m.enc_b;
            head_w = &m.head_w;
            head_b = &m.head_b;
            pooling = m.pooling;
            tape.enc_out = affine(features, m.enc_w, m.enc_b);
            Matrix h = tape.enc_out;
            for (size_t b = 0; b < m.blocks.size(); ++b) {
                GradientTape::BlockTape bt;
                bt.input = h;
                bt.normed = m.use_norm
                                ? layer_norm_forward(h, m.norms[b], &bt.mean, &bt.inv_std)
                                : h;
                const BlockParams& bp = m.blocks[b];
                bt.states.emplace_back(gso.n, bp.w.rows);  // X_0 = 0
                for (int t = 0; t <= bp.k; ++t) {
                    Matrix next = matmul(gso.apply(bt.states.back()), bp.w);
                    next += matmul(bt.normed, bp.b);
                    bt.states.push_back(std::move(next));
                }
                bt.mlp_pre = affine(bt.states.back(), bp.mlp.w1, bp.mlp.b1);
                bt.mlp_h = activate(bt.mlp_pre, bp.mlp.act);
                bt.block_out = affine(bt.mlp_h, bp.mlp.w2, bp.mlp.b2);
                Matrix y = bt.block_out;
                apply_dropout(y, m.dropout, train_mode, rng, bt,
                              replay ? &replay->blocks[b] : nullptr);
                h = m.residual ? h + y : std::move(y);
                tape.blocks.push_back(std::move(bt));
            }
            tape.trunk = std::move(h);
            break;
        }
        case TrainModel::Kind::fast: {
            const FastDeepModel& m = model.fast;
            if (!diag) throw std::invalid_argument("model_forward: fast model needs a DiagGso");
            enc_w = &m.enc_w;
            enc_b = &m.enc_b;
            head_w = &m.head_w;
            head_b = &m.head_b;
            pooling = m.pooling;
            const Matrix pt = transpose(diag->p);
            tape.enc_out = affine(features, m.enc_w, m.enc_b);
            Matrix h = tape.enc_out;
            for (size_t b = 0; b < m.blocks.size(); ++b) {
                GradientTape::BlockTape bt;
                bt.input = h;
                bt.normed = m.use_norm
                                ? layer_norm_forward(h, m.norms[b], &bt.mean, &bt.inv_std)
                                : h;
                const FastBlockParams& fp = m.blocks[b];
                bt.u_hat = matmul(pt, bt.normed);
                bt.g = cmatmul_real_left(bt.u_hat, fp.b_hat);
                fast_kernels(*diag, fp, bt.ksum, bt.dksum);
                bt.z = chadamard(bt.g, bt.ksum);
                bt.pz = cmatmul_real_left(diag->p, bt.z);
                Matrix pre = matmul(bt.pz.re, fp.w1_hat.re) - matmul(bt.pz.im, fp.w1_hat.im);
                for (int i = 0; i < pre.rows; ++i)
                    for (int j = 0; j < pre.cols; ++j) pre.at(i, j) += fp.b1.at(0, j);
                bt.mlp_pre = std::move(pre);
                bt.mlp_h = activate(bt.mlp_pre, fp.act);
                bt.block_out = affine(bt.mlp_h, fp.w2, fp.b2);
                Matrix y = bt.block_out;
                apply_dropout(y, m.dropout, train_mode, rng, bt,
                              replay ? &replay->blocks[b] : nullptr);
                h = m.residual ? h + y : std::move(y);
                tape.blocks.push_back(std::move(bt));
            }
            tape.trunk = std::move(h);
            break;
        }
        case TrainModel::Kind::gcn: {
            const GcnModel& m = model.gcn;
            enc_w = &m.enc_w;
            enc_b = &m.enc_b;
            head_w = &m.head_w;
            head_b = &m.head_b;
            pooling = m.pooling;
            tape.enc_out = affine(features, m.enc_w, m.enc_b);
            tape.gcn_states.push_back(tape.enc_out);
            for (int t = 0; t < m.stack.k; ++t) {
                Matrix pre = matmul(gso.apply(tape.gcn_states.back()), m.stack.weight(t));
                const Matrix& bias = m.stack.bias(t);
                for (int i = 0; i < pre.rows; ++i)
                    for (int j = 0; j < pre.cols; ++j)
                        pre.at(i, j) += bias.at(0, j) + tape.gcn_states.back().at(i, j);
                tape.gcn_states.push_back(activate(pre, m.stack.act));
                tape.gcn_pre.push_back(std::move(pre));
            }
            tape.trunk = tape.gcn_states.back();
            break;
        }
    }

    (void)enc_w;
    (void)enc_b;
    tape.head_out = affine(tape.trunk, *head_w, *head_b);
    if (pooling == Pooling::mean) {
        Matrix pooled = col_sum(tape.head_out);
        for (double& v : pooled.data) v /= tape.head_out.rows;
        tape.pred = std::move(pooled);
    } else {
        tape.pred = tape.head_out;
    }
    return tape.pred;
}

std::vector<Matrix> model_backward(const TrainModel& model, const Gso& gso, const DiagGso* diag,
                                   const GradientTape& tape, const Matrix& loss_grad) {
    auto& mutable_model = const_cast<TrainModel&>(model);  // shapes only
    std::vector<ParamView> params = parameters(mutable_model);
    std::vector<Matrix> grads;
    grads.reserve(params.size());
    std::unordered_map<std::string, int> index;
    for (size_t i = 0; i < params.size(); ++i) {
        grads.emplace_back(params[i].tensor->rows, params[i].tensor->cols);
        index[params[i].name] = static_cast<int>(i);
    }
    auto grad = [&](const std::string& name) -> Matrix& { return grads[index.at(name)]; };

    Pooling pooling = Pooling::none;
    const Matrix* head_w = nullptr;
    switch (model.kind) {
        case TrainModel::Kind::deep:
            pooling = model.deep.pooling;
            head_w = &model.deep.head_w;
            break;
        case TrainModel::Kind::fast:
            pooling = model.fast.pooling;
            head_w = &model.fast.head_w;
            break;
        case TrainModel::Kind::gcn:
            pooling = model.gcn.pooling;
            head_w = &model.gcn.head_w;
            break;
    }

    // Head (+ mean pooling).
    Matrix dhead_out;
    if (pooling == Pooling::mean) {
        dhead_out = Matrix(tape.head_out.rows, tape.head_out.cols);
        for (int i = 0; i < dhead_out.rows; ++i)
            for (int j = 0; j < dhead_out.cols; ++j)
                dhead_out.at(i, j) = loss_grad.at(0, j) / tape.head_out.rows;
    } else {
        dhead_out = loss_grad;
    }
    grad("head.w") += matmul(transpose(tape.trunk), dhead_out);
    grad("head.b") += col_sum(dhead_out);
    Matrix dtrunk = matmul(dhead_out, transpose(*head_w));

    switch (model.kind) {
        case TrainModel::Kind::deep: {
            const DeepModel& m = model.deep;
            Matrix dh = std::move(dtrunk);
            for (int b = static_cast<int>(m.blocks.size()) - 1; b >= 0; --b) {
                const GradientTape::BlockTape& bt = tape.blocks[b];
                const BlockParams& bp = m.blocks[b];
                const std::string p = "block" + std::to_string(b) + ".";

                Matrix dy = dh;
                if (!bt.drop_mask.empty()) dy = hadamard(dy, bt.drop_mask);
                grad(p + "mlp.b2") += col_sum(dy);
                grad(p + "mlp.w2") += matmul(transpose(bt.mlp_h), dy);
                Matrix dpre = matmul(dy, transpose(bp.mlp.w2));
                for (int i = 0; i < dpre.rows; ++i)
                    for (int j = 0; j < dpre.cols; ++j)
                        dpre.at(i, j) *= activate_grad(bt.mlp_pre.at(i, j), bp.mlp.act);
                grad(p + "mlp.b1") += col_sum(dpre);
                grad(p + "mlp.w1") += matmul(transpose(bt.states.back()), dpre);

                Matrix dstate = matmul(dpre, transpose(bp.mlp.w1));
                Matrix dnormed(bt.normed.rows, bt.normed.cols);
                Matrix& dw = grad(p + "w");
                Matrix& db = grad(p + "b");
                const Matrix bt_t = transpose(bp.b);
                const Matrix wt = transpose(bp.w);
                const Matrix normed_t = transpose(bt.normed);
                for (int t = bp.k + 1; t >= 1; --t) {
                    dw += matmul(transpose(gso.apply(bt.states[t - 1])), dstate);
                    db += matmul(normed_t, dstate);
                    dnormed += matmul(dstate, bt_t);
                    if (t > 1) dstate = gso.apply(matmul(dstate, wt));
                }

                Matrix dx;
                if (m.use_norm) {
                    dx = layer_norm_backward(bt.input, m.norms[b], bt.mean, bt.inv_std, dnormed,
                                             grad(p + "norm.gamma"), grad(p + "norm.beta"));
                } else {
                    dx = std::move(dnormed);
                }
                if (m.residual) dx += dh;
                dh = std::move(dx);
            }
            grad("enc.w") += matmul(transpose(tape.features), dh);
            grad("enc.b") += col_sum(dh);
            break;
        }
        case TrainModel::Kind::fast: {
            const FastDeepModel& m = model.fast;
            if (!diag) throw std::invalid_argument("model_backward: fast model needs a DiagGso");
            const Matrix pt = transpose(diag->p);
            Matrix dh = std::move(dtrunk);
            for (int b = static_cast<int>(m.blocks.size()) - 1; b >= 0; --b) {
                const GradientTape::BlockTape& bt = tape.blocks[b];
                const FastBlockParams& fp = m.blocks[b];
                const std::string p = "block" + std::to_string(b) + ".";

                Matrix dy = dh;
                if (!bt.drop_mask.empty()) dy = hadamard(dy, bt.drop_mask);
                grad(p + "b2") += col_sum(dy);
                grad(p + "w2") += matmul(transpose(bt.mlp_h), dy);
                Matrix dpre = matmul(dy, transpose(fp.w2));
                for (int i = 0; i < dpre.rows; ++i)
                    for (int j = 0; j < dpre.cols; ++j)
                        dpre.at(i, j) *= activate_grad(bt.mlp_pre.at(i, j), fp.act);
                grad(p + "b1") += col_sum(dpre);

                // mlp_pre = Re(pz w1_hat) + b1
                grad(p + "w1_hat_re") += matmul(transpose(bt.pz.re), dpre);
                grad(p + "w1_hat_im") += scale(matmul(transpose(bt.pz.im), dpre), -1.0);
                CMatrix dpz;
                dpz.re = matmul(dpre, transpose(fp.w1_hat.re));
                dpz.im = scale(matmul(dpre, transpose(fp.w1_hat.im)), -1.0);

                CMatrix dz;
                dz.re = matmul(pt, dpz.re);
                dz.im = matmul(pt, dpz.im);

                // z = g .* K
                CMatrix dg = chadamard(conj(bt.ksum), dz);
                CMatrix dk = chadamard(conj(bt.g), dz);

                grad(p + "b_hat_re") += matmul(transpose(bt.u_hat), dg.re);
                grad(p + "b_hat_im") += matmul(transpose(bt.u_hat), dg.im);
                Matrix du_hat =
                    matmul(dg.re, transpose(fp.b_hat.re)) + matmul(dg.im, transpose(fp.b_hat.im));
                Matrix dnormed = matmul(diag->p, du_hat);

                // sigma gradient: dK/dsigma_b accumulated over rows, using the
                // conjugate of the holomorphic derivative.
                Matrix& dsig_re = grad(p + "sigma_re");
                Matrix& dsig_im = grad(p + "sigma_im");
                for (int col = 0; col < bt.dksum.cols(); ++col) {
                    cd acc(0.0, 0.0);
                    for (int a = 0; a < bt.dksum.rows(); ++a) {
                        const cd dQ(dk.re.at(a, col), dk.im.at(a, col));
                        const cd dKd(bt.dksum.re.at(a, col), bt.dksum.im.at(a, col));
                        acc += std::conj(dKd) * dQ;
                    }
                    dsig_re.at(0, col) += acc.real();
                    dsig_im.at(0, col) += acc.imag();
                }

                Matrix dx;
                if (m.use_norm) {
                    dx = layer_norm_backward(bt.input, m.norms[b], bt.mean, bt.inv_std, dnormed,
                                             grad(p + "norm.gamma"), grad(p + "norm.beta"));
                } else {
                    dx = std::move(dnormed);
                }
                if (m.residual) dx += dh;
                dh = std::move(dx);
            }
            grad("enc.w") += matmul(transpose(tape.features), dh);
            grad("enc.b") += col_sum(dh);
            break;
        }
        case TrainModel::Kind::gcn: {
            const GcnModel& m = model.gcn;
            Matrix dstate = std::move(dtrunk);
            for (int t = m.stack.k - 1; t >= 0; --t) {
                Matrix dpre = dstate;
                for (int i = 0; i < dpre.rows; ++i)
                    for (int j = 0; j < dpre.cols; ++j)
                        dpre.at(i, j) *= activate_grad(tape.gcn_pre[t].at(i, j), m.stack.act);
                const int layer = m.stack.weight_shared ? 0 : t;
                const std::string p = "gcn.layer" + std::to_string(layer) + ".";
                grad(p + "b") += col_sum(dpre);
                grad(p + "w") += matmul(transpose(gso.apply(tape.gcn_states[t])), dpre);
                dstate = gso.apply(matmul(dpre, transpose(m.stack.weight(t)))) + dpre;
            }
            grad("enc.w") += matmul(transpose(tape.features), dstate);
            grad("enc.b") += col_sum(dstate);
            break;
        }
    }
    return grads;
}

AdamState init_adam(const std::vector<ParamView>& params, double lr, double weight_decay,
                    bool decoupled) {
    AdamState s;
    s.lr = lr;
    s.weight_decay = weight_decay;
    s.decoupled = decoupled;
    for (const ParamView& p : params) {
        s.m.emplace_back(p.tensor->rows, p.tensor->cols);
        s.v.emplace_back(p.tensor->rows, p.tensor->cols);
    }
    return s;
}

void adam_step(AdamState& state, const std::vector<ParamView>& params,
               const std::vector<Matrix>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    for (size_t i = 0; i < grads.size(); ++i) {
        if (!all_finite(grads[i]))
            throw std::runtime_error("adam_step: non-finite gradient for " + params[i].name);
        if (!params[i].tensor->same_shape(grads[i]))
            throw std::invalid_argument("adam_step: shape mismatch for " + params[i].name);
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, state.step);
    const double bc2 = 1.0 - std::pow(state.beta2, state.step);
    for (size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i].tensor;
        Matrix& m = state.m[i];
        Matrix& v = state.v[i];
        for (size_t e = 0; e < p.data.size(); ++e) {
            double g = grads[i].data[e];
            if (state.weight_decay != 0.0 && !state.decoupled) g += state.weight_decay * p.data[e];
            m.data[e] = state.beta1 * m.data[e] + (1.0 - state.beta1) * g;
            v.data[e] = state.beta2 * v.data[e] + (1.0 - state.beta2) * g * g;
            const double mhat = m.data[e] / bc1;
            const double vhat = v.data[e] / bc2;
            double update = state.lr * mhat / (std::sqrt(vhat) + state.eps);
            if (state.weight_decay != 0.0 && state.decoupled)
                update += state.lr * state.weight_decay * p.data[e];
            p.data[e] -= update;
        }
    }
}

namespace {

Pooling pooling_for_task(Task task) {
    return task == Task::diameter ? Pooling::mean : Pooling::none;
}

double record_mse(const Matrix& pred, const Matrix& targets) {
    double s = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - targets.data[i];
        s += d * d;
    }
    return s / pred.data.size();
}

struct PreparedRecord {
    const GppRecord* rec;
    const Gso* gso;
    const DiagGso* diag;  // null for non-fast models
};

double eval_mse(const TrainModel& model, const std::vector<PreparedRecord>& records) {
    if (records.empty()) throw std::invalid_argument("evaluate: empty split");
    double total = 0.0;
    GradientTape tape;
    for (const PreparedRecord& r : records) {
        const Matrix pred =
            model_forward(model, *r.gso, r.diag, r.rec->features, /*train_mode=*/false, nullptr,
                          tape);
        total += record_mse(pred, r.rec->targets);
    }
    return total / records.size();
}

Metrics metrics_from_mse(double mse) {
    Metrics m;
    m.mse = mse;
    m.log10_mse = std::log10(std::max(mse, 1e-12));
    return m;
}

}  // namespace

Metrics evaluate(const TrainModel& model, const std::vector<const GppRecord*>& records) {
    if (records.empty()) throw std::invalid_argument("evaluate: empty split");
    const bool fast = model.kind == TrainModel::Kind::fast;
    std::vector<Gso> gsos;
    std::vector<DiagGso> diags;
    gsos.reserve(records.size());
    std::vector<PreparedRecord> prepared;
    for (const GppRecord* r : records) {
        gsos.push_back(build_gso(r->graph));
        if (fast) diags.push_back(precompute_gso_eig(gsos.back()));
    }
    for (size_t i = 0; i < records.size(); ++i)
        prepared.push_back({records[i], &gsos[i], fast ? &diags[i] : nullptr});
    return metrics_from_mse(eval_mse(model, prepared));
}

TrainResult train_model(const TrainConfig& config, const GppDataset& dataset) {
    const auto train_recs = dataset.split("train");
    const auto val_recs = dataset.split("val");
    const auto test_recs = dataset.split("test");
    if (train_recs.empty() || val_recs.empty())
        throw std::invalid_argument("train_model: dataset is missing train or val records");
    if (config.epochs < 1) throw std::invalid_argument("train_model: epochs must be >= 1");
    if (config.dropout < 0.0 || config.dropout >= 1.0)
        throw std::invalid_argument("train_model: dropout must be in [0, 1)");

    const int in_dim = dataset.records.front().features.cols;
    const int out_dim = 1;
    TrainModel model = build_model(config, in_dim, out_dim, pooling_for_task(config.task));
    const bool fast = model.kind == TrainModel::Kind::fast;

    // Shared shift-operator caches (eigendecompositions keyed by fingerprint).
    std::vector<Gso> gsos;
    std::unordered_map<uint64_t, DiagGso> diag_cache;
    auto prepare = [&](const std::vector<const GppRecord*>& recs) {
        std::vector<PreparedRecord> out;
        for (const GppRecord* r : recs) {
            gsos.push_back(build_gso(r->graph));
            out.push_back({r, nullptr, nullptr});
        }
        return out;
    };
    gsos.reserve(dataset.records.size());
    std::vector<PreparedRecord> train_p = prepare(train_recs);
    std::vector<PreparedRecord> val_p = prepare(val_recs);
    std::vector<PreparedRecord> test_p = prepare(test_recs);
    {
        size_t gi = 0;
        for (auto* vec : {&train_p, &val_p, &test_p}) {
            for (PreparedRecord& pr : *vec) {
                pr.gso = &gsos[gi++];
                if (fast) {
                    auto [it, inserted] =
                        diag_cache.try_emplace(pr.gso->graph_fingerprint, DiagGso{});
                    if (inserted) it->second = precompute_gso_eig(*pr.gso);
                    pr.diag = &it->second;
                }
            }
        }
    }

    std::vector<ParamView> params = parameters(model);
    AdamState adam =
        init_adam(params, config.lr, config.weight_decay, config.decoupled_weight_decay);

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Matrix> best_params;
    int best_epoch = -1;

    std::vector<int> order(train_p.size());
    std::iota(order.begin(), order.end(), 0);

    GradientTape tape;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng(config.seed ^ (0xA5A5A5A5ull + 0x9e3779b97f4a7c15ull * (epoch + 1)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(static_cast<int>(i))]);
        Rng dropout_rng(config.seed ^ (0x5151ull + 31ull * epoch));

        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t stop = std::min(order.size(), start + config.batch_size);
            std::vector<Matrix> accum;
            for (const ParamView& p : params) accum.emplace_back(p.tensor->rows, p.tensor->cols);
            const double inv_batch = 1.0 / static_cast<double>(stop - start);
            for (size_t s = start; s < stop; ++s) {
                const PreparedRecord& r = train_p[order[s]];
                const Matrix pred = model_forward(model, *r.gso, r.diag, r.rec->features,
                                                  /*train_mode=*/true, &dropout_rng, tape);
                const double loss = record_mse(pred, r.rec->targets);
                if (!std::isfinite(loss))
                    throw std::runtime_error("train_model: loss diverged at epoch " +
                                             std::to_string(epoch));
                Matrix dpred(pred.rows, pred.cols);
                const double scl = 2.0 * inv_batch / pred.data.size();
                for (size_t e = 0; e < pred.data.size(); ++e)
                    dpred.data[e] = scl * (pred.data[e] - r.rec->targets.data[e]);
                std::vector<Matrix> g = model_backward(model, *r.gso, r.diag, tape, dpred);
                for (size_t e = 0; e < g.size(); ++e) accum[e] += g[e];
            }
            adam_step(adam, params, accum);
        }

        const double train_mse = eval_mse(model, train_p);
        const double val_mse = eval_mse(model, val_p);
        const auto t1 = std::chrono::steady_clock::now();
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_mse = train_mse;
        stats.val_mse = val_mse;
        stats.log10_val_mse = std::log10(std::max(val_mse, 1e-12));
        stats.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        result.history.push_back(stats);

        if (val_mse < best_val) {
            best_val = val_mse;
            best_epoch = epoch;
            best_params.clear();
            for (const ParamView& p : params) best_params.push_back(*p.tensor);
        }
        if (config.patience > 0 && epoch - best_epoch >= config.patience) break;
    }

    for (size_t i = 0; i < params.size(); ++i) *params[i].tensor = best_params[i];
    result.best_epoch = best_epoch;
    result.val = metrics_from_mse(best_val);
    if (!test_p.empty()) result.test = metrics_from_mse(eval_mse(model, test_p));
    result.model = std::move(model);
    return result;
}

void save_history_jsonl(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_history_jsonl: cannot open " + path);
    for (const EpochStats& e : history) {
        json row;
        row["epoch"] = e.epoch;
        row["train_mse"] = e.train_mse;
        row["val_mse"] = e.val_mse;
        row["log10_val_mse"] = e.log10_val_mse;
        row["wall_ms"] = e.wall_ms;
        f << row.dump() << "\n";
    }
}

void save_checkpoint(TrainModel& model, const TrainConfig& config, int in_dim, int out_dim,
                     const std::string& path) {
    std::vector<std::pair<std::string, const Matrix*>> tensors;
    for (const ParamView& p : parameters(model)) tensors.emplace_back(p.name, p.tensor);
    std::vector<std::pair<std::string, std::string>> meta;
    meta.emplace_back("task", task_to_string(config.task));
    meta.emplace_back("variant", variant_to_string(config.variant));
    meta.emplace_back("implementation",
                      config.implementation == Implementation::fast_merged ? "fast-merged"
                                                                           : "sequential");
    meta.emplace_back("hidden", std::to_string(config.hidden));
    meta.emplace_back("blocks", std::to_string(config.blocks));
    meta.emplace_back("k", std::to_string(config.k));
    meta.emplace_back("dropout", std::to_string(config.dropout));
    meta.emplace_back("in_dim", std::to_string(in_dim));
    meta.emplace_back("out_dim", std::to_string(out_dim));
    save_named_tensors(tensors, path, meta);
}

TrainModel load_checkpoint(const std::string& path, TrainConfig* config_out) {
    std::vector<std::pair<std::string, std::string>> meta;
    auto tensors = load_named_tensors(path, &meta);
    auto get = [&meta](const std::string& key) -> std::string {
        for (const auto& [k, v] : meta)
            if (k == key) return v;
        throw std::runtime_error("load_checkpoint: missing meta key " + key);
    };
    TrainConfig config;
    config.task = task_from_string(get("task"));
    config.variant = variant_from_string(get("variant"));
    config.implementation = implementation_from_string(get("implementation"));
    config.hidden = std::stoi(get("hidden"));
    config.blocks = std::stoi(get("blocks"));
    config.k = std::stoi(get("k"));
    config.dropout = std::stod(get("dropout"));
    const int in_dim = std::stoi(get("in_dim"));
    const int out_dim = std::stoi(get("out_dim"));

    TrainModel model = build_model(config, in_dim, out_dim, pooling_for_task(config.task));
    std::vector<ParamView> params = parameters(model);
    for (ParamView& p : params) {
        bool found = false;
        for (auto& [name, tensor] : tensors) {
            if (name == p.name) {
                if (!p.tensor->same_shape(tensor))
                    throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
                *p.tensor = tensor;
                found = true;
                break;
            }
        }
        if (!found) throw std::runtime_error("load_checkpoint: missing tensor " + p.name);
    }
    if (config_out) *config_out = config;
    return model;
}

}  // namespace mpssm
