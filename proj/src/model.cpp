#include "mpssm/model.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace mpssm {

using nlohmann::json;

DeepModel init_deep_model(int in_dim, int hidden, int out_dim, int blocks, int k,
                          double dropout, bool residual, bool use_norm, Pooling pooling,
                          Activation act, Rng& rng) {
    if (blocks < 1) throw std::invalid_argument("init_deep_model: need at least one block");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("init_deep_model: dropout must be in [0, 1)");
    DeepModel m;
    m.enc_w = glorot_uniform(in_dim, hidden, rng);
    m.enc_b = Matrix(1, hidden);
    for (int b = 0; b < blocks; ++b) {
        m.blocks.push_back(init_block_params(hidden, hidden, hidden, hidden, k, act, rng));
        LayerNormParams ln;
        ln.gamma = Matrix(1, hidden, 1.0);
        ln.beta = Matrix(1, hidden, 0.0);
        m.norms.push_back(std::move(ln));
    }
    m.head_w = glorot_uniform(hidden, out_dim, rng);
    m.head_b = Matrix(1, out_dim);
    m.dropout = dropout;
    m.residual = residual;
    m.use_norm = use_norm;
    m.pooling = pooling;
    return m;
}

Matrix layer_norm_forward(const Matrix& x, const LayerNormParams& p, Matrix* mean_out,
                          Matrix* inv_std_out) {
    const int n = x.rows, c = x.cols;
    Matrix y(n, c);
    Matrix mean(n, 1), inv_std(n, 1);
    for (int i = 0; i < n; ++i) {
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += x.at(i, j);
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = x.at(i, j) - mu;
            var += d * d;
        }
        var /= c;
        const double is = 1.0 / std::sqrt(var + 1e-5);
        mean.at(i, 0) = mu;
        inv_std.at(i, 0) = is;
        for (int j = 0; j < c; ++j)
            y.at(i, j) = p.gamma.at(0, j) * (x.at(i, j) - mu) * is + p.beta.at(0, j);
    }
    if (mean_out) *mean_out = std::move(mean);
    if (inv_std_out) *inv_std_out = std::move(inv_std);
    return y;
}

static Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix y = matmul(x, w);
    for (int i = 0; i < y.rows; ++i)
        for (int j = 0; j < y.cols; ++j) y.at(i, j) += b.at(0, j);
    return y;
}

Matrix deep_forward(const DeepModel& model, const Gso& gso, const Matrix& features,
                    bool train_mode, Rng* rng) {
    if (features.cols != model.enc_w.rows)
        throw std::invalid_argument("deep_forward: feature dimension does not match encoder");
    if (features.rows != gso.n)
        throw std::invalid_argument("deep_forward: node count mismatch");
    const bool drop = train_mode && model.dropout > 0.0;
    if (drop && rng == nullptr)
        throw std::invalid_argument("deep_forward: dropout in train mode needs an RNG");

    Matrix h = affine(features, model.enc_w, model.enc_b);
    for (size_t b = 0; b < model.blocks.size(); ++b) {
        Matrix x = model.use_norm ? layer_norm_forward(h, model.norms[b]) : h;
        const NodeSequence seq = make_input_sequence(x, model.blocks[b].k);
        Matrix y = block_forward(gso, model.blocks[b], seq).outputs[0];
        if (drop) {
            const double keep = 1.0 - model.dropout;
            for (double& v : y.data) v = (rng->uniform() < keep) ? v / keep : 0.0;
        }
        h = model.residual ? h + y : std::move(y);
    }
    Matrix out = affine(h, model.head_w, model.head_b);
    if (model.pooling == Pooling::mean) {
        Matrix pooled = col_sum(out);
        for (double& v : pooled.data) v /= out.rows;
        return pooled;
    }
    return out;
}

GcnStack init_gcn_stack(int c, int k, bool weight_shared, Activation act, Rng& rng) {
    if (k < 1) throw std::invalid_argument("init_gcn_stack: k must be >= 1");
    GcnStack s;
    s.weight_shared = weight_shared;
    s.act = act;
    s.k = k;
    const int layers = weight_shared ? 1 : k;
    for (int t = 0; t < layers; ++t) {
        s.weights.push_back(glorot_uniform(c, c, rng));
        s.biases.push_back(Matrix(1, c));
    }
    return s;
}

std::vector<Matrix> gcn_forward(const Gso& gso, const GcnStack& stack, const Matrix& features) {
    if (features.rows != gso.n)
        throw std::invalid_argument("gcn_forward: node count mismatch");
    if (features.cols != stack.weights[0].rows)
        throw std::invalid_argument("gcn_forward: channel mismatch");
    std::vector<Matrix> states;
    states.reserve(stack.k + 1);
    states.push_back(features);
    for (int t = 0; t < stack.k; ++t) {
        Matrix pre = matmul(gso.apply(states.back()), stack.weight(t));
        const Matrix& bias = stack.bias(t);
        for (int i = 0; i < pre.rows; ++i)
            for (int j = 0; j < pre.cols; ++j)
                pre.at(i, j) += bias.at(0, j) + states.back().at(i, j);
        states.push_back(activate(pre, stack.act));
    }
    return states;
}

void save_named_tensors(const std::vector<std::pair<std::string, const Matrix*>>& tensors,
                        const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& meta) {
    json doc;
    doc["format_version"] = 1;
    json jt = json::object();
    for (const auto& [name, m] : tensors) {
        json entry;
        entry["shape"] = {m->rows, m->cols};
        entry["data"] = m->data;
        jt[name] = std::move(entry);
    }
    doc["tensors"] = std::move(jt);
    json jm = json::object();
    for (const auto& [k, v] : meta) jm[k] = v;
    doc["meta"] = std::move(jm);
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_named_tensors: cannot open " + path);
    f << doc.dump(2) << "\n";
}

std::vector<std::pair<std::string, Matrix>> load_named_tensors(
    const std::string& path, std::vector<std::pair<std::string, std::string>>* meta) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_named_tensors: cannot open " + path);
    json doc;
    f >> doc;
    if (doc.at("format_version").get<int>() != 1)
        throw std::runtime_error("load_named_tensors: unsupported format version");
    std::vector<std::pair<std::string, Matrix>> out;
    for (const auto& [name, entry] : doc.at("tensors").items()) {
        Matrix m(entry.at("shape")[0].get<int>(), entry.at("shape")[1].get<int>());
        const auto& data = entry.at("data");
        if (data.size() != m.data.size())
            throw std::runtime_error("load_named_tensors: shape/data mismatch for " + name);
        for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = data[i].get<double>();
        out.emplace_back(name, std::move(m));
    }
    if (meta) {
        meta->clear();
        for (const auto& [k, v] : doc.at("meta").items())
            meta->emplace_back(k, v.get<std::string>());
    }
    return out;
}

}  // namespace mpssm
