#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "mpssm/train.hpp"

using namespace mpssm;

namespace {

double mse_of(const Matrix& pred, const Matrix& targets) {
    double s = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - targets.data[i];
        s += d * d;
    }
    return s / pred.data.size();
}

Matrix loss_grad_of(const Matrix& pred, const Matrix& targets) {
    Matrix g(pred.rows, pred.cols);
    for (size_t i = 0; i < pred.data.size(); ++i)
        g.data[i] = 2.0 * (pred.data[i] - targets.data[i]) / pred.data.size();
    return g;
}

struct Fixture {
    Graph graph = gen_erdos_renyi(10, 0.35, 11, true);
    Gso gso = build_gso(graph);
    DiagGso diag = precompute_gso_eig(gso);
    Matrix features;
    Matrix targets;
    Fixture() {
        Rng rng(99);
        features = random_matrix(10, 2, rng, 1.0);
        targets = random_matrix(10, 1, rng, 1.0);
    }
};

}  // namespace

TEST_CASE("analytic gradients match central differences on every parameter") {
    Fixture fx;
    for (const Implementation impl : {Implementation::sequential, Implementation::fast_merged}) {
        TrainConfig config;
        config.task = Task::eccentricity;
        config.variant = ModelVariant::mpssm;
        config.implementation = impl;
        config.hidden = 4;
        config.k = 3;
        config.blocks = 2;
        config.seed = 17;
        TrainModel model = build_model(config, 2, 1, Pooling::none);

        GradientTape tape;
        const Matrix pred = model_forward(model, fx.gso, &fx.diag, fx.features, false, nullptr, tape);
        const std::vector<Matrix> grads =
            model_backward(model, fx.gso, &fx.diag, tape, loss_grad_of(pred, fx.targets));

        auto loss_now = [&]() {
            GradientTape t;
            return mse_of(model_forward(model, fx.gso, &fx.diag, fx.features, false, nullptr, t),
                          fx.targets);
        };
        std::vector<ParamView> params = parameters(model);
        const double h = 1e-5;
        double worst = 0.0;
        for (size_t p = 0; p < params.size(); ++p) {
            for (size_t e = 0; e < params[p].tensor->data.size(); ++e) {
                double& slot = params[p].tensor->data[e];
                const double keep = slot;
                slot = keep + h;
                const double lp = loss_now();
                slot = keep - h;
                const double lm = loss_now();
                slot = keep;
                const double fd = (lp - lm) / (2 * h);
                const double err = std::fabs(fd - grads[p].data[e]) /
                                   std::max({std::fabs(fd), std::fabs(grads[p].data[e]), 1e-6});
                worst = std::max(worst, err);
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("gcn-family gradients match central differences") {
    Fixture fx;
    for (const ModelVariant variant :
         {ModelVariant::gcn, ModelVariant::linear_gcn, ModelVariant::linear_gcn_ws}) {
        TrainConfig config;
        config.task = Task::diameter;
        config.variant = variant;
        config.hidden = 4;
        config.k = 3;
        config.seed = 23;
        TrainModel model = build_model(config, 2, 1, Pooling::mean);

        GradientTape tape;
        Matrix target(1, 1);
        target.at(0, 0) = 2.5;
        const Matrix pred = model_forward(model, fx.gso, nullptr, fx.features, false, nullptr, tape);
        const std::vector<Matrix> grads =
            model_backward(model, fx.gso, nullptr, tape, loss_grad_of(pred, target));
        auto loss_now = [&]() {
            GradientTape t;
            return mse_of(model_forward(model, fx.gso, nullptr, fx.features, false, nullptr, t),
                          target);
        };
        std::vector<ParamView> params = parameters(model);
        double worst = 0.0;
        for (size_t p = 0; p < params.size(); ++p) {
            for (size_t e = 0; e < params[p].tensor->data.size(); ++e) {
                double& slot = params[p].tensor->data[e];
                const double keep = slot;
                slot = keep + 1e-5;
                const double lp = loss_now();
                slot = keep - 1e-5;
                const double lm = loss_now();
                slot = keep;
                const double fd = (lp - lm) / 2e-5;
                worst = std::max(worst, std::fabs(fd - grads[p].data[e]) /
                                            std::max({std::fabs(fd), std::fabs(grads[p].data[e]),
                                                      1e-6}));
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("gradients with dropout are exact when the tape masks are replayed") {
    Fixture fx;
    TrainConfig config;
    config.variant = ModelVariant::mpssm;
    config.hidden = 4;
    config.k = 2;
    config.blocks = 2;
    config.dropout = 0.4;
    config.seed = 31;
    TrainModel model = build_model(config, 2, 1, Pooling::none);

    Rng drop_rng(7);
    GradientTape tape;
    const Matrix pred =
        model_forward(model, fx.gso, nullptr, fx.features, true, &drop_rng, tape);
    // Replaying the tape reproduces the prediction bit for bit.
    GradientTape replay_tape;
    const Matrix replayed =
        model_forward(model, fx.gso, nullptr, fx.features, true, nullptr, replay_tape, &tape);
    CHECK(max_abs_diff(pred, replayed) == 0.0);

    const std::vector<Matrix> grads =
        model_backward(model, fx.gso, nullptr, tape, loss_grad_of(pred, fx.targets));
    auto loss_now = [&]() {
        GradientTape t;
        return mse_of(
            model_forward(model, fx.gso, nullptr, fx.features, true, nullptr, t, &tape),
            fx.targets);
    };
    std::vector<ParamView> params = parameters(model);
    double worst = 0.0;
    for (size_t p = 0; p < params.size(); ++p) {
        for (size_t e = 0; e < params[p].tensor->data.size(); ++e) {
            double& slot = params[p].tensor->data[e];
            const double keep = slot;
            slot = keep + 1e-5;
            const double lp = loss_now();
            slot = keep - 1e-5;
            const double lm = loss_now();
            slot = keep;
            const double fd = (lp - lm) / 2e-5;
            worst = std::max(worst, std::fabs(fd - grads[p].data[e]) /
                                        std::max({std::fabs(fd), std::fabs(grads[p].data[e]),
                                                  1e-6}));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("zero loss gradient gives zero parameter gradients; scaling is linear") {
    Fixture fx;
    TrainConfig config;
    config.variant = ModelVariant::mpssm;
    config.hidden = 4;
    config.k = 2;
    config.blocks = 1;
    config.seed = 37;
    TrainModel model = build_model(config, 2, 1, Pooling::none);
    GradientTape tape;
    const Matrix pred = model_forward(model, fx.gso, nullptr, fx.features, false, nullptr, tape);

    const std::vector<Matrix> zero =
        model_backward(model, fx.gso, nullptr, tape, Matrix(pred.rows, pred.cols));
    for (const Matrix& g : zero) CHECK(max_abs(g) == 0.0);

    const Matrix lg = loss_grad_of(pred, fx.targets);
    const std::vector<Matrix> g1 = model_backward(model, fx.gso, nullptr, tape, lg);
    const std::vector<Matrix> g3 = model_backward(model, fx.gso, nullptr, tape, scale(lg, 3.0));
    for (size_t p = 0; p < g1.size(); ++p)
        CHECK(max_abs_diff(scale(g1[p], 3.0), g3[p]) <= 1e-12 * std::max(1.0, max_abs(g3[p])));
}

TEST_CASE("adam first step magnitude, zero-gradient fixpoint, non-finite rejection") {
    Rng rng(41);
    Matrix p0 = random_matrix(3, 3, rng, 1.0);
    TrainModel dummy;  // not used; drive adam directly on raw views
    (void)dummy;
    Matrix param = p0;
    std::vector<ParamView> views{{"p", &param}};
    AdamState adam = init_adam(views, 1e-3, 0.0, false);

    Matrix g = random_matrix(3, 3, rng, 1.0);
    for (double& v : g.data) v += (v >= 0 ? 0.5 : -0.5);  // keep away from 0
    adam_step(adam, views, {g});
    for (size_t e = 0; e < param.data.size(); ++e) {
        const double moved = std::fabs(param.data[e] - p0.data[e]);
        CHECK(moved == doctest::Approx(1e-3).epsilon(1e-6));
    }

    Matrix before = param;
    AdamState fresh = init_adam(views, 1e-3, 0.0, false);
    adam_step(fresh, views, {Matrix(3, 3)});
    CHECK(max_abs_diff(param, before) == 0.0);

    Matrix bad(3, 3);
    bad.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(fresh, views, {bad}), std::runtime_error);
}

TEST_CASE("training with lr = 0 leaves parameters unchanged") {
    const GppDataset ds = gen_gpp_dataset(Task::diameter, 8, 8, 12, 3, {0.5, 0.25, 0.25});
    TrainConfig config;
    config.task = Task::diameter;
    config.variant = ModelVariant::mpssm;
    config.hidden = 4;
    config.k = 2;
    config.blocks = 1;
    config.lr = 0.0;
    config.epochs = 1;
    config.seed = 5;
    TrainModel reference = build_model(config, 1, 1, Pooling::mean);
    TrainResult result = train_model(config, ds);
    std::vector<ParamView> a = parameters(reference);
    std::vector<ParamView> b = parameters(result.model);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].tensor->data == b[i].tensor->data);
    CHECK(result.history.size() == 1);
}

TEST_CASE("training is deterministic given (config, seed, dataset)") {
    const GppDataset ds = gen_gpp_dataset(Task::diameter, 12, 8, 12, 7, {0.5, 0.25, 0.25});
    TrainConfig config;
    config.task = Task::diameter;
    config.variant = ModelVariant::mpssm;
    config.hidden = 6;
    config.k = 3;
    config.blocks = 2;
    config.dropout = 0.2;
    config.epochs = 4;
    config.seed = 13;
    const TrainResult r1 = train_model(config, ds);
    const TrainResult r2 = train_model(config, ds);
    CHECK(r1.val.mse == r2.val.mse);
    CHECK(r1.test.mse == r2.test.mse);
    for (size_t e = 0; e < r1.history.size(); ++e)
        CHECK(r1.history[e].train_mse == r2.history[e].train_mse);
}

TEST_CASE("single-record overfit collapses the loss") {
    GppDataset ds = gen_gpp_dataset(Task::diameter, 3, 8, 10, 21, {0.34, 0.33, 0.33});
    // Overfit the one training record; val/test exist to satisfy the contract.
    TrainConfig config;
    config.task = Task::diameter;
    config.variant = ModelVariant::mpssm;
    config.hidden = 8;
    config.k = 4;
    config.blocks = 2;
    config.lr = 3e-3;
    config.epochs = 200;
    config.patience = 0;  // disabled
    config.seed = 2;
    const TrainResult r = train_model(config, ds);
    REQUIRE(r.history.size() == 200);
    CHECK(r.history[199].train_mse < 0.01 * r.history[0].train_mse);
}

TEST_CASE("evaluate: clamping, hand-computed MSE, order invariance") {
    const GppDataset ds = gen_gpp_dataset(Task::diameter, 6, 8, 10, 29, {0.5, 0.25, 0.25});
    // A model with all-zero head predicts exactly 0 for every graph.
    TrainConfig config;
    config.task = Task::diameter;
    config.variant = ModelVariant::mpssm;
    config.hidden = 4;
    config.k = 2;
    config.blocks = 1;
    config.seed = 3;
    TrainModel model = build_model(config, 1, 1, Pooling::mean);
    for (ParamView& p : parameters(model))
        if (p.name == "head.w" || p.name == "head.b")
            for (double& v : p.tensor->data) v = 0.0;

    auto recs = ds.split("train");
    double expect = 0.0;
    for (const GppRecord* r : recs) expect += r->targets.at(0, 0) * r->targets.at(0, 0);
    expect /= recs.size();
    const Metrics m = evaluate(model, recs);
    CHECK(m.mse == doctest::Approx(expect).epsilon(1e-12));
    CHECK(m.log10_mse == doctest::Approx(std::log10(expect)).epsilon(1e-12));

    std::vector<const GppRecord*> reversed(recs.rbegin(), recs.rend());
    CHECK(evaluate(model, reversed).mse == doctest::Approx(m.mse).epsilon(1e-15));

    // Zero targets against the zero-head model: exact predictions, and the
    // reported log10 clamps at -12.
    GppDataset zeros;
    zeros.task = Task::diameter;
    GppRecord rec;
    rec.graph = gen_path(3);
    rec.features = Matrix(3, 1, 0.5);
    rec.targets = Matrix(1, 1, 0.0);
    rec.split = "test";
    zeros.records.push_back(std::move(rec));
    const Metrics perfect = evaluate(model, zeros.split("test"));
    CHECK(perfect.mse == 0.0);
    CHECK(perfect.log10_mse == doctest::Approx(-12.0));
}

TEST_CASE("exact-mode fast gradients agree with sequential gradients on shared parameters") {
    Fixture fx;
    TrainConfig config;
    config.variant = ModelVariant::mpssm;
    config.hidden = 5;
    config.k = 4;
    config.blocks = 2;
    config.seed = 47;
    TrainModel seq = build_model(config, 2, 1, Pooling::none);

    TrainModel fast;
    fast.kind = TrainModel::Kind::fast;
    fast.fast.enc_w = seq.deep.enc_w;
    fast.fast.enc_b = seq.deep.enc_b;
    fast.fast.head_w = seq.deep.head_w;
    fast.fast.head_b = seq.deep.head_b;
    fast.fast.dropout = 0.0;
    fast.fast.residual = seq.deep.residual;
    fast.fast.use_norm = seq.deep.use_norm;
    fast.fast.pooling = seq.deep.pooling;
    fast.fast.norms = seq.deep.norms;
    for (const BlockParams& b : seq.deep.blocks) {
        BlockParams damped = b;
        damped.w = scale(b.w, 0.5);
        fast.fast.blocks.push_back(to_exact_fast(damped));
    }
    TrainModel seq_damped = seq;
    for (BlockParams& b : seq_damped.deep.blocks) b.w = scale(b.w, 0.5);

    GradientTape ts, tf;
    const Matrix ps = model_forward(seq_damped, fx.gso, nullptr, fx.features, false, nullptr, ts);
    const Matrix pf = model_forward(fast, fx.gso, &fx.diag, fx.features, false, nullptr, tf);
    CHECK(max_abs_diff(ps, pf) < 1e-8);

    const Matrix lg = loss_grad_of(ps, fx.targets);
    const std::vector<Matrix> gs = model_backward(seq_damped, fx.gso, nullptr, ts, lg);
    const std::vector<Matrix> gf = model_backward(fast, fx.gso, &fx.diag, tf, lg);

    auto find = [](TrainModel& m, const std::vector<Matrix>& g, const std::string& name) {
        std::vector<ParamView> ps2 = parameters(m);
        for (size_t i = 0; i < ps2.size(); ++i)
            if (ps2[i].name == name) return g[i];
        throw std::runtime_error("missing " + name);
    };
    const std::vector<std::pair<std::string, std::string>> shared = {
        {"enc.w", "enc.w"},
        {"enc.b", "enc.b"},
        {"head.w", "head.w"},
        {"head.b", "head.b"},
        {"block0.norm.gamma", "block0.norm.gamma"},
        {"block1.norm.beta", "block1.norm.beta"},
        {"block0.mlp.w2", "block0.w2"},
        {"block1.mlp.w2", "block1.w2"},
        {"block0.mlp.b1", "block0.b1"},
        {"block1.mlp.b2", "block1.b2"},
    };
    for (const auto& [sname, fname] : shared) {
        const Matrix a = find(seq_damped, gs, sname);
        const Matrix b = find(fast, gf, fname);
        const double denom = std::max({max_abs(a), max_abs(b), 1e-9});
        CHECK(max_abs_diff(a, b) / denom < 1e-3);
    }
}

TEST_CASE("checkpoint round trip preserves the model and config") {
    const GppDataset ds = gen_gpp_dataset(Task::sssp, 8, 8, 10, 51, {0.5, 0.25, 0.25});
    TrainConfig config;
    config.task = Task::sssp;
    config.variant = ModelVariant::mpssm;
    config.implementation = Implementation::fast_merged;
    config.hidden = 5;
    config.k = 3;
    config.blocks = 2;
    config.epochs = 2;
    config.seed = 9;
    TrainResult r = train_model(config, ds);
    const std::string path = "test_checkpoint_roundtrip.json";
    save_checkpoint(r.model, config, 2, 1, path);
    TrainConfig loaded_config;
    TrainModel loaded = load_checkpoint(path, &loaded_config);
    CHECK(loaded_config.k == 3);
    CHECK(loaded_config.hidden == 5);
    CHECK(loaded.kind == TrainModel::Kind::fast);
    const Metrics a = evaluate(r.model, ds.split("test"));
    const Metrics b = evaluate(loaded, ds.split("test"));
    CHECK(a.mse == doctest::Approx(b.mse).epsilon(1e-15));
    std::remove(path.c_str());
}

TEST_CASE("train_model rejects invalid inputs") {
    const GppDataset ds = gen_gpp_dataset(Task::diameter, 4, 6, 8, 1, {1.0, 0.0, 0.0});
    TrainConfig config;
    config.task = Task::diameter;
    CHECK_THROWS_AS(train_model(config, ds), std::invalid_argument);  // empty val split
}
