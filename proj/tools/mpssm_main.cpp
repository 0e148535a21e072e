// Command-line workbench: data generation, training, evaluation, theorem
// verification, runtime benchmarking, and sensitivity export.
//
// Exit codes: 0 success, 1 usage error, 2 verification failure, 3 runtime error.

#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpssm/checks.hpp"
#include "mpssm/dataset.hpp"
#include "mpssm/sensitivity.hpp"
#include "mpssm/train.hpp"

using nlohmann::json;
using namespace mpssm;

namespace {

const std::set<std::string> kConfigKeys = {
    "train.lr",        "train.weight-decay", "train.decoupled-weight-decay",
    "train.dropout",   "train.epochs",       "train.patience",
    "train.batch",     "train.seed",         "train.implementation",
    "model.k",         "model.hidden",       "model.blocks",
    "model.variant",   "model.r-min",        "model.r-max",
    "model.gcn-init-scale"};

void apply_config_entry(TrainConfig& config, const std::string& key, const json& value) {
    if (!kConfigKeys.count(key)) throw CLI::ValidationError("unknown config key: " + key);
    auto as_double = [&] { return value.is_string() ? std::stod(value.get<std::string>())
                                                    : value.get<double>(); };
    auto as_int = [&] { return value.is_string() ? std::stoi(value.get<std::string>())
                                                 : value.get<int>(); };
    if (key == "train.lr") config.lr = as_double();
    else if (key == "train.weight-decay") config.weight_decay = as_double();
    else if (key == "train.decoupled-weight-decay") config.decoupled_weight_decay = as_int() != 0;
    else if (key == "train.dropout") config.dropout = as_double();
    else if (key == "train.epochs") config.epochs = as_int();
    else if (key == "train.patience") config.patience = as_int();
    else if (key == "train.batch") config.batch_size = as_int();
    else if (key == "train.seed") config.seed = static_cast<uint64_t>(as_int());
    else if (key == "train.implementation")
        config.implementation = implementation_from_string(value.get<std::string>());
    else if (key == "model.k") config.k = as_int();
    else if (key == "model.hidden") config.hidden = as_int();
    else if (key == "model.blocks") config.blocks = as_int();
    else if (key == "model.variant") config.variant = variant_from_string(value.get<std::string>());
    else if (key == "model.r-min") config.r_min = as_double();
    else if (key == "model.r-max") config.r_max = as_double();
    else if (key == "model.gcn-init-scale") config.gcn_init_scale = as_double();
}

TrainConfig load_train_config(const std::string& config_path,
                              const std::vector<std::string>& overrides) {
    TrainConfig config;
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw CLI::ValidationError("cannot open config file: " + config_path);
        json doc;
        f >> doc;
        for (const auto& [key, value] : doc.items()) apply_config_entry(config, key, value);
    }
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("override must be key=value: " + kv);
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        json value;
        if (key == "train.implementation" || key == "model.variant") value = raw;
        else value = raw;  // numeric strings handled by apply_config_entry
        apply_config_entry(config, key, value);
    }
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"message-passing state-space model workbench"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic property-prediction dataset");
    std::string gen_task = "diameter", gen_out = "dataset.jsonl";
    int gen_count = 500, gen_nlo = 25, gen_nhi = 35;
    uint64_t gen_seed = 0;
    std::vector<double> gen_split{0.7, 0.15, 0.15};
    gen->add_option("--task", gen_task, "diameter | sssp | eccentricity");
    gen->add_option("--count", gen_count, "number of graphs");
    gen->add_option("--n-lo", gen_nlo, "minimum node count");
    gen->add_option("--n-hi", gen_nhi, "maximum node count");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--split", gen_split, "train/val/test fractions")->expected(3);
    gen->add_option("--out", gen_out, "output JSON-lines path");

    // train
    auto* tr = app.add_subcommand("train", "train a model on a generated dataset");
    std::string tr_data, tr_task = "diameter", tr_config, tr_out = "model.json", tr_history;
    std::vector<std::string> tr_set;
    tr->add_option("--data", tr_data, "dataset JSON-lines path")->required();
    tr->add_option("--task", tr_task, "dataset task");
    tr->add_option("--config", tr_config, "flat JSON config with dotted keys");
    tr->add_option("--set", tr_set, "config overrides, key=value (win over the file)");
    tr->add_option("--out", tr_out, "checkpoint output path");
    tr->add_option("--history", tr_history, "training-history JSON-lines path");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    std::string ev_data, ev_model, ev_split = "test";
    ev->add_option("--data", ev_data, "dataset JSON-lines path")->required();
    ev->add_option("--model", ev_model, "checkpoint path")->required();
    ev->add_option("--split", ev_split, "train | val | test");

    // verify
    auto* vf = app.add_subcommand("verify", "run the theorem verification suite");
    uint64_t vf_seed = 1;
    bool vf_gradients = false, vf_training = false, vf_locality = false, vf_all = false;
    vf->add_option("--seed", vf_seed, "suite seed");
    vf->add_flag("--gradients", vf_gradients, "include the gradient-correctness check");
    vf->add_flag("--training", vf_training, "include the directional training run (slow)");
    vf->add_flag("--locality", vf_locality, "include receptive-field/equivariance checks");
    vf->add_flag("--all", vf_all, "run every check reachable from verify");

    // bench
    auto* bn = app.add_subcommand("bench", "sequential vs fast runtime comparison");
    int bn_n = 100, bn_c = 32, bn_reps = 5;
    uint64_t bn_seed = 1;
    std::vector<int> bn_k{10, 100, 500, 1000};
    std::string bn_out;
    bn->add_option("--n", bn_n, "node count");
    bn->add_option("--c", bn_c, "hidden channels");
    bn->add_option("--k", bn_k, "recurrence depths");
    bn->add_option("--reps", bn_reps, "repetitions (medians after 2 warmups)");
    bn->add_option("--seed", bn_seed, "seed");
    bn->add_option("--out", bn_out, "CSV output path (stdout when omitted)");

    // jacobian
    auto* jc = app.add_subcommand("jacobian", "dump the per-pair sensitivity matrix as CSV");
    std::string jc_graph, jc_out = "sensitivity.csv";
    int jc_delta = 4, jc_c = 4;
    uint64_t jc_wseed = 0;
    jc->add_option("--graph", jc_graph, "graph file (edge-list text format)")->required();
    jc->add_option("--delta", jc_delta, "recurrence depth");
    jc->add_option("--c", jc_c, "channel count of the recurrence weight");
    jc->add_option("--w-seed", jc_wseed, "random W seed (0 = identity)");
    jc->add_option("--out", jc_out, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) {
            const GppDataset ds =
                gen_gpp_dataset(task_from_string(gen_task), gen_count, gen_nlo, gen_nhi, gen_seed,
                                {gen_split[0], gen_split[1], gen_split[2]});
            save_dataset_jsonl(ds, gen_out);
            std::cout << "wrote " << ds.records.size() << " records to " << gen_out << "\n";
            return 0;
        }
        if (*tr) {
            TrainConfig config = load_train_config(tr_config, tr_set);
            config.task = task_from_string(tr_task);
            const GppDataset ds = load_dataset_jsonl(tr_data, config.task);
            TrainResult result = train_model(config, ds);
            save_checkpoint(result.model, config, ds.records.front().features.cols, 1, tr_out);
            if (!tr_history.empty()) save_history_jsonl(result.history, tr_history);
            json summary;
            summary["best_epoch"] = result.best_epoch;
            summary["val_mse"] = result.val.mse;
            summary["val_log10_mse"] = result.val.log10_mse;
            summary["test_mse"] = result.test.mse;
            summary["test_log10_mse"] = result.test.log10_mse;
            std::cout << summary.dump() << "\n";
            return 0;
        }
        if (*ev) {
            TrainConfig config;
            TrainModel model = load_checkpoint(ev_model, &config);
            const GppDataset ds = load_dataset_jsonl(ev_data, config.task);
            const Metrics m = evaluate(model, ds.split(ev_split));
            json out;
            out["split"] = ev_split;
            out["mse"] = m.mse;
            out["log10_mse"] = m.log10_mse;
            std::cout << out.dump() << "\n";
            return 0;
        }
        if (*vf) {
            std::vector<CheckResult> results;
            results.push_back(check_jacobian_exactness(vf_seed));
            results.push_back(check_spectrum_lemma(vf_seed));
            results.push_back(check_three_way_equivalence(vf_seed));
            results.push_back(check_global_bound(vf_seed));
            results.push_back(check_min_bound_deep_regime(vf_seed));
            results.push_back(check_vanishing_rate(vf_seed));
            if (vf_gradients || vf_all) results.push_back(check_gradient_correctness(vf_seed));
            if (vf_locality || vf_all) results.push_back(check_locality_equivariance(vf_seed));
            if (vf_training || vf_all) results.push_back(check_training_directional(vf_seed));
            bool all_pass = true;
            for (const CheckResult& r : results) {
                std::cout << format_check(r) << "\n";
                all_pass = all_pass && r.pass;
            }
            return all_pass ? 0 : 2;
        }
        if (*bn) {
            const std::vector<BenchRow> rows = bench_runtime(bn_n, bn_c, bn_k, bn_reps, bn_seed);
            std::ostringstream csv;
            csv << "k,sequential_ms,fast_ms,max_output_dev\n";
            for (const BenchRow& row : rows) {
                csv << row.k << "," << row.sequential_ms << "," << row.fast_ms << ","
                    << row.max_output_dev << "\n";
                std::cout << "k=" << row.k << "  sequential " << row.sequential_ms << " ms  fast "
                          << row.fast_ms << " ms  max dev " << row.max_output_dev << "\n";
            }
            if (!bn_out.empty()) {
                std::ofstream f(bn_out);
                if (!f) throw std::runtime_error("cannot open " + bn_out);
                f << csv.str();
            } else {
                std::cout << csv.str();
            }
            return 0;
        }
        if (*jc) {
            const Graph graph = load_graph(jc_graph);
            Matrix w;
            if (jc_wseed == 0) {
                w = Matrix::identity(jc_c);
            } else {
                Rng rng(jc_wseed);
                w = random_matrix(jc_c, jc_c, rng, 1.0 / std::sqrt(jc_c));
            }
            const SensitivityReport report = sensitivity_profile(graph, w, jc_delta);
            std::ofstream f(jc_out);
            if (!f) throw std::runtime_error("cannot open " + jc_out);
            f << report.pair_matrix_csv();
            std::cout << report.to_json() << "\n";
            std::cout << report.to_text();
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
