#include "mpssm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace mpssm {

using nlohmann::json;

Task task_from_string(const std::string& s) {
    if (s == "diameter") return Task::diameter;
    if (s == "sssp") return Task::sssp;
    if (s == "eccentricity") return Task::eccentricity;
    throw std::invalid_argument("unknown task: " + s);
}

std::string task_to_string(Task t) {
    switch (t) {
        case Task::diameter: return "diameter";
        case Task::sssp: return "sssp";
        case Task::eccentricity: return "eccentricity";
    }
    return "?";
}

std::vector<const GppRecord*> GppDataset::split(const std::string& name) const {
    std::vector<const GppRecord*> out;
    for (const auto& r : records)
        if (r.split == name) out.push_back(&r);
    return out;
}

GppDataset gen_gpp_dataset(Task task, int count, int n_lo, int n_hi, uint64_t seed,
                           std::array<double, 3> split_fractions) {
    if (count <= 0) throw std::invalid_argument("gen_gpp_dataset: count must be positive");
    if (n_lo > n_hi || n_lo < 2)
        throw std::invalid_argument("gen_gpp_dataset: invalid node range");
    const double fsum = split_fractions[0] + split_fractions[1] + split_fractions[2];
    if (std::fabs(fsum - 1.0) > 1e-9)
        throw std::invalid_argument("gen_gpp_dataset: split fractions must sum to 1");

    // Largest-remainder apportionment of the split counts.
    std::array<int, 3> counts{};
    std::array<double, 3> rem{};
    int assigned = 0;
    for (int s = 0; s < 3; ++s) {
        const double exact = count * split_fractions[s];
        counts[s] = static_cast<int>(std::floor(exact + 1e-9));
        rem[s] = exact - counts[s];
        assigned += counts[s];
    }
    while (assigned < count) {
        const int s = static_cast<int>(std::max_element(rem.begin(), rem.end()) - rem.begin());
        ++counts[s];
        rem[s] = -1.0;
        ++assigned;
    }

    Rng rng(seed);
    GppDataset ds;
    ds.task = task;
    ds.records.reserve(count);
    const char* names[3] = {"train", "val", "test"};
    for (int idx = 0; idx < count; ++idx) {
        const int n = n_lo + rng.uniform_int(n_hi - n_lo + 1);
        const double p = rng.uniform(0.1, 0.3);
        const uint64_t gseed = rng.next();
        Graph g = gen_erdos_renyi(n, p, gseed, /*require_connected=*/true);
        const StructuralOracle oracle = bfs_oracle(g);

        const int channels = (task == Task::sssp) ? 2 : 1;
        Matrix feats(n, channels);
        for (int v = 0; v < n; ++v) feats.at(v, 0) = rng.uniform();

        Matrix targets;
        switch (task) {
            case Task::diameter:
                targets = Matrix(1, 1);
                targets.at(0, 0) = static_cast<double>(oracle.diameter);
                break;
            case Task::sssp: {
                const int src = rng.uniform_int(n);
                for (int v = 0; v < n; ++v) feats.at(v, 1) = (v == src) ? 1.0 : 0.0;
                targets = Matrix(n, 1);
                for (int v = 0; v < n; ++v)
                    targets.at(v, 0) = static_cast<double>(oracle.at(src, v));
                break;
            }
            case Task::eccentricity:
                targets = Matrix(n, 1);
                for (int v = 0; v < n; ++v) targets.at(v, 0) = static_cast<double>(oracle.ecc[v]);
                break;
        }

        int split_idx = 0;
        int cum = counts[0];
        while (split_idx < 2 && idx >= cum) cum += counts[++split_idx];
        ds.records.push_back({std::move(g), std::move(feats), std::move(targets),
                              names[split_idx]});
    }
    return ds;
}

void save_dataset_jsonl(const GppDataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_dataset_jsonl: cannot open " + path);
    for (const auto& r : ds.records) {
        json rec;
        json edges = json::array();
        for (const auto& [i, j] : r.graph.edges) edges.push_back({i, j});
        rec["edges"] = std::move(edges);
        json feats = json::array();
        for (int i = 0; i < r.features.rows; ++i) {
            json row = json::array();
            for (int j = 0; j < r.features.cols; ++j) row.push_back(r.features.at(i, j));
            feats.push_back(std::move(row));
        }
        rec["features"] = std::move(feats);
        if (r.targets.rows == 1 && r.targets.cols == 1) {
            rec["targets"] = r.targets.at(0, 0);
        } else {
            json t = json::array();
            for (int i = 0; i < r.targets.rows; ++i) t.push_back(r.targets.at(i, 0));
            rec["targets"] = std::move(t);
        }
        rec["split"] = r.split;
        f << rec.dump() << "\n";
    }
}

GppDataset load_dataset_jsonl(const std::string& path, Task task) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_dataset_jsonl: cannot open " + path);
    GppDataset ds;
    ds.task = task;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const json rec = json::parse(line);
        const auto& jfeats = rec.at("features");
        const int n = static_cast<int>(jfeats.size());
        const int c = n > 0 ? static_cast<int>(jfeats[0].size()) : 0;
        Matrix feats(n, c);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) feats.at(i, j) = jfeats[i][j].get<double>();
        std::vector<std::pair<int, int>> edges;
        for (const auto& e : rec.at("edges"))
            edges.emplace_back(e[0].get<int>(), e[1].get<int>());
        Graph g = Graph::from_edges(n, std::move(edges));
        Matrix targets;
        const auto& jt = rec.at("targets");
        if (jt.is_number()) {
            targets = Matrix(1, 1);
            targets.at(0, 0) = jt.get<double>();
        } else {
            targets = Matrix(static_cast<int>(jt.size()), 1);
            for (int i = 0; i < targets.rows; ++i) targets.at(i, 0) = jt[i].get<double>();
        }
        ds.records.push_back({std::move(g), std::move(feats), std::move(targets),
                              rec.at("split").get<std::string>()});
    }
    return ds;
}

TemporalDataset gen_temporal_dataset(const Graph& graph, int horizon, int length, uint64_t seed,
                                     double noise_scale) {
    if (horizon < 1 || length <= horizon)
        throw std::invalid_argument("gen_temporal_dataset: need length > horizon >= 1");
    const Gso gso = build_gso(graph);
    Rng rng(seed);
    Matrix x(graph.n, 1);
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);

    std::vector<Matrix> signal;
    signal.reserve(length);
    signal.push_back(x);
    for (int t = 1; t < length; ++t) {
        Matrix next = gso.apply(signal.back());
        if (noise_scale > 0.0)
            for (double& v : next.data) v += noise_scale * rng.normal();
        signal.push_back(std::move(next));
    }

    TemporalDataset ds;
    ds.graph = graph;
    ds.horizon = horizon;
    for (int t = 0; t + horizon < length; ++t) {
        ds.inputs.push_back(signal[t]);
        ds.targets.push_back(signal[t + horizon]);
    }
    return ds;
}

}  // namespace mpssm
