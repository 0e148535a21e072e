#pragma once

#include <array>
#include <string>
#include <vector>

#include "mpssm/graph.hpp"
#include "mpssm/matrix.hpp"

namespace mpssm {

enum class Task { diameter, sssp, eccentricity };

Task task_from_string(const std::string& s);
std::string task_to_string(Task t);

struct GppRecord {
    Graph graph;
    Matrix features;  // n x c'
    Matrix targets;   // 1 x 1 for diameter, n x 1 otherwise
    std::string split;  // "train" | "val" | "test"
};

struct GppDataset {
    Task task = Task::diameter;
    std::vector<GppRecord> records;

    std::vector<const GppRecord*> split(const std::string& name) const;
};

/// Connected random graphs with n in [n_lo, n_hi], uniform scalar node
/// features (plus a one-hot source channel for sssp), targets from the BFS
/// oracle. Split fractions must sum to 1.
GppDataset gen_gpp_dataset(Task task, int count, int n_lo, int n_hi, uint64_t seed,
                           std::array<double, 3> split_fractions = {0.7, 0.15, 0.15});

void save_dataset_jsonl(const GppDataset& ds, const std::string& path);
GppDataset load_dataset_jsonl(const std::string& path, Task task);

/// Heat-diffusion sequence on the shift operator: x_{t+1} = A x_t + noise.
/// Pairs (inputs[t], targets[t]) with targets[t] = x_{t+horizon}.
struct TemporalDataset {
    Graph graph;
    int horizon = 1;
    std::vector<Matrix> inputs;
    std::vector<Matrix> targets;
};

TemporalDataset gen_temporal_dataset(const Graph& graph, int horizon, int length, uint64_t seed,
                                     double noise_scale = 0.01);

}  // namespace mpssm
