#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mpssm/linalg.hpp"
#include "mpssm/matrix.hpp"

namespace mpssm {

/// Undirected simple graph. Edges are stored once as (i, j) with i < j;
/// self-loops are never stored (the shift operator adds the identity itself).
struct Graph {
    int n = 0;
    std::vector<std::pair<int, int>> edges;
    std::vector<int> csr_offsets;    // size n + 1
    std::vector<int> csr_neighbors;  // sorted per node

    static Graph from_edges(int n, std::vector<std::pair<int, int>> edges);

    int degree(int v) const { return csr_offsets[v + 1] - csr_offsets[v]; }
    bool has_edge(int i, int j) const;
    int edge_count() const { return static_cast<int>(edges.size()); }

    /// FNV-1a over node count and the canonical edge list.
    uint64_t fingerprint() const;
};

Graph gen_path(int n);
Graph gen_cycle(int n);

/// m cliques of order d linked in a chain by m-1 bridge nodes of degree 2.
/// Clique c occupies ids [c*d, (c+1)*d); bridges follow at m*d, m*d+1, ...
Graph gen_clique_chain(int m, int d);

/// G(n, p); with require_connected, resamples up to 1000 times and throws
/// when the budget runs out rather than returning a disconnected graph.
Graph gen_erdos_renyi(int n, double p, uint64_t seed, bool require_connected);

/// Symmetrically normalized adjacency with self-loops, stored sparse (CSR
/// including the diagonal). Eigendecomposition is attached lazily.
struct Gso {
    int n = 0;
    std::vector<int> offsets;  // size n + 1
    std::vector<int> cols;
    std::vector<double> values;
    std::vector<double> inv_sqrt_deg;  // (1 + d_i)^{-1/2}
    uint64_t graph_fingerprint = 0;
    std::optional<SymEig> eig;

    /// A * X for a dense n x c matrix.
    Matrix apply(const Matrix& x) const;
    Matrix to_dense() const;
    double entry(int i, int j) const;
};

Gso build_gso(const Graph& graph);

/// Exact hop distances from every source plus derived structure.
struct StructuralOracle {
    static constexpr int32_t unreachable = std::numeric_limits<int32_t>::max();

    int n = 0;
    std::vector<int32_t> dist;  // n x n, row-major
    std::vector<int32_t> ecc;   // per node; unreachable-free max, or sentinel if isolated
    int32_t diameter = 0;
    bool connected = false;

    int32_t at(int i, int j) const { return dist[static_cast<size_t>(i) * n + j]; }
};

StructuralOracle bfs_oracle(const Graph& graph);

/// Text format: header "n <count>", then one "i j" pair per line.
std::string graph_to_text(const Graph& graph);
Graph graph_from_text(const std::string& text);
void save_graph(const Graph& graph, const std::string& path);
Graph load_graph(const std::string& path);

}  // namespace mpssm
