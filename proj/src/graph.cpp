#include "mpssm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

namespace mpssm {

namespace {

void build_csr(Graph& g) {
    std::vector<std::vector<int>> adj(g.n);
    for (const auto& [i, j] : g.edges) {
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    g.csr_offsets.assign(g.n + 1, 0);
    g.csr_neighbors.clear();
    for (int v = 0; v < g.n; ++v) {
        std::sort(adj[v].begin(), adj[v].end());
        g.csr_offsets[v + 1] = g.csr_offsets[v] + static_cast<int>(adj[v].size());
        g.csr_neighbors.insert(g.csr_neighbors.end(), adj[v].begin(), adj[v].end());
    }
}

bool is_connected(const Graph& g) {
    if (g.n == 0) return false;
    std::vector<char> seen(g.n, 0);
    std::deque<int> queue{0};
    seen[0] = 1;
    int count = 1;
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (int e = g.csr_offsets[u]; e < g.csr_offsets[u + 1]; ++e) {
            const int v = g.csr_neighbors[e];
            if (!seen[v]) {
                seen[v] = 1;
                ++count;
                queue.push_back(v);
            }
        }
    }
    return count == g.n;
}

}  // namespace

Graph Graph::from_edges(int n, std::vector<std::pair<int, int>> edges) {
    if (n <= 0) throw std::invalid_argument("Graph: node count must be positive");
    for (auto& [i, j] : edges) {
        if (i == j) throw std::invalid_argument("Graph: self-loops are not stored");
        if (i < 0 || j < 0 || i >= n || j >= n)
            throw std::invalid_argument("Graph: node index out of range");
        if (i > j) std::swap(i, j);
    }
    std::sort(edges.begin(), edges.end());
    const auto dup = std::adjacent_find(edges.begin(), edges.end());
    if (dup != edges.end()) throw std::invalid_argument("Graph: duplicate edge");
    Graph g;
    g.n = n;
    g.edges = std::move(edges);
    build_csr(g);
    return g;
}

bool Graph::has_edge(int i, int j) const {
    if (i < 0 || j < 0 || i >= n || j >= n) return false;
    const auto begin = csr_neighbors.begin() + csr_offsets[i];
    const auto end = csr_neighbors.begin() + csr_offsets[i + 1];
    return std::binary_search(begin, end, j);
}

uint64_t Graph::fingerprint() const {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](uint64_t x) {
        for (int b = 0; b < 8; ++b) {
            h ^= (x >> (8 * b)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    mix(static_cast<uint64_t>(n));
    for (const auto& [i, j] : edges) {
        mix(static_cast<uint64_t>(i));
        mix(static_cast<uint64_t>(j));
    }
    return h;
}

Graph gen_path(int n) {
    if (n < 1) throw std::invalid_argument("gen_path: n must be >= 1");
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    return Graph::from_edges(n, std::move(edges));
}

Graph gen_cycle(int n) {
    if (n < 3) throw std::invalid_argument("gen_cycle: n must be >= 3");
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    edges.emplace_back(0, n - 1);
    return Graph::from_edges(n, std::move(edges));
}

Graph gen_clique_chain(int m, int d) {
    if (m < 2 || d < 3) throw std::invalid_argument("gen_clique_chain: need m >= 2, d >= 3");
    std::vector<std::pair<int, int>> edges;
    for (int c = 0; c < m; ++c) {
        const int base = c * d;
        for (int a = 0; a < d; ++a)
            for (int b = a + 1; b < d; ++b) edges.emplace_back(base + a, base + b);
    }
    const int bridge_base = m * d;
    for (int b = 0; b < m - 1; ++b) {
        const int bridge = bridge_base + b;
        edges.emplace_back(b * d + d - 1, bridge);  // last node of clique b
        edges.emplace_back(bridge, (b + 1) * d);    // first node of clique b+1
    }
    return Graph::from_edges(m * d + (m - 1), std::move(edges));
}

Graph gen_erdos_renyi(int n, double p, uint64_t seed, bool require_connected) {
    if (n < 1) throw std::invalid_argument("gen_erdos_renyi: n must be >= 1");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("gen_erdos_renyi: p must be in [0, 1]");
    Rng rng(seed);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<std::pair<int, int>> edges;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng.uniform() < p) edges.emplace_back(i, j);
        Graph g = Graph::from_edges(n, std::move(edges));
        if (!require_connected || is_connected(g)) return g;
    }
    throw std::runtime_error("gen_erdos_renyi: connectivity resampling budget exhausted");
}

Matrix Gso::apply(const Matrix& x) const {
    if (x.rows != n) throw std::invalid_argument("Gso::apply: row count mismatch");
    Matrix y(n, x.cols);
    for (int i = 0; i < n; ++i) {
        double* yrow = &y.data[static_cast<size_t>(i) * x.cols];
        for (int e = offsets[i]; e < offsets[i + 1]; ++e) {
            const double a = values[e];
            const double* xrow = &x.data[static_cast<size_t>(cols[e]) * x.cols];
            for (int c = 0; c < x.cols; ++c) yrow[c] += a * xrow[c];
        }
    }
    return y;
}

Matrix Gso::to_dense() const {
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int e = offsets[i]; e < offsets[i + 1]; ++e) a.at(i, cols[e]) = values[e];
    return a;
}

double Gso::entry(int i, int j) const {
    for (int e = offsets[i]; e < offsets[i + 1]; ++e)
        if (cols[e] == j) return values[e];
    return 0.0;
}

Gso build_gso(const Graph& graph) {
    Gso g;
    g.n = graph.n;
    g.graph_fingerprint = graph.fingerprint();
    g.inv_sqrt_deg.resize(graph.n);
    for (int v = 0; v < graph.n; ++v)
        g.inv_sqrt_deg[v] = 1.0 / std::sqrt(1.0 + graph.degree(v));

    g.offsets.assign(graph.n + 1, 0);
    for (int i = 0; i < graph.n; ++i) {
        // neighbors plus the diagonal entry, kept sorted by column
        const int deg = graph.degree(i);
        g.offsets[i + 1] = g.offsets[i] + deg + 1;
    }
    g.cols.resize(g.offsets[graph.n]);
    g.values.resize(g.offsets[graph.n]);
    for (int i = 0; i < graph.n; ++i) {
        int w = g.offsets[i];
        bool diag_placed = false;
        for (int e = graph.csr_offsets[i]; e < graph.csr_offsets[i + 1]; ++e) {
            const int j = graph.csr_neighbors[e];
            if (!diag_placed && j > i) {
                g.cols[w] = i;
                g.values[w] = g.inv_sqrt_deg[i] * g.inv_sqrt_deg[i];
                diag_placed = true;
                ++w;
            }
            g.cols[w] = j;
            g.values[w] = g.inv_sqrt_deg[i] * g.inv_sqrt_deg[j];
            ++w;
        }
        if (!diag_placed) {
            g.cols[w] = i;
            g.values[w] = g.inv_sqrt_deg[i] * g.inv_sqrt_deg[i];
        }
    }
    return g;
}

StructuralOracle bfs_oracle(const Graph& graph) {
    StructuralOracle out;
    out.n = graph.n;
    out.dist.assign(static_cast<size_t>(graph.n) * graph.n, StructuralOracle::unreachable);
    out.ecc.assign(graph.n, 0);
    out.connected = true;

    std::deque<int> queue;
    for (int src = 0; src < graph.n; ++src) {
        int32_t* row = &out.dist[static_cast<size_t>(src) * graph.n];
        row[src] = 0;
        queue.clear();
        queue.push_back(src);
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop_front();
            for (int e = graph.csr_offsets[u]; e < graph.csr_offsets[u + 1]; ++e) {
                const int v = graph.csr_neighbors[e];
                if (row[v] == StructuralOracle::unreachable) {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        int32_t e = 0;
        for (int v = 0; v < graph.n; ++v) {
            if (row[v] == StructuralOracle::unreachable) {
                out.connected = false;
            } else {
                e = std::max(e, row[v]);
            }
        }
        out.ecc[src] = e;
    }
    out.diameter = 0;
    for (int v = 0; v < graph.n; ++v) out.diameter = std::max(out.diameter, out.ecc[v]);
    return out;
}

std::string graph_to_text(const Graph& graph) {
    std::ostringstream os;
    os << "n " << graph.n << "\n";
    for (const auto& [i, j] : graph.edges) os << i << " " << j << "\n";
    return os.str();
}

Graph graph_from_text(const std::string& text) {
    std::istringstream is(text);
    std::string tag;
    int n = 0;
    if (!(is >> tag >> n) || tag != "n")
        throw std::invalid_argument("graph_from_text: missing 'n <count>' header");
    std::vector<std::pair<int, int>> edges;
    int i, j;
    while (is >> i >> j) edges.emplace_back(i, j);
    return Graph::from_edges(n, std::move(edges));
}

void save_graph(const Graph& graph, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_graph: cannot open " + path);
    f << graph_to_text(graph);
}

Graph load_graph(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_graph: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return graph_from_text(ss.str());
}

}  // namespace mpssm
