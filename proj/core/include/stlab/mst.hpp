#pragma once

#include <functional>
#include <vector>

namespace stlab {

struct GraphEdge {
    int u = 0;
    int v = 0;
    double w = 0.0;
};

using EdgeWeightFn = std::function<double(int, int)>;

/// MST of the complete graph on n vertices, greedy edge-add with union-find
/// cycle detection. Equal-weight ties break toward the lexicographically
/// smallest (u, v). Returned edges have u < v and are sorted by (u, v).
std::vector<GraphEdge> mst_kruskal(int n, const EdgeWeightFn& weight);

/// Same tree by frontier growth from vertex 0 (O(n^2)); ties break toward
/// the smallest vertex index. Output normalized like mst_kruskal.
std::vector<GraphEdge> mst_prim(int n, const EdgeWeightFn& weight);

}  // namespace stlab
