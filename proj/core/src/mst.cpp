#include "stlab/mst.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace stlab {

namespace {

struct UnionFind {
    std::vector<int> parent;

    explicit UnionFind(int n) : parent(static_cast<size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[static_cast<size_t>(x)] != x) {
            parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
            x = parent[static_cast<size_t>(x)];
        }
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[static_cast<size_t>(b)] = a;
        return true;
    }
};

void normalize(std::vector<GraphEdge>& edges) {
    for (auto& e : edges)
        if (e.u > e.v) std::swap(e.u, e.v);
    std::sort(edges.begin(), edges.end(),
              [](const GraphEdge& a, const GraphEdge& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
}

}  // namespace

std::vector<GraphEdge> mst_kruskal(int n, const EdgeWeightFn& weight) {
    if (n < 2) throw std::invalid_argument("mst_kruskal: need at least 2 vertices");
    std::vector<GraphEdge> all;
    all.reserve(static_cast<size_t>(n) * (n - 1) / 2);
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) all.push_back({u, v, weight(u, v)});
    std::sort(all.begin(), all.end(), [](const GraphEdge& a, const GraphEdge& b) {
        if (a.w != b.w) return a.w < b.w;
        return a.u != b.u ? a.u < b.u : a.v < b.v;
    });

    UnionFind uf(n);
    std::vector<GraphEdge> tree;
    tree.reserve(static_cast<size_t>(n) - 1);
    for (const auto& e : all) {
        if (uf.unite(e.u, e.v)) {
            tree.push_back(e);
            if (static_cast<int>(tree.size()) == n - 1) break;
        }
    }
    normalize(tree);
    return tree;
}

std::vector<GraphEdge> mst_prim(int n, const EdgeWeightFn& weight) {
    if (n < 2) throw std::invalid_argument("mst_prim: need at least 2 vertices");
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> key(static_cast<size_t>(n), kInf);
    std::vector<int> parent(static_cast<size_t>(n), -1);
    std::vector<char> done(static_cast<size_t>(n), 0);
    key[0] = 0.0;

    std::vector<GraphEdge> tree;
    tree.reserve(static_cast<size_t>(n) - 1);
    for (int it = 0; it < n; ++it) {
        int best = -1;
        for (int v = 0; v < n; ++v)
            if (!done[static_cast<size_t>(v)] && (best < 0 || key[static_cast<size_t>(v)] < key[static_cast<size_t>(best)]))
                best = v;
        done[static_cast<size_t>(best)] = 1;
        if (parent[static_cast<size_t>(best)] >= 0)
            tree.push_back({parent[static_cast<size_t>(best)], best, key[static_cast<size_t>(best)]});
        for (int v = 0; v < n; ++v) {
            if (done[static_cast<size_t>(v)]) continue;
            const double w = weight(best, v);
            if (w < key[static_cast<size_t>(v)]) {
                key[static_cast<size_t>(v)] = w;
                parent[static_cast<size_t>(v)] = best;
            }
        }
    }
    normalize(tree);
    return tree;
}

}  // namespace stlab
