#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "stlab/mid.hpp"
#include "stlab/mst.hpp"
#include "stlab/rng.hpp"

using namespace stlab;
using mid::ChannelParams;

namespace {

/// Bisection inverse of erf on [0, 1): the independent high-precision oracle.
double erfinv_bisect(double y) {
    double lo = 0.0, hi = 8.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (std::erf(mid) < y)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

PointSet make_set(std::initializer_list<Vec2> pts) {
    PointSet s(2);
    for (Vec2 p : pts) s.add(p);
    return s;
}

/// Decodes one Pruefer sequence into its labeled tree.
std::vector<GraphEdge> prufer_tree(const std::vector<int>& seq, int n) {
    std::vector<int> degree(static_cast<size_t>(n), 1);
    for (int v : seq) degree[static_cast<size_t>(v)]++;
    std::vector<GraphEdge> edges;
    std::vector<char> used(static_cast<size_t>(n), 0);
    std::vector<int> deg = degree;
    for (int v : seq) {
        for (int leaf = 0; leaf < n; ++leaf) {
            if (deg[static_cast<size_t>(leaf)] == 1 && !used[static_cast<size_t>(leaf)]) {
                edges.push_back({std::min(leaf, v), std::max(leaf, v), 0.0});
                used[static_cast<size_t>(leaf)] = 1;
                deg[static_cast<size_t>(v)]--;
                break;
            }
        }
    }
    std::vector<int> rest;
    for (int v = 0; v < n; ++v)
        if (!used[static_cast<size_t>(v)]) rest.push_back(v);
    edges.push_back({rest[0], rest[1], 0.0});
    return edges;
}

/// Minimum spanning-tree total weight by enumerating all n^(n-2) labeled
/// trees (Cayley); n <= 6 keeps this at 1296 trees.
double brute_mst_total(int n, const std::function<double(int, int)>& weight,
                       std::set<std::pair<int, int>>* best_edges = nullptr) {
    if (n == 2) {
        if (best_edges) best_edges->insert({0, 1});
        return weight(0, 1);
    }
    std::vector<int> seq(static_cast<size_t>(n - 2), 0);
    double best = std::numeric_limits<double>::infinity();
    for (;;) {
        const auto edges = prufer_tree(seq, n);
        double total = 0.0;
        for (const auto& e : edges) total += weight(e.u, e.v);
        if (total < best) {
            best = total;
            if (best_edges) {
                best_edges->clear();
                for (const auto& e : edges) best_edges->insert({e.u, e.v});
            }
        }
        int i = 0;
        while (i < n - 2 && seq[static_cast<size_t>(i)] == n - 1) seq[static_cast<size_t>(i++)] = 0;
        if (i == n - 2) break;
        seq[static_cast<size_t>(i)]++;
    }
    return best;
}

}  // namespace

TEST_CASE("erf_inv against the bisection oracle") {
    for (double y : {0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999}) {
        const double got = mid::erf_inv(y);
        CHECK(std::abs(got - erfinv_bisect(y)) < 1e-10);
        CHECK(std::erf(got) == doctest::Approx(y).epsilon(1e-14));
        CHECK(mid::erf_inv(-y) == doctest::Approx(-got).epsilon(1e-14));
    }
    CHECK(mid::erf_inv(0.0) == 0.0);
    CHECK_THROWS_AS(mid::erf_inv(1.0), std::invalid_argument);
}

TEST_CASE("power_required") {
    const ChannelParams ch;

    CHECK(mid::power_required(0.0, ch) == 0.0);

    // power law: P(2d) = 2^n P(d)
    const double ratio = mid::power_required(200.0, ch) / mid::power_required(100.0, ch);
    CHECK(ratio == doctest::Approx(std::pow(2.0, 2.52)).epsilon(1e-12));

    // d = 100 m with defaults, against the bisection-oracle evaluation
    const double g = erfinv_bisect(0.5);
    const double want = g * g * 1e-7 * std::pow(100.0, 2.52) / 5e-6;
    const double got = mid::power_required(100.0, ch);
    CHECK(std::abs(got - want) / want < 1e-6);
    CHECK(got == doctest::Approx(498.8).epsilon(2e-3));

    CHECK_THROWS_AS(mid::power_required(-1.0, ch), std::invalid_argument);
    ChannelParams bad;
    bad.rate_R = 1.0;
    CHECK_THROWS_AS(mid::power_required(1.0, bad), std::invalid_argument);
}

TEST_CASE("power_required is increasing and convex on (0, 1e4]") {
    const ChannelParams ch;
    double prev = 0.0;
    double prev_inc = 0.0;
    const int n = 200;
    for (int i = 1; i <= n; ++i) {
        const double d = 1e4 * static_cast<double>(i) / n;
        const double p = mid::power_required(d, ch);
        const double inc = p - prev;
        CHECK(inc > 0.0);
        if (i > 1) CHECK(inc >= prev_inc - 1e-9);
        prev = p;
        prev_inc = inc;
    }
}

TEST_CASE("gen_task_config agent counts follow the area law") {
    CHECK(mid::gen_task_config(320.0, 1).task_agents.size() == 5);
    CHECK(mid::gen_task_config(640.0, 1).task_agents.size() == 20);
    CHECK(mid::gen_task_config(960.0, 1).task_agents.size() == 45);
    CHECK(mid::gen_task_config(1280.0, 1).task_agents.size() == 80);
    CHECK(mid::gen_task_config(1600.0, 1).task_agents.size() == 125);

    const auto sc = mid::gen_task_config(640.0, 3, 5);
    for (int64_t i = 0; i < sc.task_agents.size(); ++i) {
        CHECK(std::abs(sc.task_agents.at2(i).x) <= 320.0);
        CHECK(std::abs(sc.task_agents.at2(i).y) <= 320.0);
    }
    const auto sc2 = mid::gen_task_config(640.0, 3, 5);
    CHECK(sc.task_agents.coords() == sc2.task_agents.coords());
}

TEST_CASE("amtp closed forms") {
    const ChannelParams ch;
    const double d = 137.0;
    CHECK(mid::amtp(make_set({{0, 0}, {d, 0}}), ch) ==
          doctest::Approx(mid::power_required(d, ch)).epsilon(1e-12));

    // three collinear agents: the long edge is excluded, both kept edges cost P(100)
    CHECK(mid::amtp(make_set({{0, 0}, {100, 0}, {200, 0}}), ch) ==
          doctest::Approx(mid::power_required(100.0, ch)).epsilon(1e-12));

    PointSet one(2);
    one.add(Vec2{0, 0});
    CHECK_THROWS_AS(mid::amtp(one, ch), std::invalid_argument);
}

TEST_CASE("MST algorithms agree and match the Pruefer enumeration") {
    Rng rng(5);
    const ChannelParams ch;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(5));  // 2..6
        PointSet agents(2);
        for (int i = 0; i < n; ++i)
            agents.add(Vec2{rng.uniform(-400, 400), rng.uniform(-400, 400)});
        auto weight = [&](int u, int v) {
            return mid::power_required(dist(agents.at2(u), agents.at2(v)), ch);
        };

        const auto kruskal = mst_kruskal(n, weight);
        const auto prim = mst_prim(n, weight);
        REQUIRE(kruskal.size() == static_cast<size_t>(n - 1));
        REQUIRE(prim.size() == kruskal.size());
        for (size_t i = 0; i < kruskal.size(); ++i) {
            CHECK(kruskal[i].u == prim[i].u);
            CHECK(kruskal[i].v == prim[i].v);
        }

        std::set<std::pair<int, int>> brute_edges;
        const double brute_total = brute_mst_total(n, weight, &brute_edges);
        std::set<std::pair<int, int>> got_edges;
        double got_total = 0.0;
        for (const auto& e : kruskal) {
            got_edges.insert({e.u, e.v});
            got_total += e.w;
        }
        CHECK(got_edges == brute_edges);
        CHECK(got_total == doctest::Approx(brute_total).epsilon(1e-12));
        CHECK(mid::amtp(agents, ch) == doctest::Approx(brute_total / (n - 1)).epsilon(1e-12));
    }
}

TEST_CASE("amtp is invariant under rigid motion") {
    Rng rng(6);
    const ChannelParams ch;
    PointSet agents(2);
    for (int i = 0; i < 7; ++i) agents.add(Vec2{rng.uniform(-300, 300), rng.uniform(-300, 300)});
    const double base = mid::amtp(agents, ch);

    const double th = 0.73;
    const Vec2 shift{123.0, -77.0};
    PointSet moved(2);
    for (int64_t i = 0; i < agents.size(); ++i) {
        const Vec2 p = agents.at2(i);
        moved.add(Vec2{std::cos(th) * p.x - std::sin(th) * p.y + shift.x,
                       std::sin(th) * p.x + std::cos(th) * p.y + shift.y});
    }
    CHECK(mid::amtp(moved, ch) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("heuristic placer") {
    SUBCASE("short edge needs no relays") {
        CHECK(mid::heuristic_placer(make_set({{0, 0}, {90, 0}}), 100.0).empty());
    }
    SUBCASE("250 m at max_hop 100 puts two relays at thirds") {
        const PointSet comm = mid::heuristic_placer(make_set({{0, 0}, {250, 0}}), 100.0);
        REQUIRE(comm.size() == 2);
        std::vector<double> xs = {comm.at2(0).x, comm.at2(1).x};
        std::sort(xs.begin(), xs.end());
        CHECK(xs[0] == doctest::Approx(250.0 / 3.0).epsilon(1e-12));
        CHECK(xs[1] == doctest::Approx(500.0 / 3.0).epsilon(1e-12));
        CHECK(comm.at2(0).y == 0.0);
    }
    SUBCASE("combined network hops stay under max_hop") {
        Rng rng(7);
        const double max_hop = 130.0;
        for (int trial = 0; trial < 10; ++trial) {
            const auto sc = mid::gen_task_config(640.0, 30 + trial);
            const PointSet comm = mid::heuristic_placer(sc.task_agents, max_hop);
            const PointSet all = mid::merge(sc.task_agents, comm);
            const auto tree = mst_kruskal(static_cast<int>(all.size()), [&](int u, int v) {
                return dist(all.at2(u), all.at2(v));
            });
            for (const auto& e : tree) CHECK(e.w <= max_hop + 1e-9);
        }
    }
}

TEST_CASE("evaluate_mid sweep") {
    const ChannelParams ch;
    const auto placer = mid::make_heuristic_placer(130.0);
    const auto rows = mid::evaluate_mid(placer, {320.0, 640.0}, 8, ch, 99, 2);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].task_agents == 5);
    CHECK(rows[1].task_agents == 20);
    const double cap = mid::power_required(130.0, ch);
    for (const auto& r : rows) {
        CHECK(r.amtp_mean_mw > 0.0);
        CHECK(r.amtp_mean_mw <= cap + 1e-9);
    }

    // single sample: zero std
    const auto one = mid::evaluate_mid(placer, {320.0}, 1, ch, 99, 1);
    CHECK(one[0].amtp_std_mw == 0.0);

    // deterministic rerun
    const auto again = mid::evaluate_mid(placer, {320.0, 640.0}, 8, ch, 99, 1);
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].amtp_mean_mw == again[i].amtp_mean_mw);
        CHECK(rows[i].amtp_std_mw == again[i].amtp_std_mw);
        CHECK(rows[i].comm_agents_mean == again[i].comm_agents_mean);
    }
}

TEST_CASE("network placer runs end to end on a padded window") {
    std::vector<cnn::LayerSpec> arch;
    cnn::LayerSpec e;
    e.kind = cnn::LayerKind::encoder;
    e.in_features = 1;
    e.out_features = 4;
    e.kernel_width = 3;
    e.resample = 2;
    arch.push_back(e);
    cnn::LayerSpec d;
    d.kind = cnn::LayerKind::decoder;
    d.in_features = 4;
    d.out_features = 1;
    d.kernel_width = 3;
    d.resample = 2;
    d.nonlin = cnn::Nonlin::identity;
    arch.push_back(d);
    const auto net = cnn::Network<float>::randomized(2, arch, 42);

    // 331.25 m / 1.25 m per px = 265 px, not divisible by 4: must pad up
    const auto placer = mid::make_network_placer(net, 6.4, 1.25);
    const auto sc = mid::gen_task_config(331.25, 5);
    const PointSet comm = placer(sc.task_agents, 331.25, 1);
    CHECK(comm.size() >= 0);  // may legitimately be empty for a random net
}
