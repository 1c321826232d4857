#include "stlab/mid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "stlab/mst.hpp"
#include "stlab/parallel.hpp"
#include "stlab/raster.hpp"
#include "stlab/rng.hpp"

namespace stlab::mid {

void ChannelParams::validate() const {
    if (!(noise_P_N0 > 0.0) || !(efficiency_K > 0.0) || !(exponent_n > 0.0))
        throw std::invalid_argument("ChannelParams: constants must be positive");
    if (!(rate_R > 0.0) || !(rate_R < 1.0))
        throw std::invalid_argument("ChannelParams: rate must be in (0, 1)");
}

double erf_inv(double x) {
    if (!(x > -1.0 && x < 1.0)) throw std::invalid_argument("erf_inv: argument must be in (-1, 1)");
    if (x == 0.0) return 0.0;

    // rational seed (Giles-style), then Newton on erf to full precision
    double w = -std::log((1.0 - x) * (1.0 + x));
    double y;
    if (w < 5.0) {
        w -= 2.5;
        y = 2.81022636e-08;
        y = 3.43273939e-07 + y * w;
        y = -3.5233877e-06 + y * w;
        y = -4.39150654e-06 + y * w;
        y = 0.00021858087 + y * w;
        y = -0.00125372503 + y * w;
        y = -0.00417768164 + y * w;
        y = 0.246640727 + y * w;
        y = 1.50140941 + y * w;
    } else {
        w = std::sqrt(w) - 3.0;
        y = -0.000200214257;
        y = 0.000100950558 + y * w;
        y = 0.00134934322 + y * w;
        y = -0.00367342844 + y * w;
        y = 0.00573950773 + y * w;
        y = -0.0076224613 + y * w;
        y = 0.00943887047 + y * w;
        y = 1.00167406 + y * w;
        y = 2.83297682 + y * w;
    }
    double r = y * x;
    const double half_sqrt_pi = 0.5 * std::sqrt(std::numbers::pi);
    for (int it = 0; it < 3; ++it) {
        const double err = std::erf(r) - x;
        r -= err * half_sqrt_pi * std::exp(r * r);
    }
    return r;
}

double power_required(double distance_m, const ChannelParams& ch) {
    ch.validate();
    if (distance_m < 0.0) throw std::invalid_argument("power_required: negative distance");
    if (distance_m == 0.0) return 0.0;
    const double g = erf_inv(ch.rate_R);
    return g * g * ch.noise_P_N0 * std::pow(distance_m, ch.exponent_n) / ch.efficiency_K;
}

MidScenario gen_task_config(double window_T, uint64_t seed, uint64_t stream) {
    if (!(window_T > 0.0)) throw std::invalid_argument("gen_task_config: window must be positive");
    MidScenario sc;
    sc.window_T = window_T;
    Rng rng(seed, stream);
    const int64_t count = std::llround(5.0 * (window_T / 320.0) * (window_T / 320.0));
    for (int64_t i = 0; i < count; ++i)
        sc.task_agents.add(
            Vec2{rng.uniform(-0.5 * window_T, 0.5 * window_T), rng.uniform(-0.5 * window_T, 0.5 * window_T)});
    return sc;
}

double amtp(const PointSet& agents, const ChannelParams& ch) {
    if (agents.size() < 2) throw std::invalid_argument("amtp: need at least two agents");
    const auto tree = mst_kruskal(static_cast<int>(agents.size()), [&](int u, int v) {
        return power_required(dist(agents.at2(u), agents.at2(v)), ch);
    });
    double total = 0.0;
    for (const auto& e : tree) total += e.w;
    return total / static_cast<double>(tree.size());
}

PointSet heuristic_placer(const PointSet& task_agents, double max_hop) {
    if (task_agents.size() < 2)
        throw std::invalid_argument("heuristic_placer: need at least two task agents");
    if (!(max_hop > 0.0)) throw std::invalid_argument("heuristic_placer: max_hop must be positive");

    const auto tree = mst_kruskal(static_cast<int>(task_agents.size()), [&](int u, int v) {
        return dist(task_agents.at2(u), task_agents.at2(v));
    });

    PointSet comm(2);
    for (const auto& e : tree) {
        const Vec2 a = task_agents.at2(e.u);
        const Vec2 b = task_agents.at2(e.v);
        const double len = dist(a, b);
        const auto hops = static_cast<int64_t>(std::ceil(len / max_hop));
        for (int64_t j = 1; j < hops; ++j) {
            const double t = static_cast<double>(j) / static_cast<double>(hops);
            comm.add(Vec2{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
        }
    }
    return comm;
}

PointSet merge(const PointSet& a, const PointSet& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("merge: dimension mismatch");
    PointSet out(a.dim());
    for (int64_t i = 0; i < a.size(); ++i) out.add(a.point(i));
    for (int64_t i = 0; i < b.size(); ++i) out.add(b.point(i));
    return out;
}

Placer make_heuristic_placer(double max_hop) {
    return [max_hop](const PointSet& task, double, uint64_t) {
        return heuristic_placer(task, max_hop);
    };
}

Placer make_network_placer(const cnn::Network<float>& net, double sigma_x, double rho) {
    const cnn::Network<float>* net_ptr = &net;
    return [net_ptr, sigma_x, rho](const PointSet& task, double window_T, uint64_t seed) {
        const int resample = net_ptr->total_resample();
        int64_t px = static_cast<int64_t>(std::floor(window_T / rho));
        if (px % resample != 0) px += resample - px % resample;  // pad the window up
        const WindowSpec win{static_cast<double>(px) * rho, rho, 2};

        const ImageD img = raster::rasterize_gaussian(task, win, sigma_x);
        Tensor<float> input({1, px, px});
        for (int64_t i = 0; i < img.data.size(); ++i) input[i] = static_cast<float>(img.data[i]);

        const Tensor<float> out = net_ptr->forward(input);
        ImageD out_img{TensorD({px, px}), win, 1};
        for (int64_t i = 0; i < out_img.data.size(); ++i)
            out_img.data[i] = std::max(0.0, static_cast<double>(out[i]));

        raster::ExtractOptions opt;
        opt.seed = seed;
        opt.support_rel_floor = 1e-3;
        opt.max_support = 4096;
        opt.clamp_k = true;
        return raster::extract_points(out_img, opt);
    };
}

std::vector<MidRow> evaluate_mid(const Placer& placer, const std::vector<double>& window_list,
                                 int n_samples, const ChannelParams& ch, uint64_t seed,
                                 int threads) {
    if (window_list.empty()) throw std::invalid_argument("evaluate_mid: empty window list");
    if (n_samples < 1) throw std::invalid_argument("evaluate_mid: n_samples must be positive");
    ch.validate();

    std::vector<MidRow> rows;
    for (size_t wi = 0; wi < window_list.size(); ++wi) {
        const double window_T = window_list[wi];
        std::vector<double> powers(static_cast<size_t>(n_samples), 0.0);
        std::vector<double> comm_counts(static_cast<size_t>(n_samples), 0.0);
        int64_t task_count = 0;

        parallel_for(n_samples, threads, [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i) {
                const uint64_t stream = (static_cast<uint64_t>(wi) << 32) | static_cast<uint64_t>(i);
                MidScenario sc = gen_task_config(window_T, seed, stream);
                sc.comm_agents = placer(sc.task_agents, window_T, seed ^ stream);
                const PointSet combined = merge(sc.task_agents, sc.comm_agents);
                powers[static_cast<size_t>(i)] =
                    combined.size() >= 2 ? amtp(combined, ch) : 0.0;
                comm_counts[static_cast<size_t>(i)] = static_cast<double>(sc.comm_agents.size());
            }
        });
        task_count = gen_task_config(window_T, seed, (static_cast<uint64_t>(wi) << 32)).task_agents.size();

        MidRow row;
        row.window_m = window_T;
        row.task_agents = task_count;
        double pm = 0.0, cm = 0.0;
        for (int i = 0; i < n_samples; ++i) {
            pm += powers[static_cast<size_t>(i)];
            cm += comm_counts[static_cast<size_t>(i)];
        }
        row.amtp_mean_mw = pm / n_samples;
        row.comm_agents_mean = cm / n_samples;
        double sq = 0.0;
        for (int i = 0; i < n_samples; ++i)
            sq += (powers[static_cast<size_t>(i)] - row.amtp_mean_mw) *
                  (powers[static_cast<size_t>(i)] - row.amtp_mean_mw);
        row.amtp_std_mw = n_samples > 1 ? std::sqrt(sq / (n_samples - 1)) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace stlab::mid
