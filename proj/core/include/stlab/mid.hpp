#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stlab/convnet.hpp"
#include "stlab/points.hpp"

namespace stlab::mid {

/// Path-loss channel model constants.
struct ChannelParams {
    double noise_P_N0 = 1e-7;
    double efficiency_K = 5e-6;
    double exponent_n = 2.52;
    double rate_R = 0.5;  // normalized target rate, in [0, 1)

    void validate() const;
};

/// Inverse error function, accurate to ~1e-15 (polynomial seed plus Newton
/// refinement on std::erf).
double erf_inv(double x);

/// Transmit power (mW) to sustain the normalized rate over d meters:
/// P(d) = erfinv(R)^2 * P_N0 * d^n / K.
double power_required(double distance_m, const ChannelParams& ch);

struct MidScenario {
    double window_T = 0.0;
    PointSet task_agents{2};
    PointSet comm_agents{2};
};

/// round(5 * (T/320)^2) task agents, i.i.d. uniform over the T-square.
MidScenario gen_task_config(double window_T, uint64_t seed, uint64_t stream = 0);

/// Average minimum transmit power: mean edge weight of the MST of the
/// complete P(d)-weighted graph over all agents. Needs at least two agents.
double amtp(const PointSet& agents, const ChannelParams& ch);

/// Baseline placement: Euclidean MST over the task agents, every edge longer
/// than max_hop subdivided into ceil(len/max_hop) equal hops.
PointSet heuristic_placer(const PointSet& task_agents, double max_hop);

PointSet merge(const PointSet& a, const PointSet& b);

using Placer = std::function<PointSet(const PointSet& task, double window_T, uint64_t seed)>;

Placer make_heuristic_placer(double max_hop);

/// Network-driven placement: rasterize the task set (sigma_x, rho), pad the
/// window up to the net's resample factor, run the net, extract points.
Placer make_network_placer(const cnn::Network<float>& net, double sigma_x = 6.4,
                           double rho = 1.25);

struct MidRow {
    double window_m = 0.0;
    int64_t task_agents = 0;
    double comm_agents_mean = 0.0;
    double amtp_mean_mw = 0.0;
    double amtp_std_mw = 0.0;
};

/// Window-width sweep: per window width, n_samples scenarios are generated,
/// placed and scored by AMTP over the combined network.
std::vector<MidRow> evaluate_mid(const Placer& placer, const std::vector<double>& window_list,
                                 int n_samples, const ChannelParams& ch, uint64_t seed,
                                 int threads = 0);

}  // namespace stlab::mid
