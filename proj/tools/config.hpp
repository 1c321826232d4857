#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "stlab/convnet.hpp"
#include "stlab/mid.hpp"
#include "stlab/mtt_sim.hpp"

namespace stlab::cli {

struct SimSection {
    mtt::SimParams params = mtt::SimParams::defaults(1000.0);
    int n_sims = 500;
    int n_steps = 50;
    int k_frames = 20;
};

struct EvalSection {
    std::vector<double> t_list_km = {1.0, 2.0};
    int n_samples = 100;
    double ospa_cutoff_m = 500.0;
    int crop_margin_px = 16;
    int bound_output_px = 96;  // B of the bound report
    double large_t_km = 2.0;
};

struct MidSection {
    std::vector<double> window_list_m = {320.0, 640.0, 960.0};
    int n_samples = 50;
    std::string placer = "heuristic";  // heuristic | network
    double max_hop_m = 130.0;
    std::string model;  // manifest path for the network placer
    mid::ChannelParams channel;
};

struct Seeds {
    uint64_t sim = 1;
    uint64_t train = 2;
    uint64_t eval = 3;
    uint64_t mid = 4;
};

struct ExperimentConfig {
    SimSection sim;
    std::vector<cnn::LayerSpec> arch;
    cnn::TrainConfig train;
    EvalSection eval;
    MidSection mid;
    Seeds seeds;

    /// Training-window pixel count.
    int64_t window_px() const { return sim.params.window().pixels(); }

    /// Parameters for an evaluation window of T meters: same densities
    /// (lambda_* scale with area), same sensor/motion model.
    mtt::SimParams params_for_window(double window_T_m) const;
};

/// Named presets: `desk` (the CI-scale default above) and `paper`
/// (10,000 sims x 100 steps, the full-scale architecture and
/// hyperparameters; valid but expensive).
ExperimentConfig preset(const std::string& name);

/// Loads a preset then merges a JSON config file over it. Unknown keys are
/// rejected at every level; throws ConfigError.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ExperimentConfig load_config(const std::string& preset_name, const std::string& config_path);

/// Applies --seed: sim, train, eval and mid seeds become seed, seed+1, ...
void override_seeds(ExperimentConfig& cfg, uint64_t master_seed);

std::vector<cnn::LayerSpec> desk_arch(int in_channels);
std::vector<cnn::LayerSpec> paper_arch(int in_channels);

}  // namespace stlab::cli
