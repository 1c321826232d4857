#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stlab/convnet.hpp"
#include "stlab/points.hpp"
#include "stlab/rng.hpp"

namespace stlab::mtt {

struct TargetState {
    Vec2 pos;      // meters
    Vec2 vel;      // m/s
    int64_t id = 0;
    bool newborn = false;  // born this step; moves from the next step on
};

/// Simulation parameters. The lambda_* rates are expected counts per
/// T-window area (the padded 2R+T square is populated at the same density),
/// so the generated process is stationary across window widths.
struct SimParams {
    double p_death = 0.05;
    double p_detect = 0.95;
    double sigma_a = 1.0;          // CV acceleration noise, m/s^2
    double sigma_v = 5.0;          // initial velocity std, m/s
    double sigma_target = 10.0;    // target image kernel width, m
    double eta_r = 10.0;           // range noise, m
    double eta_theta = 0.035;      // bearing noise, rad
    double lambda_birth = 0.5;     // per window area per step
    double lambda_initial = 10.0;  // per window area
    double lambda_sensor = 0.25;   // per window area
    double lambda_clutter = 40.0;  // per sensor per step
    double sensor_range_R = 2000.0;  // m
    double tau = 1.0;              // s
    double window_T = 1000.0;      // m
    double resolution_rho = 1000.0 / 128.0;  // m per pixel

    /// Area-scaled defaults for a window of T meters: lambda_birth = 0.5*Tk^2*tau,
    /// lambda_initial = 10*Tk^2, lambda_sensor = 0.25*Tk^2 with Tk = T in km.
    static SimParams defaults(double window_T_m);

    void validate() const;

    double padded_width() const { return window_T + 2.0 * sensor_range_R; }
    /// Scales an in-window rate to the padded simulation square.
    double padded_rate(double per_window_rate) const {
        const double r = padded_width() / window_T;
        return per_window_rate * r * r;
    }
    WindowSpec window() const { return WindowSpec{window_T, resolution_rho, 2}; }
};

struct SimState {
    int64_t time_step = 0;
    std::vector<TargetState> targets;
    std::vector<Vec2> sensors;
    Rng rng;
    int64_t next_id = 0;
};

struct Measurement {
    int32_t sensor_index = 0;
    double range = 0.0;    // >= 0
    double bearing = 0.0;  // (-pi, pi]
};

struct MeasurementFrame {
    std::vector<Measurement> measurements;
    std::vector<char> clutter_flags;  // diagnostics only, never fed to training
};

/// Poisson-initialized targets and sensors, uniform over the padded square,
/// velocities ~ N(0, sigma_v^2 I). Deterministic given (seed, stream).
SimState new_scenario(const SimParams& params, uint64_t seed, uint64_t stream = 0);

/// One step: deaths, then births (which do not move this step), then CV
/// motion of survivors. Targets leaving the padded region are retained.
void propagate(SimState& state, const SimParams& params);

/// Range-bearing detections (at most one per sensor/target pair, range gate
/// R, detection probability p_detect) plus per-sensor Poisson clutter
/// uniform over the range disk.
MeasurementFrame sense(SimState& state, const SimParams& params);

Vec2 measurement_to_cartesian(const SimState& state, const Measurement& m);

/// Frames of one simulated scenario, rasterized: measurement-density images
/// and target images per step, plus the in-window truth sets.
struct ScenarioFrames {
    int64_t steps = 0;
    int64_t px = 0;
    Tensor<float> meas;    // [steps, N, N]
    Tensor<float> target;  // [steps, N, N]
    std::vector<PointSet> truth;  // in-window target positions per step
};

ScenarioFrames run_scenario(const SimParams& params, int n_steps, uint64_t seed, uint64_t stream);

/// Training corpus: n_sims scenarios with per-scenario RNG streams, so
/// generation parallelizes deterministically.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<ScenarioFrames> scenarios, int k_frames);

    int64_t sample_count() const { return static_cast<int64_t>(samples_.size()); }
    int k_frames() const { return k_frames_; }
    int64_t px() const { return px_; }
    const std::vector<ScenarioFrames>& scenarios() const { return scenarios_; }

    /// View for cnn::train; input stacks are zero-copy slices of k_frames
    /// consecutive measurement images.
    cnn::TrainView view() const;

    /// Mean squared pixel value over all input frames (the E[X(0)^2] of the
    /// transfer bound, in per-pixel intensity units).
    double input_second_moment() const;

private:
    std::vector<ScenarioFrames> scenarios_;
    int k_frames_ = 1;
    int64_t px_ = 0;
    struct Ref {
        int32_t scenario;
        int32_t step;
    };
    std::vector<Ref> samples_;
};

Dataset generate_dataset(const SimParams& params, int n_sims, int n_steps, int k_frames,
                         uint64_t seed, int threads = 0);

/// One evaluation sample: a scenario advanced k_frames steps, its stacked
/// input, final target image and truth set.
struct EvalFrame {
    Tensor<float> input;   // [K, N, N]
    Tensor<float> target;  // [1, N, N]
    PointSet truth;
};

EvalFrame scenario_eval_frame(const SimParams& params, int k_frames, uint64_t seed,
                              uint64_t stream);

// Shard I/O. Each shard holds one scenario as a 2-record f32 archive
// ([steps, N, N]: measurements then targets); the manifest records params,
// seeds and shard checksums.
void write_dataset(const Dataset& dataset, const SimParams& params, int n_steps, uint64_t seed,
                   const std::string& out_dir);
Dataset read_dataset(const std::string& dir, int k_frames_override = 0);

/// Generates and writes shards in bounded-memory blocks; bytes are identical
/// to write_dataset(generate_dataset(...)) for the same arguments.
void write_dataset_streamed(const SimParams& params, int n_sims, int n_steps, int k_frames,
                            uint64_t seed, const std::string& out_dir, int threads = 0);

}  // namespace stlab::mtt
