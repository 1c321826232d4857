#include "stlab/mtt_sim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "stlab/archive.hpp"
#include "stlab/parallel.hpp"
#include "stlab/polar_cache.hpp"
#include "stlab/raster.hpp"

namespace stlab::mtt {

namespace fs = std::filesystem;

SimParams SimParams::defaults(double window_T_m) {
    SimParams p;
    p.window_T = window_T_m;
    const double tk = window_T_m / 1000.0;
    p.lambda_birth = 0.5 * tk * tk * p.tau;
    p.lambda_initial = 10.0 * tk * tk;
    p.lambda_sensor = 0.25 * tk * tk;
    p.lambda_clutter = 40.0 * p.tau;
    return p;
}

void SimParams::validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_death) || !prob(p_detect))
        throw std::invalid_argument("SimParams: probabilities must be in [0, 1]");
    if (lambda_birth < 0.0 || lambda_initial < 0.0 || lambda_sensor < 0.0 || lambda_clutter < 0.0)
        throw std::invalid_argument("SimParams: rates must be nonnegative");
    if (!(sensor_range_R > 0.0) || !(tau > 0.0) || !(window_T > 0.0))
        throw std::invalid_argument("SimParams: R, tau and T must be positive");
    if (!(resolution_rho > 0.0) || !(sigma_target > 0.0))
        throw std::invalid_argument("SimParams: rho and sigma_target must be positive");
    if (sigma_a < 0.0 || sigma_v < 0.0 || eta_r < 0.0 || eta_theta < 0.0)
        throw std::invalid_argument("SimParams: noise parameters must be nonnegative");
}

namespace {

Vec2 uniform_in_square(Rng& rng, double width) {
    return {rng.uniform(-0.5 * width, 0.5 * width), rng.uniform(-0.5 * width, 0.5 * width)};
}

TargetState spawn_target(SimState& st, const SimParams& p) {
    TargetState t;
    t.pos = uniform_in_square(st.rng, p.padded_width());
    t.vel = {st.rng.normal(0.0, p.sigma_v), st.rng.normal(0.0, p.sigma_v)};
    t.id = st.next_id++;
    t.newborn = true;
    return t;
}

}  // namespace

SimState new_scenario(const SimParams& params, uint64_t seed, uint64_t stream) {
    params.validate();
    SimState st{0, {}, {}, Rng(seed, stream), 0};

    const int64_t n_targets = st.rng.poisson(params.padded_rate(params.lambda_initial));
    st.targets.reserve(static_cast<size_t>(n_targets));
    for (int64_t i = 0; i < n_targets; ++i) {
        TargetState t = spawn_target(st, params);
        t.newborn = false;
        st.targets.push_back(t);
    }
    const int64_t n_sensors = st.rng.poisson(params.padded_rate(params.lambda_sensor));
    st.sensors.reserve(static_cast<size_t>(n_sensors));
    for (int64_t i = 0; i < n_sensors; ++i) st.sensors.push_back(uniform_in_square(st.rng, params.padded_width()));
    return st;
}

void propagate(SimState& state, const SimParams& params) {
    // deaths
    std::vector<TargetState> survivors;
    survivors.reserve(state.targets.size());
    for (auto& t : state.targets) {
        if (!state.rng.bernoulli(params.p_death)) survivors.push_back(t);
    }
    state.targets = std::move(survivors);

    // births; they sit out the motion phase of their birth step
    const int64_t births = state.rng.poisson(params.padded_rate(params.lambda_birth));
    for (int64_t i = 0; i < births; ++i) state.targets.push_back(spawn_target(state, params));

    // CV motion of survivors
    const double tau = params.tau;
    for (auto& t : state.targets) {
        if (t.newborn) {
            t.newborn = false;
            continue;
        }
        const Vec2 mu{state.rng.normal(0.0, params.sigma_a), state.rng.normal(0.0, params.sigma_a)};
        t.pos.x += tau * t.vel.x + 0.5 * tau * tau * mu.x;
        t.pos.y += tau * t.vel.y + 0.5 * tau * tau * mu.y;
        t.vel.x += tau * mu.x;
        t.vel.y += tau * mu.y;
    }
    ++state.time_step;
}

MeasurementFrame sense(SimState& state, const SimParams& params) {
    MeasurementFrame frame;
    for (size_t j = 0; j < state.sensors.size(); ++j) {
        const Vec2 s = state.sensors[j];
        for (const auto& t : state.targets) {
            const Vec2 rel = t.pos - s;
            const double d = rel.norm();
            if (d > params.sensor_range_R) continue;
            if (!state.rng.bernoulli(params.p_detect)) continue;
            Measurement m;
            m.sensor_index = static_cast<int32_t>(j);
            m.range = std::max(0.0, d + state.rng.normal(0.0, params.eta_r));
            m.bearing = wrap_angle(std::atan2(rel.y, rel.x) + state.rng.normal(0.0, params.eta_theta));
            frame.measurements.push_back(m);
            frame.clutter_flags.push_back(0);
        }
        const int64_t clutter = state.rng.poisson(params.lambda_clutter);
        for (int64_t c = 0; c < clutter; ++c) {
            Measurement m;
            m.sensor_index = static_cast<int32_t>(j);
            m.range = params.sensor_range_R * std::sqrt(state.rng.uniform01());
            m.bearing = std::numbers::pi * (1.0 - 2.0 * state.rng.uniform01());
            frame.measurements.push_back(m);
            frame.clutter_flags.push_back(1);
        }
    }
    return frame;
}

Vec2 measurement_to_cartesian(const SimState& state, const Measurement& m) {
    const Vec2 s = state.sensors[static_cast<size_t>(m.sensor_index)];
    return {s.x + m.range * std::cos(m.bearing), s.y + m.range * std::sin(m.bearing)};
}

namespace {

PointSet in_window_targets(const SimState& st, const SimParams& p) {
    const double half = 0.5 * p.window().extent();
    PointSet out(2);
    for (const auto& t : st.targets)
        if (std::abs(t.pos.x) < half && std::abs(t.pos.y) < half) out.add(t.pos);
    return out;
}

void rasterize_step(const SimState& st, const MeasurementFrame& frame, const SimParams& p,
                    raster::PolarCache& cache, std::span<float> meas_out,
                    std::span<float> target_out) {
    const WindowSpec win = p.window();

    PointSet pts(2);
    std::vector<raster::MeasurementModel> models;
    models.reserve(frame.measurements.size());
    for (const auto& m : frame.measurements) {
        pts.add(measurement_to_cartesian(st, m));
        models.push_back(raster::MeasurementModel::range_bearing(
            st.sensors[static_cast<size_t>(m.sensor_index)], p.eta_r, p.eta_theta));
    }
    const ImageD meas_img = raster::rasterize_density(pts, models, win, &cache);
    for (int64_t i = 0; i < meas_img.data.size(); ++i)
        meas_out[static_cast<size_t>(i)] = static_cast<float>(meas_img.data[i]);

    PointSet all(2);
    for (const auto& t : st.targets) all.add(t.pos);
    const ImageD target_img = raster::rasterize_gaussian(all, win, p.sigma_target);
    for (int64_t i = 0; i < target_img.data.size(); ++i)
        target_out[static_cast<size_t>(i)] = static_cast<float>(target_img.data[i]);
}

}  // namespace

ScenarioFrames run_scenario(const SimParams& params, int n_steps, uint64_t seed, uint64_t stream) {
    if (n_steps < 1) throw std::invalid_argument("run_scenario: n_steps must be positive");
    const WindowSpec win = params.window();
    win.validate();
    const int64_t n = win.pixels();

    ScenarioFrames out;
    out.steps = n_steps;
    out.px = n;
    out.meas = Tensor<float>({n_steps, n, n});
    out.target = Tensor<float>({n_steps, n, n});
    out.truth.reserve(static_cast<size_t>(n_steps));

    SimState st = new_scenario(params, seed, stream);
    raster::PolarCache cache(win);
    const int64_t plane = n * n;
    for (int step = 0; step < n_steps; ++step) {
        if (step > 0) propagate(st, params);
        const MeasurementFrame frame = sense(st, params);
        rasterize_step(st, frame, params, cache,
                       {out.meas.data() + step * plane, static_cast<size_t>(plane)},
                       {out.target.data() + step * plane, static_cast<size_t>(plane)});
        out.truth.push_back(in_window_targets(st, params));
    }
    return out;
}

Dataset::Dataset(std::vector<ScenarioFrames> scenarios, int k_frames)
    : scenarios_(std::move(scenarios)), k_frames_(k_frames) {
    if (k_frames_ < 1) throw std::invalid_argument("Dataset: k_frames must be positive");
    for (size_t si = 0; si < scenarios_.size(); ++si) {
        const ScenarioFrames& sc = scenarios_[si];
        if (px_ == 0) px_ = sc.px;
        if (sc.px != px_) throw std::invalid_argument("Dataset: mixed image sizes");
        if (sc.steps < k_frames_)
            throw std::invalid_argument("Dataset: scenario shorter than the frame stack");
        for (int64_t step = k_frames_ - 1; step < sc.steps; ++step)
            samples_.push_back({static_cast<int32_t>(si), static_cast<int32_t>(step)});
    }
}

cnn::TrainView Dataset::view() const {
    cnn::TrainView v;
    v.input_shape = {k_frames_, px_, px_};
    v.target_shape = {1, px_, px_};
    v.count = sample_count();
    const int64_t plane = px_ * px_;
    const int k = k_frames_;
    const auto* scenarios = &scenarios_;
    const auto* samples = &samples_;
    v.sample = [scenarios, samples, plane, k](int64_t i) {
        const Ref r = (*samples)[static_cast<size_t>(i)];
        const ScenarioFrames& sc = (*scenarios)[static_cast<size_t>(r.scenario)];
        const float* in = sc.meas.data() + (r.step - k + 1) * plane;
        const float* tg = sc.target.data() + r.step * plane;
        return std::pair<const float*, const float*>(in, tg);
    };
    return v;
}

double Dataset::input_second_moment() const {
    double acc = 0.0;
    int64_t count = 0;
    for (const auto& sc : scenarios_) {
        for (int64_t i = 0; i < sc.meas.size(); ++i) {
            const double v = sc.meas[i];
            acc += v * v;
        }
        count += sc.meas.size();
    }
    return count ? acc / static_cast<double>(count) : 0.0;
}

Dataset generate_dataset(const SimParams& params, int n_sims, int n_steps, int k_frames,
                         uint64_t seed, int threads) {
    if (n_sims < 1) throw std::invalid_argument("generate_dataset: n_sims must be positive");
    if (n_steps < k_frames)
        throw std::invalid_argument("generate_dataset: n_steps must be at least k_frames");
    std::vector<ScenarioFrames> scenarios(static_cast<size_t>(n_sims));
    parallel_for(n_sims, threads, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
            scenarios[static_cast<size_t>(i)] =
                run_scenario(params, n_steps, seed, static_cast<uint64_t>(i));
    });
    return Dataset(std::move(scenarios), k_frames);
}

EvalFrame scenario_eval_frame(const SimParams& params, int k_frames, uint64_t seed,
                              uint64_t stream) {
    ScenarioFrames sc = run_scenario(params, k_frames, seed, stream);
    const int64_t plane = sc.px * sc.px;
    EvalFrame f;
    f.input = Tensor<float>({k_frames, sc.px, sc.px},
                            std::vector<float>(sc.meas.values().begin(), sc.meas.values().end()));
    f.target = Tensor<float>({1, sc.px, sc.px},
                             std::vector<float>(sc.target.values().begin() + (k_frames - 1) * plane,
                                                sc.target.values().begin() + k_frames * plane));
    f.truth = sc.truth.back();
    return f;
}

namespace {

nlohmann::json params_to_json(const SimParams& p) {
    nlohmann::json j;
    j["p_death"] = p.p_death;
    j["p_detect"] = p.p_detect;
    j["sigma_a"] = p.sigma_a;
    j["sigma_v"] = p.sigma_v;
    j["sigma_target"] = p.sigma_target;
    j["eta_r"] = p.eta_r;
    j["eta_theta"] = p.eta_theta;
    j["lambda_birth"] = p.lambda_birth;
    j["lambda_initial"] = p.lambda_initial;
    j["lambda_sensor"] = p.lambda_sensor;
    j["lambda_clutter"] = p.lambda_clutter;
    j["sensor_range_R"] = p.sensor_range_R;
    j["tau"] = p.tau;
    j["window_T"] = p.window_T;
    j["resolution_rho"] = p.resolution_rho;
    return j;
}

}  // namespace

namespace {

nlohmann::json write_shard(const ScenarioFrames& sc, const std::string& out_dir, size_t index) {
    char name[64];
    std::snprintf(name, sizeof(name), "shard_%05zu.sta", index);
    const std::string path = out_dir + "/" + name;

    std::vector<float> payload;
    payload.reserve(static_cast<size_t>(2 * sc.meas.size()));
    payload.insert(payload.end(), sc.meas.values().begin(), sc.meas.values().end());
    payload.insert(payload.end(), sc.target.values().begin(), sc.target.values().end());
    io::write_archive(path, {sc.steps, sc.px, sc.px}, 2, std::span<const float>(payload));

    nlohmann::json entry;
    entry["file"] = name;
    entry["checksum"] = io::checksum_hex(io::fnv1a64_file(path));
    return entry;
}

void write_manifest(const SimParams& params, int n_sims, int n_steps, int k_frames, uint64_t seed,
                    int64_t window_px, const nlohmann::json& shards, const std::string& out_dir) {
    nlohmann::json manifest;
    manifest["format"] = "stlab-dataset";
    manifest["params"] = params_to_json(params);
    manifest["seed"] = seed;
    manifest["n_sims"] = n_sims;
    manifest["n_steps"] = n_steps;
    manifest["k_frames"] = k_frames;
    manifest["window_px"] = window_px;
    manifest["checksum"] = "fnv1a64";
    manifest["shards"] = shards;

    std::ofstream out(out_dir + "/manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("write_dataset: cannot open manifest in " + out_dir);
    out << manifest.dump(2) << '\n';
}

}  // namespace

void write_dataset(const Dataset& dataset, const SimParams& params, int n_steps, uint64_t seed,
                   const std::string& out_dir) {
    fs::create_directories(out_dir);
    nlohmann::json shards = nlohmann::json::array();
    for (size_t si = 0; si < dataset.scenarios().size(); ++si)
        shards.push_back(write_shard(dataset.scenarios()[si], out_dir, si));
    write_manifest(params, static_cast<int>(dataset.scenarios().size()), n_steps,
                   dataset.k_frames(), seed, dataset.px(), shards, out_dir);
}

void write_dataset_streamed(const SimParams& params, int n_sims, int n_steps, int k_frames,
                            uint64_t seed, const std::string& out_dir, int threads) {
    if (n_sims < 1) throw std::invalid_argument("write_dataset_streamed: n_sims must be positive");
    if (n_steps < k_frames)
        throw std::invalid_argument("write_dataset_streamed: n_steps must be at least k_frames");
    fs::create_directories(out_dir);

    const int block = std::max(1, 4 * resolve_threads(threads));
    nlohmann::json shards = nlohmann::json::array();
    for (int base = 0; base < n_sims; base += block) {
        const int nb = std::min(block, n_sims - base);
        std::vector<ScenarioFrames> scenarios(static_cast<size_t>(nb));
        parallel_for(nb, threads, [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i)
                scenarios[static_cast<size_t>(i)] =
                    run_scenario(params, n_steps, seed, static_cast<uint64_t>(base + i));
        });
        for (int i = 0; i < nb; ++i)
            shards.push_back(write_shard(scenarios[static_cast<size_t>(i)], out_dir,
                                         static_cast<size_t>(base + i)));
    }
    write_manifest(params, n_sims, n_steps, k_frames, seed, params.window().pixels(), shards,
                   out_dir);
}

Dataset read_dataset(const std::string& dir, int k_frames_override) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("read_dataset: cannot open " + dir + "/manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(in);
    if (manifest.value("format", "") != "stlab-dataset")
        throw std::runtime_error("read_dataset: not a dataset manifest");

    const int k_frames =
        k_frames_override > 0 ? k_frames_override : manifest.at("k_frames").get<int>();

    std::vector<ScenarioFrames> scenarios;
    for (const auto& entry : manifest.at("shards")) {
        const std::string path = dir + "/" + entry.at("file").get<std::string>();
        const std::string expect = entry.at("checksum").get<std::string>();
        const std::string actual = io::checksum_hex(io::fnv1a64_file(path));
        if (actual != expect)
            throw std::runtime_error("read_dataset: checksum mismatch for " + path + " (expected " +
                                     expect + ", got " + actual + ")");

        io::TensorArchive a = io::read_archive(path);
        if (a.dtype != "f32" || a.count != 2 || a.shape.size() != 3)
            throw std::runtime_error("read_dataset: unexpected shard layout in " + path);
        ScenarioFrames sc;
        sc.steps = a.shape[0];
        sc.px = a.shape[1];
        const int64_t half = a.record_size();
        sc.meas = Tensor<float>(a.shape, std::vector<float>(a.f32.begin(), a.f32.begin() + half));
        sc.target = Tensor<float>(a.shape, std::vector<float>(a.f32.begin() + half, a.f32.end()));
        scenarios.push_back(std::move(sc));
    }
    return Dataset(std::move(scenarios), k_frames);
}

}  // namespace stlab::mtt
