#include "config.hpp"

#include <fstream>
#include <set>

namespace stlab::cli {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw ConfigError("config: unknown key '" + key + "' in " + where);
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_sim(const json& j, SimSection& out) {
    check_keys(j, "sim",
               {"window_T_m", "n_sims", "n_steps", "k_frames", "p_death", "p_detect", "sigma_a",
                "sigma_v", "sigma_target", "eta_r", "eta_theta", "lambda_birth", "lambda_initial",
                "lambda_sensor", "lambda_clutter", "sensor_range_R", "tau", "resolution_rho"});
    if (j.contains("window_T_m")) out.params = mtt::SimParams::defaults(j.at("window_T_m").get<double>());
    maybe(j, "n_sims", out.n_sims);
    maybe(j, "n_steps", out.n_steps);
    maybe(j, "k_frames", out.k_frames);
    auto& p = out.params;
    maybe(j, "p_death", p.p_death);
    maybe(j, "p_detect", p.p_detect);
    maybe(j, "sigma_a", p.sigma_a);
    maybe(j, "sigma_v", p.sigma_v);
    maybe(j, "sigma_target", p.sigma_target);
    maybe(j, "eta_r", p.eta_r);
    maybe(j, "eta_theta", p.eta_theta);
    maybe(j, "lambda_birth", p.lambda_birth);
    maybe(j, "lambda_initial", p.lambda_initial);
    maybe(j, "lambda_sensor", p.lambda_sensor);
    maybe(j, "lambda_clutter", p.lambda_clutter);
    maybe(j, "sensor_range_R", p.sensor_range_R);
    maybe(j, "tau", p.tau);
    maybe(j, "resolution_rho", p.resolution_rho);
}

cnn::LayerSpec parse_layer(const json& j, const std::string& where) {
    check_keys(j, where,
               {"kind", "in_features", "out_features", "kernel_width", "resample", "nonlin",
                "nonlin_param", "padding", "bias", "nn_upsample"});
    cnn::LayerSpec s;
    s.kind = cnn::layer_kind_from(j.at("kind").get<std::string>());
    s.in_features = j.at("in_features").get<int>();
    s.out_features = j.at("out_features").get<int>();
    s.kernel_width = j.at("kernel_width").get<int>();
    maybe(j, "resample", s.resample);
    if (j.contains("nonlin")) s.nonlin = cnn::nonlin_from(j.at("nonlin").get<std::string>());
    maybe(j, "nonlin_param", s.nonlin_param);
    if (j.contains("padding")) s.padding = cnn::padding_from(j.at("padding").get<std::string>());
    maybe(j, "bias", s.bias);
    maybe(j, "nn_upsample", s.nn_upsample);
    return s;
}

void parse_train(const json& j, cnn::TrainConfig& out) {
    check_keys(j, "train", {"epochs", "batch_size", "learning_rate", "weight_decay"});
    maybe(j, "epochs", out.epochs);
    maybe(j, "batch_size", out.batch_size);
    maybe(j, "learning_rate", out.learning_rate);
    maybe(j, "weight_decay", out.weight_decay);
}

void parse_eval(const json& j, EvalSection& out) {
    check_keys(j, "eval",
               {"T_list_km", "n_samples", "ospa_cutoff_m", "crop_margin_px", "bound_output_px",
                "large_T_km"});
    maybe(j, "T_list_km", out.t_list_km);
    maybe(j, "n_samples", out.n_samples);
    maybe(j, "ospa_cutoff_m", out.ospa_cutoff_m);
    maybe(j, "crop_margin_px", out.crop_margin_px);
    maybe(j, "bound_output_px", out.bound_output_px);
    maybe(j, "large_T_km", out.large_t_km);
}

void parse_mid(const json& j, MidSection& out) {
    check_keys(j, "mid",
               {"window_list_m", "n_samples", "placer", "max_hop_m", "model", "channel"});
    maybe(j, "window_list_m", out.window_list_m);
    maybe(j, "n_samples", out.n_samples);
    maybe(j, "placer", out.placer);
    maybe(j, "max_hop_m", out.max_hop_m);
    maybe(j, "model", out.model);
    if (j.contains("channel")) {
        const json& c = j.at("channel");
        check_keys(c, "mid.channel", {"noise_P_N0", "efficiency_K", "exponent_n", "rate_R"});
        maybe(c, "noise_P_N0", out.channel.noise_P_N0);
        maybe(c, "efficiency_K", out.channel.efficiency_K);
        maybe(c, "exponent_n", out.channel.exponent_n);
        maybe(c, "rate_R", out.channel.rate_R);
    }
    if (out.placer != "heuristic" && out.placer != "network")
        throw ConfigError("config: mid.placer must be 'heuristic' or 'network'");
}

void parse_seeds(const json& j, Seeds& out) {
    check_keys(j, "seeds", {"sim", "train", "eval", "mid"});
    maybe(j, "sim", out.sim);
    maybe(j, "train", out.train);
    maybe(j, "eval", out.eval);
    maybe(j, "mid", out.mid);
}

}  // namespace

std::vector<cnn::LayerSpec> desk_arch(int in_channels) {
    using cnn::LayerKind;
    using cnn::Nonlin;
    auto layer = [](LayerKind kind, int fi, int fo, int k, int m, Nonlin nl) {
        cnn::LayerSpec s;
        s.kind = kind;
        s.in_features = fi;
        s.out_features = fo;
        s.kernel_width = k;
        s.resample = m;
        s.nonlin = nl;
        return s;
    };
    return {
        layer(LayerKind::encoder, in_channels, 16, 5, 2, Nonlin::leaky_relu),
        layer(LayerKind::encoder, 16, 16, 5, 2, Nonlin::leaky_relu),
        layer(LayerKind::hidden, 16, 64, 1, 1, Nonlin::leaky_relu),
        layer(LayerKind::hidden, 64, 64, 1, 1, Nonlin::leaky_relu),
        layer(LayerKind::decoder, 64, 16, 5, 2, Nonlin::leaky_relu),
        layer(LayerKind::decoder, 16, 1, 5, 2, Nonlin::identity),
    };
}

std::vector<cnn::LayerSpec> paper_arch(int in_channels) {
    using cnn::LayerKind;
    using cnn::Nonlin;
    std::vector<cnn::LayerSpec> arch;
    auto add = [&](LayerKind kind, int fi, int fo, int k, int m, Nonlin nl) {
        cnn::LayerSpec s;
        s.kind = kind;
        s.in_features = fi;
        s.out_features = fo;
        s.kernel_width = k;
        s.resample = m;
        s.nonlin = nl;
        arch.push_back(s);
    };
    add(LayerKind::encoder, in_channels, 128, 9, 2, Nonlin::leaky_relu);
    add(LayerKind::encoder, 128, 128, 9, 2, Nonlin::leaky_relu);
    add(LayerKind::encoder, 128, 128, 9, 2, Nonlin::leaky_relu);
    add(LayerKind::hidden, 128, 1024, 1, 1, Nonlin::leaky_relu);
    add(LayerKind::hidden, 1024, 1024, 1, 1, Nonlin::leaky_relu);
    add(LayerKind::hidden, 1024, 1024, 1, 1, Nonlin::leaky_relu);
    add(LayerKind::hidden, 1024, 1024, 1, 1, Nonlin::leaky_relu);
    add(LayerKind::decoder, 1024, 128, 9, 2, Nonlin::leaky_relu);
    add(LayerKind::decoder, 128, 128, 9, 2, Nonlin::leaky_relu);
    add(LayerKind::decoder, 128, 1, 9, 2, Nonlin::identity);
    return arch;
}

mtt::SimParams ExperimentConfig::params_for_window(double window_T_m) const {
    mtt::SimParams p = sim.params;
    const double scale = (window_T_m / p.window_T) * (window_T_m / p.window_T);
    p.lambda_birth *= scale;
    p.lambda_initial *= scale;
    p.lambda_sensor *= scale;
    p.window_T = window_T_m;
    return p;
}

ExperimentConfig preset(const std::string& name) {
    ExperimentConfig cfg;
    if (name == "desk" || name.empty()) {
        cfg.sim.n_sims = 500;
        cfg.sim.n_steps = 50;
        cfg.sim.k_frames = 20;
        cfg.arch = desk_arch(cfg.sim.k_frames);
        cfg.train.epochs = 20;
        cfg.train.batch_size = 32;
        cfg.train.learning_rate = 1e-3;
        cfg.train.weight_decay = 0.01;
    } else if (name == "paper") {
        cfg.sim.n_sims = 10000;
        cfg.sim.n_steps = 100;
        cfg.sim.k_frames = 20;
        cfg.arch = paper_arch(cfg.sim.k_frames);
        cfg.train.epochs = 84;
        cfg.train.batch_size = 32;
        cfg.train.learning_rate = 6.112e-6;
        cfg.train.weight_decay = 0.07490;
        cfg.eval.t_list_km = {1.0, 2.0, 3.0, 4.0, 5.0};
    } else {
        throw ConfigError("unknown preset '" + name + "' (use desk or paper)");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& preset_name, const std::string& config_path) {
    ExperimentConfig cfg = preset(preset_name);
    if (config_path.empty()) return cfg;

    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config " + config_path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    try {
        check_keys(j, "config", {"sim", "arch", "train", "eval", "mid", "seeds"});
        if (j.contains("sim")) parse_sim(j.at("sim"), cfg.sim);
        if (j.contains("arch")) {
            if (!j.at("arch").is_array()) throw ConfigError("config: arch must be an array");
            cfg.arch.clear();
            int idx = 0;
            for (const auto& lj : j.at("arch"))
                cfg.arch.push_back(parse_layer(lj, "arch[" + std::to_string(idx++) + "]"));
        } else {
            // keep the preset architecture but track a changed stack depth
            cfg.arch = desk_arch(cfg.sim.k_frames);
            if (preset_name == "paper") cfg.arch = paper_arch(cfg.sim.k_frames);
        }
        if (j.contains("train")) parse_train(j.at("train"), cfg.train);
        if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
        if (j.contains("mid")) parse_mid(j.at("mid"), cfg.mid);
        if (j.contains("seeds")) parse_seeds(j.at("seeds"), cfg.seeds);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config error: ") + e.what());
    }

    try {
        cfg.sim.params.validate();
        for (const auto& s : cfg.arch) s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config validation: ") + e.what());
    }
    if (cfg.sim.n_steps < cfg.sim.k_frames)
        throw ConfigError("config: n_steps must be at least k_frames (frames before the stack "
                          "fills are excluded)");
    return cfg;
}

void override_seeds(ExperimentConfig& cfg, uint64_t master_seed) {
    cfg.seeds.sim = master_seed;
    cfg.seeds.train = master_seed + 1;
    cfg.seeds.eval = master_seed + 2;
    cfg.seeds.mid = master_seed + 3;
}

}  // namespace stlab::cli
