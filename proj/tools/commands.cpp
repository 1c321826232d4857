#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <locale>
#include <sstream>

#include <json.hpp>

#include "stlab/metrics.hpp"
#include "stlab/parallel.hpp"
#include "stlab/pgm.hpp"
#include "stlab/raster.hpp"

namespace stlab::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.imbue(std::locale::classic());
    out.precision(12);
    return out;
}

double ci95(const metrics::MeanSe& m) { return 1.96 * m.se; }

/// Pixel padding that makes floor(T/rho) divisible by the net's total
/// resample factor; returns {padded SimParams, pad_px}.
std::pair<mtt::SimParams, int64_t> padded_params(const ExperimentConfig& cfg, double window_T_m,
                                                 int resample) {
    mtt::SimParams p = cfg.params_for_window(window_T_m);
    int64_t px = p.window().pixels();
    int64_t pad = 0;
    if (px % resample != 0) {
        pad = resample - px % resample;
        p = cfg.params_for_window(static_cast<double>(px + pad) * p.resolution_rho);
    }
    return {p, pad};
}

struct TransferStats {
    metrics::MeanSe mse;
    metrics::MeanSe ospa;
};

TransferStats eval_at_window(const cnn::Network<float>& net, const ExperimentConfig& cfg,
                             const mtt::SimParams& params, uint64_t seed_base, int threads,
                             mtt::EvalFrame* first_frame, Tensor<float>* first_output) {
    const int n = cfg.eval.n_samples;
    std::vector<double> mses(static_cast<size_t>(n));
    std::vector<double> ospas(static_cast<size_t>(n));

    parallel_for(n, threads, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            mtt::EvalFrame f =
                mtt::scenario_eval_frame(params, cfg.sim.k_frames, seed_base, static_cast<uint64_t>(i));
            const Tensor<float> out = net.forward(f.input);
            mses[static_cast<size_t>(i)] = metrics::mse_windowed(out, f.target);

            // point extraction for OSPA
            const WindowSpec win = params.window();
            ImageD img{TensorD({win.pixels(), win.pixels()}), win, 1};
            for (int64_t p = 0; p < img.data.size(); ++p)
                img.data[p] = std::max(0.0, static_cast<double>(out[p]));
            raster::ExtractOptions opt;
            opt.seed = seed_base ^ (0x5eedULL + static_cast<uint64_t>(i));
            opt.support_rel_floor = 1e-3;
            // area-proportional cap keeps extraction granularity the same at
            // every window width
            opt.max_support = win.pixels() * win.pixels() / 4;
            opt.clamp_k = true;
            const PointSet est = raster::extract_points(img, opt);
            ospas[static_cast<size_t>(i)] = metrics::ospa(f.truth, est, cfg.eval.ospa_cutoff_m);

            if (i == 0 && first_frame != nullptr) {
                *first_frame = std::move(f);
                *first_output = out;
            }
        }
    });

    auto summarize = [](const std::vector<double>& v) {
        metrics::MeanSe m;
        m.n = static_cast<int64_t>(v.size());
        double s = 0.0;
        for (double x : v) s += x;
        m.mean = s / static_cast<double>(m.n);
        if (m.n > 1) {
            double q = 0.0;
            for (double x : v) q += (x - m.mean) * (x - m.mean);
            m.se = std::sqrt(q / static_cast<double>(m.n - 1)) / std::sqrt(static_cast<double>(m.n));
        }
        return m;
    };
    return {summarize(mses), summarize(ospas)};
}

TensorD channel_slice(const Tensor<float>& t, int64_t channel) {
    const int64_t h = t.extent(1);
    const int64_t w = t.extent(2);
    TensorD out({h, w});
    for (int64_t i = 0; i < h * w; ++i)
        out[i] = static_cast<double>(t.data()[channel * h * w + i]);
    return out;
}

}  // namespace

void cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir, int threads) {
    mtt::write_dataset_streamed(cfg.sim.params, cfg.sim.n_sims, cfg.sim.n_steps, cfg.sim.k_frames,
                                cfg.seeds.sim, out_dir, threads);
    std::cout << "simulate: wrote " << cfg.sim.n_sims << " shards ("
              << cfg.sim.n_steps - cfg.sim.k_frames + 1 << " pairs each) to " << out_dir << "\n";
}

void cmd_train(const ExperimentConfig& cfg, const std::string& data_dir, const std::string& out_dir,
               int threads) {
    mtt::Dataset data = mtt::read_dataset(data_dir, cfg.sim.k_frames);
    fs::create_directories(out_dir);

    cnn::Network<float> net =
        cnn::Network<float>::randomized(2, cfg.arch, cfg.seeds.train ^ 0x1217ULL);

    cnn::TrainConfig tc = cfg.train;
    tc.seed = cfg.seeds.train;
    std::vector<double> history;
    try {
        history = cnn::train(net, data.view(), tc, threads);
    } catch (const std::runtime_error& e) {
        throw NumericalError(e.what());
    }

    cnn::save_network(net, out_dir + "/model.json", out_dir + "/model.sta");
    auto csv = open_csv(out_dir + "/loss.csv");
    csv << "epoch,mean_loss\n";
    for (size_t e = 0; e < history.size(); ++e) csv << e << "," << history[e] << "\n";

    if (!history.empty() && !std::isfinite(history.back()))
        throw NumericalError("final loss is not finite");
    std::cout << "train: " << history.size() << " epochs";
    if (!history.empty())
        std::cout << ", first " << history.front() << " last " << history.back();
    std::cout << ", model at " << out_dir << "/model.json\n";
}

void cmd_eval_transfer(const ExperimentConfig& cfg, const std::string& model_path,
                       const std::string& out_dir, int threads) {
    const cnn::Network<float> net = cnn::load_network(model_path);
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/pgm");

    auto csv = open_csv(out_dir + "/transfer.csv");
    csv << "T_km,n_samples,mse_mean,mse_ci95,ospa_mean,ospa_ci95,pad_px\n";

    for (size_t ti = 0; ti < cfg.eval.t_list_km.size(); ++ti) {
        const double t_km = cfg.eval.t_list_km[ti];
        const auto [params, pad] = padded_params(cfg, t_km * 1000.0, net.total_resample());

        mtt::EvalFrame first;
        Tensor<float> first_out;
        const TransferStats stats =
            eval_at_window(net, cfg, params, cfg.seeds.eval + ti, threads, &first, &first_out);

        csv << t_km << "," << cfg.eval.n_samples << "," << stats.mse.mean << "," << ci95(stats.mse)
            << "," << stats.ospa.mean << "," << ci95(stats.ospa) << "," << pad << "\n";

        const std::string tag = std::to_string(ti);
        io::write_pgm(out_dir + "/pgm/input_T" + tag + ".pgm",
                      channel_slice(first.input, first.input.extent(0) - 1), /*log_rescale=*/true);
        io::write_pgm(out_dir + "/pgm/output_T" + tag + ".pgm", channel_slice(first_out, 0));
        io::write_pgm(out_dir + "/pgm/target_T" + tag + ".pgm", channel_slice(first.target, 0));
        std::cout << "eval-transfer: T=" << t_km << " km mse=" << stats.mse.mean
                  << " ospa=" << stats.ospa.mean << "\n";
    }
}

void cmd_bound(const ExperimentConfig& cfg, const std::string& model_path,
               const std::string& data_dir, const std::string& out_dir, int threads) {
    const cnn::Network<float> net = cnn::load_network(model_path);
    const mtt::Dataset data = mtt::read_dataset(data_dir, cfg.sim.k_frames);
    fs::create_directories(out_dir);

    const int64_t a_px = data.px();
    const int64_t b_px = cfg.eval.bound_output_px;
    if (b_px < 1 || b_px > a_px || (a_px - b_px) % 2 != 0)
        throw ConfigError("bound: output window must satisfy 0 < B <= A with even A - B");
    const int64_t margin = (a_px - b_px) / 2;

    int max_kernel = 0;
    bool bias_free = true;
    for (const auto& s : net.specs()) {
        max_kernel = std::max(max_kernel, s.kernel_width);
        bias_free = bias_free && !s.bias;
    }

    metrics::BoundInputs in;
    in.input_width_A = static_cast<double>(a_px);
    in.output_width_B = static_cast<double>(b_px);
    in.layers_L = static_cast<int>(net.specs().size());
    in.filter_width_K = max_kernel;
    in.dim = 2;
    in.filter_l1_product_H = cnn::filter_l1_product(net);
    in.input_second_moment = data.input_second_moment();

    metrics::BoundReport rep;
    rep.inputs = in;
    rep.loss_window = metrics::estimate_loss_window(net, cfg.sim.params, cfg.sim.k_frames,
                                                    cfg.eval.n_samples, cfg.seeds.eval,
                                                    static_cast<int>(margin), threads);
    rep.constant_C = metrics::bound_constant(in);
    rep.bound = metrics::bound_value(rep.loss_window.mean, in);

    const auto [large_params, pad] =
        padded_params(cfg, cfg.eval.large_t_km * 1000.0, net.total_resample());
    rep.loss_large = metrics::estimate_loss_large(net, large_params, cfg.sim.k_frames,
                                                  cfg.eval.n_samples, cfg.seeds.eval + 104729,
                                                  static_cast<int>(margin), threads);
    const double comparison_se = std::hypot(rep.loss_window.se, rep.loss_large.se);
    rep.verdict = rep.loss_large.mean <= rep.bound + 3.0 * comparison_se;

    nlohmann::json j;
    j["inputs"] = {{"A_px", in.input_width_A},
                   {"B_px", in.output_width_B},
                   {"L", in.layers_L},
                   {"K", in.filter_width_K},
                   {"d", in.dim},
                   {"H", in.filter_l1_product_H},
                   {"input_second_moment", in.input_second_moment}};
    j["mode"] = bias_free ? "strict (bias-free)" : "standard (approximate, biases present)";
    j["receptive_margin_px"] = cnn::receptive_margin_px(net.specs());
    j["crop_margin_px"] = margin;
    j["loss_window"] = {{"mean", rep.loss_window.mean}, {"se", rep.loss_window.se}, {"n", rep.loss_window.n}};
    j["C"] = rep.constant_C;
    j["bound_value"] = rep.bound;
    j["large_T_km"] = cfg.eval.large_t_km;
    j["large_pad_px"] = pad;
    j["loss_large"] = {{"mean", rep.loss_large.mean}, {"se", rep.loss_large.se}, {"n", rep.loss_large.n}};
    j["verdict"] = rep.verdict;

    std::ofstream out(out_dir + "/bound.json", std::ios::trunc);
    if (!out) throw DataError("cannot open " + out_dir + "/bound.json");
    out << j.dump(2) << '\n';
    std::cout << "bound: loss_window=" << rep.loss_window.mean << " C=" << rep.constant_C
              << " bound=" << rep.bound << " loss_large=" << rep.loss_large.mean
              << " verdict=" << (rep.verdict ? "holds" : "violated") << "\n";
}

void cmd_mid(const ExperimentConfig& cfg, const std::string& out_dir, int threads) {
    fs::create_directories(out_dir);

    mid::Placer placer;
    cnn::Network<float> net;
    if (cfg.mid.placer == "network") {
        if (cfg.mid.model.empty()) throw ConfigError("mid: network placer needs mid.model");
        net = cnn::load_network(cfg.mid.model);
        placer = mid::make_network_placer(net);
    } else {
        placer = mid::make_heuristic_placer(cfg.mid.max_hop_m);
    }

    const auto rows = mid::evaluate_mid(placer, cfg.mid.window_list_m, cfg.mid.n_samples,
                                        cfg.mid.channel, cfg.seeds.mid, threads);

    auto csv = open_csv(out_dir + "/mid.csv");
    csv << "window_m,task_agents,comm_agents_mean,amtp_mean_mw,amtp_std_mw\n";
    for (const auto& r : rows) {
        csv << r.window_m << "," << r.task_agents << "," << r.comm_agents_mean << ","
            << r.amtp_mean_mw << "," << r.amtp_std_mw << "\n";
        std::cout << "mid: T=" << r.window_m << " m amtp=" << r.amtp_mean_mw << " +- "
                  << r.amtp_std_mw << " mW\n";
    }
}

}  // namespace stlab::cli
