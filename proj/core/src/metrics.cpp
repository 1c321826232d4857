#include "stlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stlab/assignment.hpp"
#include "stlab/parallel.hpp"
#include "stlab/rng.hpp"

namespace stlab::metrics {

template <typename T>
double mse_windowed(const Tensor<T>& predicted, const Tensor<T>& target) {
    if (!predicted.same_shape(target)) throw std::invalid_argument("mse_windowed: shape mismatch");
    if (predicted.empty()) return 0.0;
    double acc = 0.0;
    const T* p = predicted.data();
    const T* t = target.data();
    for (int64_t i = 0; i < predicted.size(); ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(predicted.size());
}

template <typename T>
Tensor<T> crop_border(const Tensor<T>& t, int spatial_dims, int64_t margin) {
    if (margin == 0) return t;
    if (margin < 0) throw std::invalid_argument("crop_border: negative margin");
    const int rank = t.rank();
    if (spatial_dims > rank) throw std::invalid_argument("crop_border: spatial_dims exceeds rank");

    std::vector<int64_t> out_shape = t.shape();
    for (int a = rank - spatial_dims; a < rank; ++a) {
        out_shape[static_cast<size_t>(a)] -= 2 * margin;
        if (out_shape[static_cast<size_t>(a)] < 1)
            throw std::invalid_argument("crop_border: margin eats the whole tensor");
    }
    Tensor<T> out(out_shape);

    // iterate output positions; ranks used in this project are <= 3
    if (rank == 1) {
        for (int64_t i = 0; i < out_shape[0]; ++i) out[i] = t[i + margin];
    } else if (rank == 2) {
        const int64_t m0 = spatial_dims >= 2 ? margin : 0;
        for (int64_t i = 0; i < out_shape[0]; ++i)
            for (int64_t j = 0; j < out_shape[1]; ++j) out.at(i, j) = t.at(i + m0, j + margin);
    } else if (rank == 3) {
        const int64_t m0 = spatial_dims >= 3 ? margin : 0;
        const int64_t m1 = spatial_dims >= 2 ? margin : 0;
        for (int64_t c = 0; c < out_shape[0]; ++c)
            for (int64_t i = 0; i < out_shape[1]; ++i)
                for (int64_t j = 0; j < out_shape[2]; ++j)
                    out.at(c, i, j) = t.at(c + m0, i + m1, j + margin);
    } else {
        throw std::invalid_argument("crop_border: rank > 3 unsupported");
    }
    return out;
}

double ospa(const PointSet& a, const PointSet& b, double cutoff_c, const OspaOptions& opt) {
    if (a.dim() != b.dim()) throw std::invalid_argument("ospa: dimension mismatch");
    if (!(cutoff_c > 0.0)) throw std::invalid_argument("ospa: cutoff must be positive");

    const PointSet& larger = a.size() >= b.size() ? a : b;
    const PointSet& smaller = a.size() >= b.size() ? b : a;
    const int64_t n = larger.size();
    const int64_t m = smaller.size();
    if (n == 0) return 0.0;

    double matched = 0.0;
    if (m > 0) {
        std::vector<double> cost(static_cast<size_t>(m * n));
        for (int64_t i = 0; i < m; ++i) {
            const auto pi = smaller.point(i);
            for (int64_t j = 0; j < n; ++j) {
                const auto pj = larger.point(j);
                double q = 0.0;
                for (int d = 0; d < smaller.dim(); ++d)
                    q += (pi[static_cast<size_t>(d)] - pj[static_cast<size_t>(d)]) *
                         (pi[static_cast<size_t>(d)] - pj[static_cast<size_t>(d)]);
                if (opt.schuhmacher_form) q = std::min(q, cutoff_c * cutoff_c);
                cost[static_cast<size_t>(i * n + j)] = q;
            }
        }
        std::vector<int> row_to_col;
        matched = solve_assignment(cost, static_cast<int>(m), static_cast<int>(n), row_to_col);
    }
    const double gap = opt.schuhmacher_form ? cutoff_c * cutoff_c * static_cast<double>(n - m)
                                            : cutoff_c * static_cast<double>(n - m);
    return std::sqrt((matched + gap) / static_cast<double>(n));
}

double bound_constant(const BoundInputs& in) {
    if (!(in.output_width_B > 0.0) || in.input_width_A < in.output_width_B)
        throw std::invalid_argument("bound_constant: requires A >= B > 0");
    if (in.layers_L < 0 || in.filter_width_K < 0.0 || in.filter_l1_product_H < 0.0)
        throw std::invalid_argument("bound_constant: negative inputs");
    const double reach = in.output_width_B + static_cast<double>(in.layers_L) * in.filter_width_K;
    const double excess =
        std::pow(reach, in.dim) - std::pow(in.input_width_A, in.dim);
    const double h2 = in.filter_l1_product_H * in.filter_l1_product_H;
    return h2 / std::pow(in.output_width_B, in.dim) * std::max(0.0, excess);
}

double bound_value(double loss_window, const BoundInputs& in) {
    const double c = bound_constant(in);
    const double ec = in.input_second_moment * c;
    return loss_window + ec + std::sqrt(loss_window * ec);
}

namespace {

MeanSe mean_se(const std::vector<double>& values) {
    MeanSe r;
    r.n = static_cast<int64_t>(values.size());
    if (r.n == 0) return r;
    double sum = 0.0;
    for (double v : values) sum += v;
    r.mean = sum / static_cast<double>(r.n);
    if (r.n > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - r.mean) * (v - r.mean);
        r.se = std::sqrt(sq / static_cast<double>(r.n - 1)) / std::sqrt(static_cast<double>(r.n));
    }
    return r;
}

MeanSe scenario_loss_sweep(const cnn::Network<float>& net, const mtt::SimParams& params,
                           int k_frames, int n_samples, uint64_t seed, int crop_margin_px,
                           int threads) {
    std::vector<double> losses(static_cast<size_t>(n_samples));
    parallel_for(n_samples, threads, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const mtt::EvalFrame f =
                mtt::scenario_eval_frame(params, k_frames, seed, static_cast<uint64_t>(i));
            const Tensor<float> pred = net.forward(f.input);
            const Tensor<float> pc = crop_border(pred, 2, crop_margin_px);
            const Tensor<float> tc = crop_border(f.target, 2, crop_margin_px);
            losses[static_cast<size_t>(i)] = mse_windowed(pc, tc);
        }
    });
    return mean_se(losses);
}

}  // namespace

MeanSe estimate_loss_large(const cnn::Network<float>& net, const mtt::SimParams& params,
                           int k_frames, int n_samples, uint64_t seed, int crop_margin_px,
                           int threads) {
    if (n_samples < 30)
        throw std::invalid_argument("estimate_loss_large: need at least 30 samples");
    return scenario_loss_sweep(net, params, k_frames, n_samples, seed, crop_margin_px, threads);
}

MeanSe estimate_loss_window(const cnn::Network<float>& net, const mtt::SimParams& params,
                            int k_frames, int n_samples, uint64_t seed, int crop_margin_px,
                            int threads) {
    if (n_samples < 2) throw std::invalid_argument("estimate_loss_window: need at least 2 samples");
    return scenario_loss_sweep(net, params, k_frames, n_samples, seed, crop_margin_px, threads);
}

// ---------------------------------------------------------------------------
// windowing inequality

namespace {

double l2_window(const Tensor<double>& signal, int64_t width) {
    const int64_t w = signal.extent(signal.rank() - 1);
    const int64_t b = std::min(width, w);
    const int64_t start = (w - b) / 2;
    double acc = 0.0;
    for (int64_t i = start; i < start + b; ++i) acc += signal[i] * signal[i];
    return std::sqrt(acc);
}

Tensor<double> window_mask(const Tensor<double>& signal, int64_t width) {
    Tensor<double> out = signal;
    const int64_t w = signal.extent(signal.rank() - 1);
    const int64_t b = std::min(width, w);
    const int64_t start = (w - b) / 2;
    for (int64_t i = 0; i < w; ++i)
        if (i < start || i >= start + b) out[i] = 0.0;
    return out;
}

}  // namespace

InequalityCase window_inequality_case(const cnn::Network<double>& net,
                                      const Tensor<double>& signal, int64_t window_A,
                                      int64_t window_B) {
    if (net.spatial_dim() != 1)
        throw std::invalid_argument("window_inequality_case: 1-D networks only");
    int64_t lk = 0;
    int64_t support_margin = 0;
    for (const auto& s : net.specs()) {
        if (s.kind != cnn::LayerKind::hidden || s.resample != 1)
            throw std::invalid_argument("window_inequality_case: stride-1 hidden layers only");
        if (s.in_features != 1 || s.out_features != 1)
            throw std::invalid_argument("window_inequality_case: single-channel networks only");
        if (s.bias) throw std::invalid_argument("window_inequality_case: bias-free networks only");
        if (s.padding != cnn::Padding::none)
            throw std::invalid_argument("window_inequality_case: padding must be none");
        lk += s.kernel_width;
        support_margin += (s.kernel_width - 1) / 2;
    }
    if (signal.rank() != 2 || signal.extent(0) != 1)
        throw std::invalid_argument("window_inequality_case: signal must be [1, W]");

    // compact support: the grid edge must be dead so that the zero-padded
    // grid convolution equals the infinite-support convolution
    const int64_t w = signal.extent(1);
    for (int64_t i = 0; i < std::min<int64_t>(support_margin, w); ++i)
        if (signal[i] != 0.0 || signal[w - 1 - i] != 0.0)
            throw std::invalid_argument(
                "window_inequality_case: signal support touches the grid margin");

    // the grid stands in for the real line; run the same filters with
    // zero_same so no samples are dropped (reads beyond the support are
    // exact zeros of the infinite signal)
    std::vector<cnn::LayerSpec> wide_specs = net.specs();
    for (auto& s : wide_specs) s.padding = cnn::Padding::zero_same;
    cnn::Network<double> wide(1, wide_specs);
    for (size_t l = 0; l < wide.layers().size(); ++l) wide.layers()[l] = net.layers()[l];

    const Tensor<double> masked = window_mask(signal, window_A);
    const Tensor<double> out_full = net.specs().empty() ? signal : wide.forward(signal);
    const Tensor<double> out_masked = net.specs().empty() ? masked : wide.forward(masked);

    Tensor<double> diff_out(out_full.shape());
    for (int64_t i = 0; i < diff_out.size(); ++i) diff_out[i] = out_full[i] - out_masked[i];
    Tensor<double> diff_in(signal.shape());
    for (int64_t i = 0; i < diff_in.size(); ++i) diff_in[i] = signal[i] - masked[i];

    InequalityCase c;
    c.lhs = l2_window(diff_out, window_B);
    c.rhs = l2_window(diff_in, window_B + lk) * cnn::filter_l1_product(net);
    return c;
}

InequalityStats verify_window_inequality(int64_t n_trials, uint64_t seed, double slack) {
    InequalityStats stats;
    stats.trials = n_trials;
    stats.min_margin = std::numeric_limits<double>::infinity();
    double margin_sum = 0.0;

    for (int64_t trial = 0; trial < n_trials; ++trial) {
        Rng rng(seed, static_cast<uint64_t>(trial));
        const int depth = static_cast<int>(rng.below(5));  // 0..4 layers
        const int k = 1 + 2 * static_cast<int>(rng.below(4));

        const int64_t grid = 256;
        Tensor<double> x({1, grid});
        const int64_t support = 16 + 2 * static_cast<int64_t>(rng.below(48));
        const int64_t start = (grid - support) / 2;
        for (int64_t i = start; i < start + support; ++i) x[i] = rng.normal();

        const int64_t window_A = 4 + 2 * static_cast<int64_t>(rng.below(60));
        const int64_t window_B = 2 + 2 * static_cast<int64_t>(rng.below(window_A / 2));

        InequalityCase c;
        if (depth == 0) {
            const Tensor<double> masked = window_mask(x, window_A);
            Tensor<double> diff(x.shape());
            for (int64_t i = 0; i < x.size(); ++i) diff[i] = x[i] - masked[i];
            c.lhs = l2_window(diff, window_B);
            c.rhs = l2_window(diff, window_B);  // L = 0: definitional equality
        } else {
            std::vector<cnn::LayerSpec> specs;
            for (int l = 0; l < depth; ++l) {
                cnn::LayerSpec s;
                s.kind = cnn::LayerKind::hidden;
                s.in_features = s.out_features = 1;
                s.kernel_width = k;
                s.padding = cnn::Padding::none;
                s.bias = false;
                const double pick = rng.uniform01();
                if (pick < 0.25) {
                    s.nonlin = cnn::Nonlin::tanh;
                } else if (pick < 0.5) {
                    s.nonlin = cnn::Nonlin::relu;
                } else if (pick < 0.75) {
                    s.nonlin = cnn::Nonlin::leaky_relu;
                    s.nonlin_param = rng.uniform01();
                } else {
                    s.nonlin = cnn::Nonlin::identity;
                }
                specs.push_back(s);
            }
            cnn::Network<double> net(1, specs);
            for (auto& layer : net.layers()) {
                double* wp = layer.weights.data();
                const double style = rng.uniform01();
                if (style < 0.15) {
                    // shift kernel: the near-tight case
                    for (int64_t i = 0; i < layer.weights.size(); ++i) wp[i] = 0.0;
                    wp[rng.below(static_cast<uint64_t>(k))] = rng.bernoulli(0.5) ? 1.0 : -1.0;
                } else {
                    double sum_abs = 0.0;
                    for (int64_t i = 0; i < layer.weights.size(); ++i) {
                        wp[i] = rng.uniform(-1.0, 1.0);
                        sum_abs += std::abs(wp[i]);
                    }
                    if (style < 0.55 && sum_abs > 0.0)
                        for (int64_t i = 0; i < layer.weights.size(); ++i) wp[i] /= sum_abs;
                }
            }
            c = window_inequality_case(net, x, window_A, window_B);
        }

        const double margin = c.rhs - c.lhs;
        stats.min_margin = std::min(stats.min_margin, margin);
        margin_sum += margin;
        if (!c.holds(slack)) ++stats.failures;
    }
    stats.mean_margin = n_trials ? margin_sum / static_cast<double>(n_trials) : 0.0;
    return stats;
}

template double mse_windowed<float>(const Tensor<float>&, const Tensor<float>&);
template double mse_windowed<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> crop_border<float>(const Tensor<float>&, int, int64_t);
template Tensor<double> crop_border<double>(const Tensor<double>&, int, int64_t);

}  // namespace stlab::metrics
