#pragma once

#include <cstdint>
#include <vector>

#include "stlab/convnet.hpp"
#include "stlab/mtt_sim.hpp"
#include "stlab/points.hpp"
#include "stlab/tensor.hpp"

namespace stlab::metrics {

/// Mean per-pixel squared difference; shapes must match exactly.
template <typename T>
double mse_windowed(const Tensor<T>& predicted, const Tensor<T>& target);

/// Crops `margin` pixels off both ends of the trailing `spatial_dims` axes.
template <typename T>
Tensor<T> crop_border(const Tensor<T>& t, int spatial_dims, int64_t margin);

struct OspaOptions {
    /// The default follows the (unsquared, untruncated) c(n-m) form of the
    /// reference definition; the Schuhmacher form truncates distances at c
    /// and weighs the cardinality gap by c^2.
    bool schuhmacher_form = false;
};

/// Optimal sub-pattern assignment distance with cutoff c:
/// sqrt((min_assign sum ||x_i - y_pi(i)||^2 + c (n - m)) / n) with
/// n = max(|X|, |Y|), m = min. Both sets empty gives 0.
double ospa(const PointSet& a, const PointSet& b, double cutoff_c, const OspaOptions& opt = {});

/// Inputs of the transfer bound, all widths in pixels, the second moment in
/// per-pixel intensity units.
struct BoundInputs {
    double input_width_A = 0.0;
    double output_width_B = 0.0;
    int layers_L = 0;
    double filter_width_K = 0.0;
    int dim = 2;
    double filter_l1_product_H = 0.0;
    double input_second_moment = 0.0;
};

/// C = H^2 / B^d * max(0, (B + L K)^d - A^d).
double bound_constant(const BoundInputs& in);

/// loss_window + E[X^2] C + sqrt(loss_window E[X^2] C).
double bound_value(double loss_window, const BoundInputs& in);

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    int64_t n = 0;
};

struct BoundReport {
    BoundInputs inputs;
    MeanSe loss_window;
    double constant_C = 0.0;
    double bound = 0.0;
    MeanSe loss_large;
    // both sides are Monte Carlo estimates, so the slack is three combined
    // standard errors: loss_large.mean <= bound + 3 * hypot(se_w, se_l)
    bool verdict = false;
};

/// Monte Carlo estimate of the large-window loss: fresh scenarios at
/// params.window_T, full-size forward passes (no retraining), MSE over the
/// window with crop_margin_px trimmed per side. Requires n_samples >= 30.
MeanSe estimate_loss_large(const cnn::Network<float>& net, const mtt::SimParams& params,
                           int k_frames, int n_samples, uint64_t seed, int crop_margin_px = 0,
                           int threads = 0);

/// Windowed loss of the net on held-out scenarios at the training scale:
/// input window = the full image (A), loss over the central crop (B).
MeanSe estimate_loss_window(const cnn::Network<float>& net, const mtt::SimParams& params,
                            int k_frames, int n_samples, uint64_t seed, int crop_margin_px,
                            int threads = 0);

// ---------------------------------------------------------------------------
// Numerical check of the windowing inequality
//   ||w_B (x_L - x~_L)||_2 <= ||w_{B+LK} (X - w_A X)||_2 * prod ||h_l||_1
// on discrete 1-D signals. Networks must be bias-free, single-channel,
// stride-1 and declared without padding; signals are compactly supported on
// a grid wide enough that no layer output touches the grid boundary.

struct InequalityCase {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds(double slack = 1e-9) const { return lhs <= rhs + slack; }
};

/// Evaluates one instance. `signal` is [1, W]; window widths are pixel
/// counts (even) of the centered output/input windows.
InequalityCase window_inequality_case(const cnn::Network<double>& net,
                                      const Tensor<double>& signal, int64_t window_A,
                                      int64_t window_B);

struct InequalityStats {
    int64_t trials = 0;
    int64_t failures = 0;
    double min_margin = 0.0;   // min over trials of rhs - lhs
    double mean_margin = 0.0;
    bool all_hold() const { return failures == 0; }
};

/// Randomized verification: random single-channel 1-D bias-free nets
/// (depth 0..4, mixed nonlinearities, including near-tight normalized and
/// shift kernels) against random compactly supported signals.
InequalityStats verify_window_inequality(int64_t n_trials, uint64_t seed, double slack = 1e-9);

}  // namespace stlab::metrics
