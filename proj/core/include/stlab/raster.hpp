#pragma once

#include <optional>
#include <vector>

#include "stlab/points.hpp"

namespace stlab::raster {

/// Per-measurement likelihood model used by rasterize_density.
struct MeasurementModel {
    enum class Kind { isotropic_gaussian, range_bearing };

    Kind kind = Kind::isotropic_gaussian;
    double sigma = 0.0;           // isotropic_gaussian
    Vec2 sensor{};                // range_bearing
    double eta_r = 0.0;           // range std, meters
    double eta_theta = 0.0;       // bearing std, radians

    static MeasurementModel isotropic(double sigma);
    static MeasurementModel range_bearing(Vec2 sensor, double eta_r, double eta_theta);
};

/// Continuous mixture intensity: sum of (2*pi*sigma^2)^(-d/2) Gaussian pulses,
/// one per set element, evaluated at t.
double intensity_at(const PointSet& set, std::span<const double> t, double sigma);

/// Discretizes the Gaussian-pulse intensity of `set` over `window`. Each
/// pixel holds the mass of the pulse integrated over the pixel cell
/// (separable per-axis CDF differences), so interior points contribute
/// exactly unit mass and out-of-window points contribute their tail mass.
ImageD rasterize_gaussian(const PointSet& set, const WindowSpec& window, double sigma);

class PolarCache;

/// Sum of per-measurement likelihood images. Isotropic models reproduce
/// rasterize_gaussian exactly; range-bearing models evaluate the (r, theta)
/// Gaussian of the measurement at each candidate ground-truth pixel, scaled
/// by cell area, producing the arc-shaped mass around the measured point.
/// A PolarCache built on the same window may be supplied when rasterizing
/// many frames against fixed sensors; results do not depend on it.
ImageD rasterize_density(const PointSet& measurements,
                         const std::vector<MeasurementModel>& models,
                         const WindowSpec& window,
                         PolarCache* cache = nullptr);

/// round(sum of pixels) with negatives clamped to zero first.
int64_t estimate_cardinality(const ImageD& image);

enum class ExtractMethod { kmeans, gmm_em };

struct ExtractOptions {
    ExtractMethod method = ExtractMethod::kmeans;
    std::optional<int64_t> k;       // defaults to estimate_cardinality(image)
    uint64_t seed = 0;
    double support_rel_floor = 0.0; // keep pixels with value > floor * max
    int64_t max_support = 0;        // 0 = unlimited; else keep the heaviest N pixels
    bool clamp_k = false;           // shrink k to the support size instead of throwing
    int max_iters = 60;
};

/// Recovers point estimates from an intensity image: weighted k-means or an
/// isotropic Gaussian mixture fitted by EM, both over positive pixel centers
/// weighted by intensity. Deterministic given opt.seed.
PointSet extract_points(const ImageD& image, const ExtractOptions& opt);

}  // namespace stlab::raster
