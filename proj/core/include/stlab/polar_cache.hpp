#pragma once

#include <map>
#include <utility>
#include <vector>

#include "stlab/points.hpp"

namespace stlab::raster {

/// Precomputed range/bearing of every pixel center relative to a sensor.
/// Sensors persist for a whole scenario, so rasterizing many frames against
/// the same window amortizes the hypot/atan2 work. Values are identical to
/// the uncached path; the cache only changes when they are computed.
class PolarCache {
public:
    struct Grid {
        std::vector<double> range;
        std::vector<double> bearing;
    };

    explicit PolarCache(const WindowSpec& window) : window_(window) {}

    const Grid& grid_for(Vec2 sensor);
    const WindowSpec& window() const { return window_; }

private:
    WindowSpec window_;
    std::map<std::pair<double, double>, Grid> grids_;
};

}  // namespace stlab::raster
