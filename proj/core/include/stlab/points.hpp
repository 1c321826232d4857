#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "stlab/tensor.hpp"

namespace stlab {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double norm() const { return std::hypot(x, y); }
};

inline double dist(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Finite set of d-dimensional points, flat storage.
class PointSet {
public:
    explicit PointSet(int dim = 2) : dim_(dim) {
        if (dim <= 0) throw std::invalid_argument("PointSet: dim must be positive");
    }

    int dim() const { return dim_; }
    int64_t size() const { return static_cast<int64_t>(coords_.size()) / dim_; }
    bool empty() const { return coords_.empty(); }

    void add(std::span<const double> p) {
        if (static_cast<int>(p.size()) != dim_)
            throw std::invalid_argument("PointSet: point has wrong dimension");
        for (double v : p) {
            if (!std::isfinite(v)) throw std::invalid_argument("PointSet: non-finite coordinate");
            coords_.push_back(v);
        }
    }

    void add(Vec2 p) {
        const double buf[2] = {p.x, p.y};
        add(std::span<const double>(buf, 2));
    }

    std::span<const double> point(int64_t i) const {
        return {coords_.data() + i * dim_, static_cast<size_t>(dim_)};
    }

    Vec2 at2(int64_t i) const {
        return {coords_[static_cast<size_t>(i * dim_)], coords_[static_cast<size_t>(i * dim_ + 1)]};
    }

    double coord(int64_t i, int axis) const { return coords_[static_cast<size_t>(i * dim_ + axis)]; }

    const std::vector<double>& coords() const { return coords_; }

private:
    int dim_;
    std::vector<double> coords_;
};

/// Raster geometry: T-wide window around the origin sampled at rho meters
/// per pixel. The covered extent is exactly N*rho centred at zero, with
/// N = floor(T / rho).
struct WindowSpec {
    double width_T = 0.0;
    double resolution_rho = 0.0;
    int dim = 2;

    int64_t pixels() const { return static_cast<int64_t>(std::floor(width_T / resolution_rho)); }
    double extent() const { return static_cast<double>(pixels()) * resolution_rho; }
    double edge(int64_t i) const { return -0.5 * extent() + static_cast<double>(i) * resolution_rho; }
    double center(int64_t i) const { return edge(i) + 0.5 * resolution_rho; }

    void validate() const {
        if (!(width_T > 0.0)) throw std::invalid_argument("WindowSpec: width_T must be positive");
        if (!(resolution_rho > 0.0))
            throw std::invalid_argument("WindowSpec: resolution_rho must be positive");
        if (dim < 1 || dim > 3) throw std::invalid_argument("WindowSpec: dim out of range");
        if (pixels() < 1) throw std::invalid_argument("WindowSpec: window narrower than one pixel");
    }
};

/// Discretized intensity function over a window. Single-frame images have
/// channels == 1 and a rank-d data tensor.
template <typename T>
struct Image {
    Tensor<T> data;
    WindowSpec window;
    int channels = 1;
};

using ImageD = Image<double>;
using ImageF = Image<float>;

}  // namespace stlab
