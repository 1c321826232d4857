#include "stlab/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "stlab/polar_cache.hpp"
#include "stlab/rng.hpp"

namespace stlab::raster {

namespace {

constexpr double kTailSigmas = 8.0;     // integrated-Gaussian support cut
constexpr double kArcTailSigmas = 4.5;  // range-bearing support cut

double normal_cdf(double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

ImageD make_image(const WindowSpec& window) {
    window.validate();
    const int64_t n = window.pixels();
    std::vector<int64_t> shape(static_cast<size_t>(window.dim), n);
    return ImageD{TensorD(shape), window, 1};
}

/// Adds the cell-integrated mass of one Gaussian pulse. Separable: per-axis
/// CDF differences, outer product over up to three axes.
void add_gaussian_pulse(ImageD& img, std::span<const double> p, double sigma) {
    const WindowSpec& w = img.window;
    const int64_t n = w.pixels();
    const int d = w.dim;

    int64_t lo[3], hi[3];
    std::vector<double> mass[3];
    for (int a = 0; a < d; ++a) {
        const double x = p[static_cast<size_t>(a)];
        lo[a] = std::max<int64_t>(
            0, static_cast<int64_t>(std::floor((x - kTailSigmas * sigma - w.edge(0)) / w.resolution_rho)));
        hi[a] = std::min<int64_t>(
            n - 1,
            static_cast<int64_t>(std::floor((x + kTailSigmas * sigma - w.edge(0)) / w.resolution_rho)));
        if (lo[a] > hi[a]) return;  // no in-window mass along this axis
        mass[a].resize(static_cast<size_t>(hi[a] - lo[a] + 1));
        for (int64_t i = lo[a]; i <= hi[a]; ++i) {
            const double a0 = (w.edge(i) - x) / sigma;
            const double a1 = (w.edge(i + 1) - x) / sigma;
            mass[a][static_cast<size_t>(i - lo[a])] = normal_cdf(a1) - normal_cdf(a0);
        }
    }

    double* out = img.data.data();
    if (d == 1) {
        for (int64_t i = lo[0]; i <= hi[0]; ++i) out[i] += mass[0][static_cast<size_t>(i - lo[0])];
    } else if (d == 2) {
        for (int64_t i = lo[0]; i <= hi[0]; ++i) {
            const double mi = mass[0][static_cast<size_t>(i - lo[0])];
            double* row = out + i * n;
            for (int64_t j = lo[1]; j <= hi[1]; ++j)
                row[j] += mi * mass[1][static_cast<size_t>(j - lo[1])];
        }
    } else {
        for (int64_t i = lo[0]; i <= hi[0]; ++i)
            for (int64_t j = lo[1]; j <= hi[1]; ++j) {
                const double mij = mass[0][static_cast<size_t>(i - lo[0])] *
                                   mass[1][static_cast<size_t>(j - lo[1])];
                double* row = out + (i * n + j) * n;
                for (int64_t k = lo[2]; k <= hi[2]; ++k)
                    row[k] += mij * mass[2][static_cast<size_t>(k - lo[2])];
            }
    }
}

/// Angle interval membership, all arguments wrapped to (-pi, pi].
bool angle_within(double phi, double center, double halfwidth) {
    return std::abs(wrap_angle(phi - center)) <= halfwidth;
}

struct PixelBox {
    int64_t x0, x1, y0, y1;
    bool empty;
};

/// Axis-aligned pixel bounding box of the annular sector
/// {s + r*dir(th) : |r - r0| <= dr, |th - th0| <= dth}, clipped to the window.
PixelBox sector_bbox(const WindowSpec& w, Vec2 s, double r0, double th0, double dr, double dth) {
    const double rmax = r0 + dr;
    const double rmin = std::max(0.0, r0 - dr);
    double xmin, xmax, ymin, ymax;
    if (dth >= std::numbers::pi) {
        xmin = s.x - rmax;
        xmax = s.x + rmax;
        ymin = s.y - rmax;
        ymax = s.y + rmax;
    } else {
        xmin = ymin = std::numeric_limits<double>::infinity();
        xmax = ymax = -std::numeric_limits<double>::infinity();
        auto consider = [&](double r, double phi) {
            const double x = s.x + r * std::cos(phi);
            const double y = s.y + r * std::sin(phi);
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        };
        for (double r : {rmin, rmax}) {
            consider(r, th0 - dth);
            consider(r, th0);
            consider(r, th0 + dth);
        }
        const double axes[4] = {0.0, 0.5 * std::numbers::pi, std::numbers::pi,
                                -0.5 * std::numbers::pi};
        for (double phi : axes)
            if (angle_within(phi, wrap_angle(th0), dth)) consider(rmax, phi);
    }

    const int64_t n = w.pixels();
    const double pad = w.resolution_rho;
    PixelBox b{};
    b.x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor((xmin - pad - w.edge(0)) / w.resolution_rho)));
    b.x1 = std::min<int64_t>(n - 1, static_cast<int64_t>(std::floor((xmax + pad - w.edge(0)) / w.resolution_rho)));
    b.y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor((ymin - pad - w.edge(0)) / w.resolution_rho)));
    b.y1 = std::min<int64_t>(n - 1, static_cast<int64_t>(std::floor((ymax + pad - w.edge(0)) / w.resolution_rho)));
    b.empty = b.x0 > b.x1 || b.y0 > b.y1;
    return b;
}

void add_range_bearing(ImageD& img, Vec2 meas, const MeasurementModel& m, const PolarCache::Grid& grid) {
    const WindowSpec& w = img.window;
    const int64_t n = w.pixels();
    const Vec2 rel = meas - m.sensor;
    const double r0 = rel.norm();
    const double th0 = std::atan2(rel.y, rel.x);

    const double dr = kArcTailSigmas * m.eta_r;
    const double dth = kArcTailSigmas * m.eta_theta;
    const PixelBox box = sector_bbox(w, m.sensor, r0, th0, dr, dth);
    if (box.empty) return;

    const double cell = w.resolution_rho * w.resolution_rho;
    const double scale = cell / (2.0 * std::numbers::pi * m.eta_r * m.eta_theta);
    const double inv2r = 1.0 / (2.0 * m.eta_r * m.eta_r);
    const double inv2t = 1.0 / (2.0 * m.eta_theta * m.eta_theta);

    double* out = img.data.data();
    for (int64_t i = box.x0; i <= box.x1; ++i) {
        const double* rrow = grid.range.data() + i * n;
        const double* trow = grid.bearing.data() + i * n;
        double* orow = out + i * n;
        for (int64_t j = box.y0; j <= box.y1; ++j) {
            const double er = rrow[j] - r0;
            if (std::abs(er) > dr) continue;
            double et = trow[j] - th0;
            if (et > std::numbers::pi) et -= 2.0 * std::numbers::pi;
            else if (et <= -std::numbers::pi) et += 2.0 * std::numbers::pi;
            if (std::abs(et) > dth) continue;
            orow[j] += scale * std::exp(-(er * er * inv2r + et * et * inv2t));
        }
    }
}

}  // namespace

MeasurementModel MeasurementModel::isotropic(double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("MeasurementModel: sigma must be positive");
    MeasurementModel m;
    m.kind = Kind::isotropic_gaussian;
    m.sigma = sigma;
    return m;
}

MeasurementModel MeasurementModel::range_bearing(Vec2 sensor, double eta_r, double eta_theta) {
    if (!(eta_r > 0.0) || !(eta_theta > 0.0))
        throw std::invalid_argument("MeasurementModel: eta_r and eta_theta must be positive");
    MeasurementModel m;
    m.kind = Kind::range_bearing;
    m.sensor = sensor;
    m.eta_r = eta_r;
    m.eta_theta = eta_theta;
    return m;
}

const PolarCache::Grid& PolarCache::grid_for(Vec2 sensor) {
    auto [it, inserted] = grids_.try_emplace({sensor.x, sensor.y});
    if (inserted) {
        const int64_t n = window_.pixels();
        Grid& g = it->second;
        g.range.resize(static_cast<size_t>(n * n));
        g.bearing.resize(static_cast<size_t>(n * n));
        for (int64_t i = 0; i < n; ++i) {
            const double dx = window_.center(i) - sensor.x;
            for (int64_t j = 0; j < n; ++j) {
                const double dy = window_.center(j) - sensor.y;
                g.range[static_cast<size_t>(i * n + j)] = std::hypot(dx, dy);
                g.bearing[static_cast<size_t>(i * n + j)] = std::atan2(dy, dx);
            }
        }
    }
    return it->second;
}

double intensity_at(const PointSet& set, std::span<const double> t, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("intensity_at: sigma must be positive");
    if (static_cast<int>(t.size()) != set.dim())
        throw std::invalid_argument("intensity_at: dimension mismatch");
    const double norm = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.5 * set.dim());
    double total = 0.0;
    for (int64_t i = 0; i < set.size(); ++i) {
        double q = 0.0;
        const auto p = set.point(i);
        for (size_t a = 0; a < t.size(); ++a) q += (t[a] - p[a]) * (t[a] - p[a]);
        total += norm * std::exp(-q / (2.0 * sigma * sigma));
    }
    return total;
}

ImageD rasterize_gaussian(const PointSet& set, const WindowSpec& window, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("rasterize_gaussian: sigma must be positive");
    if (set.dim() != window.dim)
        throw std::invalid_argument("rasterize_gaussian: dimension mismatch");
    ImageD img = make_image(window);
    for (int64_t i = 0; i < set.size(); ++i) add_gaussian_pulse(img, set.point(i), sigma);
    return img;
}

ImageD rasterize_density(const PointSet& measurements, const std::vector<MeasurementModel>& models,
                         const WindowSpec& window, PolarCache* cache) {
    if (static_cast<int64_t>(models.size()) != measurements.size())
        throw std::invalid_argument("rasterize_density: one model per measurement required");
    ImageD img = make_image(window);

    std::optional<PolarCache> local;
    for (int64_t i = 0; i < measurements.size(); ++i) {
        const MeasurementModel& m = models[static_cast<size_t>(i)];
        if (m.kind == MeasurementModel::Kind::isotropic_gaussian) {
            add_gaussian_pulse(img, measurements.point(i), m.sigma);
        } else {
            if (window.dim != 2)
                throw std::invalid_argument("rasterize_density: range_bearing requires dim == 2");
            PolarCache* pc = cache;
            if (!pc) {
                if (!local) local.emplace(window);
                pc = &*local;
            }
            add_range_bearing(img, measurements.at2(i), m, pc->grid_for(m.sensor));
        }
    }
    return img;
}

int64_t estimate_cardinality(const ImageD& image) {
    double sum = 0.0;
    for (double v : image.data.values()) sum += std::max(0.0, v);
    return std::max<int64_t>(0, std::llround(sum));
}

namespace {

struct Support {
    std::vector<double> pos;  // n * d, pixel centers
    std::vector<double> w;    // clamped intensities
    int d = 2;

    int64_t size() const { return static_cast<int64_t>(w.size()); }
    std::span<const double> at(int64_t i) const {
        return {pos.data() + i * d, static_cast<size_t>(d)};
    }
};

Support build_support(const ImageD& img, double rel_floor, int64_t max_support) {
    const WindowSpec& win = img.window;
    const int64_t n = win.pixels();
    const int d = win.dim;
    double maxv = 0.0;
    for (double v : img.data.values()) maxv = std::max(maxv, v);
    const double floor_abs = rel_floor * maxv;

    std::vector<int64_t> keep;
    const int64_t total = img.data.size();
    for (int64_t flat = 0; flat < total; ++flat) {
        const double v = img.data[flat];
        if (v > 0.0 && v > floor_abs) keep.push_back(flat);
    }
    if (max_support > 0 && static_cast<int64_t>(keep.size()) > max_support) {
        // heaviest pixels first, index as the deterministic tie-break
        std::sort(keep.begin(), keep.end(), [&](int64_t a, int64_t b) {
            if (img.data[a] != img.data[b]) return img.data[a] > img.data[b];
            return a < b;
        });
        keep.resize(static_cast<size_t>(max_support));
    }

    Support s;
    s.d = d;
    std::vector<int64_t> idx(static_cast<size_t>(d), 0);
    for (int64_t flat : keep) {
        int64_t rem = flat;
        for (int a = d - 1; a >= 0; --a) {
            idx[static_cast<size_t>(a)] = rem % n;
            rem /= n;
        }
        for (int a = 0; a < d; ++a) s.pos.push_back(win.center(idx[static_cast<size_t>(a)]));
        s.w.push_back(img.data[flat]);
    }
    return s;
}

double sqdist(std::span<const double> a, const double* b, int d) {
    double q = 0.0;
    for (int i = 0; i < d; ++i) q += (a[static_cast<size_t>(i)] - b[i]) * (a[static_cast<size_t>(i)] - b[i]);
    return q;
}

int64_t sample_index(const std::vector<double>& weights, Rng& rng) {
    double total = 0.0;
    for (double v : weights) total += v;
    if (total <= 0.0) return -1;
    double u = rng.uniform01() * total;
    for (size_t i = 0; i < weights.size(); ++i) {
        u -= weights[i];
        if (u < 0.0) return static_cast<int64_t>(i);
    }
    return static_cast<int64_t>(weights.size()) - 1;
}

/// k-means++ seeding over the weighted support.
std::vector<double> seed_centers(const Support& s, int64_t k, Rng& rng) {
    const int d = s.d;
    std::vector<double> centers;
    std::vector<char> used(static_cast<size_t>(s.size()), 0);

    int64_t first = sample_index(s.w, rng);
    if (first < 0) first = 0;
    used[static_cast<size_t>(first)] = 1;
    for (int a = 0; a < d; ++a) centers.push_back(s.at(first)[static_cast<size_t>(a)]);

    std::vector<double> d2(static_cast<size_t>(s.size()));
    for (int64_t j = 1; j < k; ++j) {
        std::vector<double> probs(static_cast<size_t>(s.size()));
        for (int64_t i = 0; i < s.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int64_t c = 0; c < j; ++c)
                best = std::min(best, sqdist(s.at(i), centers.data() + c * d, d));
            d2[static_cast<size_t>(i)] = best;
            probs[static_cast<size_t>(i)] = used[static_cast<size_t>(i)] ? 0.0 : s.w[static_cast<size_t>(i)] * best;
        }
        int64_t pick = sample_index(probs, rng);
        if (pick < 0) {
            // all remaining support coincides with existing centers
            pick = 0;
            while (pick < s.size() && used[static_cast<size_t>(pick)]) ++pick;
            if (pick == s.size()) pick = 0;
        }
        used[static_cast<size_t>(pick)] = 1;
        for (int a = 0; a < d; ++a) centers.push_back(s.at(pick)[static_cast<size_t>(a)]);
    }
    return centers;
}

std::vector<double> run_kmeans(const Support& s, int64_t k, Rng& rng, int max_iters) {
    const int d = s.d;
    std::vector<double> centers = seed_centers(s, k, rng);
    std::vector<int32_t> assign(static_cast<size_t>(s.size()), -1);

    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (int64_t i = 0; i < s.size(); ++i) {
            int32_t best = 0;
            double bestd = sqdist(s.at(i), centers.data(), d);
            for (int64_t c = 1; c < k; ++c) {
                const double q = sqdist(s.at(i), centers.data() + c * d, d);
                if (q < bestd) {  // ties keep the lowest cluster index
                    bestd = q;
                    best = static_cast<int32_t>(c);
                }
            }
            if (assign[static_cast<size_t>(i)] != best) {
                assign[static_cast<size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        std::vector<double> sums(static_cast<size_t>(k * d), 0.0);
        std::vector<double> mass(static_cast<size_t>(k), 0.0);
        for (int64_t i = 0; i < s.size(); ++i) {
            const int32_t c = assign[static_cast<size_t>(i)];
            mass[static_cast<size_t>(c)] += s.w[static_cast<size_t>(i)];
            for (int a = 0; a < d; ++a)
                sums[static_cast<size_t>(c * d + a)] += s.w[static_cast<size_t>(i)] * s.at(i)[static_cast<size_t>(a)];
        }
        for (int64_t c = 0; c < k; ++c)
            if (mass[static_cast<size_t>(c)] > 0.0)
                for (int a = 0; a < d; ++a)
                    centers[static_cast<size_t>(c * d + a)] =
                        sums[static_cast<size_t>(c * d + a)] / mass[static_cast<size_t>(c)];
    }
    return centers;
}

/// Isotropic Gaussian mixture EM on the weighted support, seeded from
/// k-means++ centers.
std::vector<double> run_gmm(const Support& s, int64_t k, Rng& rng, int max_iters, double rho) {
    const int d = s.d;
    std::vector<double> mu = seed_centers(s, k, rng);
    std::vector<double> var(static_cast<size_t>(k), 4.0 * rho * rho);
    std::vector<double> pi(static_cast<size_t>(k), 1.0 / static_cast<double>(k));
    const double var_floor = 0.25 * rho * rho;

    std::vector<double> logp(static_cast<size_t>(k));
    std::vector<double> resp(static_cast<size_t>(s.size() * k));
    for (int iter = 0; iter < max_iters; ++iter) {
        // E step
        for (int64_t i = 0; i < s.size(); ++i) {
            double maxlog = -std::numeric_limits<double>::infinity();
            for (int64_t c = 0; c < k; ++c) {
                const double q = sqdist(s.at(i), mu.data() + c * d, d);
                logp[static_cast<size_t>(c)] =
                    std::log(pi[static_cast<size_t>(c)]) -
                    0.5 * d * std::log(2.0 * std::numbers::pi * var[static_cast<size_t>(c)]) -
                    0.5 * q / var[static_cast<size_t>(c)];
                maxlog = std::max(maxlog, logp[static_cast<size_t>(c)]);
            }
            double z = 0.0;
            for (int64_t c = 0; c < k; ++c) z += std::exp(logp[static_cast<size_t>(c)] - maxlog);
            for (int64_t c = 0; c < k; ++c)
                resp[static_cast<size_t>(i * k + c)] = std::exp(logp[static_cast<size_t>(c)] - maxlog) / z;
        }
        // M step
        for (int64_t c = 0; c < k; ++c) {
            double nk = 0.0;
            std::vector<double> msum(static_cast<size_t>(d), 0.0);
            for (int64_t i = 0; i < s.size(); ++i) {
                const double wr = s.w[static_cast<size_t>(i)] * resp[static_cast<size_t>(i * k + c)];
                nk += wr;
                for (int a = 0; a < d; ++a) msum[static_cast<size_t>(a)] += wr * s.at(i)[static_cast<size_t>(a)];
            }
            if (nk <= 0.0) continue;
            for (int a = 0; a < d; ++a) mu[static_cast<size_t>(c * d + a)] = msum[static_cast<size_t>(a)] / nk;
            double vsum = 0.0;
            for (int64_t i = 0; i < s.size(); ++i)
                vsum += s.w[static_cast<size_t>(i)] * resp[static_cast<size_t>(i * k + c)] *
                        sqdist(s.at(i), mu.data() + c * d, d);
            var[static_cast<size_t>(c)] = std::max(var_floor, vsum / (d * nk));
            pi[static_cast<size_t>(c)] = nk;
        }
        double ptot = 0.0;
        for (double v : pi) ptot += v;
        if (ptot > 0.0)
            for (double& v : pi) v /= ptot;
    }
    (void)rng;
    return mu;
}

}  // namespace

PointSet extract_points(const ImageD& image, const ExtractOptions& opt) {
    const WindowSpec& win = image.window;
    win.validate();
    const int d = win.dim;

    int64_t k = opt.k ? *opt.k : estimate_cardinality(image);
    if (k < 0) throw std::invalid_argument("extract_points: k must be nonnegative");
    PointSet out(d);
    if (k == 0) return out;

    Support s = build_support(image, opt.support_rel_floor, opt.max_support);
    if (k > s.size()) {
        if (!opt.clamp_k)
            throw std::invalid_argument("extract_points: k exceeds number of positive pixels");
        k = s.size();
        if (k == 0) return out;
    }

    Rng rng(opt.seed);
    const std::vector<double> centers =
        opt.method == ExtractMethod::kmeans
            ? run_kmeans(s, k, rng, opt.max_iters)
            : run_gmm(s, k, rng, opt.max_iters, win.resolution_rho);

    for (int64_t c = 0; c < k; ++c)
        out.add(std::span<const double>(centers.data() + c * d, static_cast<size_t>(d)));
    return out;
}

}  // namespace stlab::raster
