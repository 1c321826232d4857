#include "stlab/convnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "stlab/archive.hpp"
#include "stlab/parallel.hpp"
#include "stlab/rng.hpp"

namespace stlab::cnn {

namespace {

int64_t floor_div(int64_t a, int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
int64_t ceil_div(int64_t a, int64_t b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

/// Index range [lo, hi] of `count` slots such that slot*s + k - p stays
/// inside [0, limit).
std::pair<int64_t, int64_t> valid_range(int64_t count, int64_t limit, int64_t s, int64_t k,
                                        int64_t p) {
    const int64_t lo = std::max<int64_t>(0, ceil_div(p - k, s));
    const int64_t hi = std::min<int64_t>(count - 1, floor_div(limit - 1 - k + p, s));
    return {lo, hi};
}

struct Geom {
    int64_t in_c, in_h, in_w;
    int64_t out_c, out_h, out_w;
    int64_t kh, kw, sh, sw, ph, pw;
};

// Stride-2 kernels run on parity planes so every inner loop is unit-stride.
// plane(c, py, px) holds x[2r+py][2q+px]; rows are padded to wp for uniform
// addressing. Contributions keep the (ic, ky, kx) order of the generic path,
// so results are bit-identical.
template <typename T>
struct PhaseSplit {
    std::vector<T> data;
    int64_t hp = 0, wp = 0;

    T* plane(int64_t c, int64_t py, int64_t px) {
        return data.data() + (((c * 2 + py) * 2 + px) * hp) * wp;
    }
    const T* plane(int64_t c, int64_t py, int64_t px) const {
        return data.data() + (((c * 2 + py) * 2 + px) * hp) * wp;
    }

    void split(const T* x, int64_t channels, int64_t h, int64_t w) {
        hp = (h + 1) / 2;
        wp = (w + 1) / 2;
        data.assign(static_cast<size_t>(channels * 4 * hp * wp), T{});
        for (int64_t c = 0; c < channels; ++c)
            for (int64_t iy = 0; iy < h; ++iy) {
                const T* src = x + (c * h + iy) * w;
                T* d0 = plane(c, iy & 1, 0) + (iy >> 1) * wp;
                T* d1 = plane(c, iy & 1, 1) + (iy >> 1) * wp;
                int64_t ix = 0;
                for (; ix + 1 < w; ix += 2) {
                    d0[ix >> 1] = src[ix];
                    d1[ix >> 1] = src[ix + 1];
                }
                if (ix < w) d0[ix >> 1] = src[ix];
            }
    }

    void zero(int64_t channels, int64_t h, int64_t w) {
        hp = (h + 1) / 2;
        wp = (w + 1) / 2;
        data.assign(static_cast<size_t>(channels * 4 * hp * wp), T{});
    }

    void merge_add(T* x, int64_t channels, int64_t h, int64_t w) const {
        for (int64_t c = 0; c < channels; ++c)
            for (int64_t iy = 0; iy < h; ++iy) {
                T* dst = x + (c * h + iy) * w;
                const T* s0 = plane(c, iy & 1, 0) + (iy >> 1) * wp;
                const T* s1 = plane(c, iy & 1, 1) + (iy >> 1) * wp;
                int64_t ix = 0;
                for (; ix + 1 < w; ix += 2) {
                    dst[ix] += s0[ix >> 1];
                    dst[ix + 1] += s1[ix >> 1];
                }
                if (ix < w) dst[ix] += s0[ix >> 1];
            }
    }
};

/// z[oc][oy][ox] += sum w[oc][ic][ky][kx] * x[ic][oy*sh+ky-ph][ox*sw+kx-pw]
template <typename T>
void conv_gather(const T* x, const T* w, T* z, const Geom& g) {
    const bool phased = g.sh == 2 && g.sw == 2;
    PhaseSplit<T> phases;
    if (phased) phases.split(x, g.in_c, g.in_h, g.in_w);

    for (int64_t oc = 0; oc < g.out_c; ++oc) {
        for (int64_t ic = 0; ic < g.in_c; ++ic) {
            const T* xc = x + ic * g.in_h * g.in_w;
            const T* wk = w + (oc * g.in_c + ic) * g.kh * g.kw;
            T* zc = z + oc * g.out_h * g.out_w;
            for (int64_t ky = 0; ky < g.kh; ++ky) {
                const auto [oy_lo, oy_hi] = valid_range(g.out_h, g.in_h, g.sh, ky, g.ph);
                for (int64_t kx = 0; kx < g.kw; ++kx) {
                    const T wv = wk[ky * g.kw + kx];
                    if (wv == T{}) continue;
                    const auto [ox_lo, ox_hi] = valid_range(g.out_w, g.in_w, g.sw, kx, g.pw);
                    if (phased) {
                        const int64_t a = ky - g.ph, b = kx - g.pw;
                        const int64_t py = a & 1, px = b & 1;
                        const int64_t dy = (a - py) >> 1, dx = (b - px) >> 1;
                        const T* pc = phases.plane(ic, py, px);
                        for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                            const T* __restrict xr = pc + (oy + dy) * phases.wp + dx;
                            T* __restrict zr = zc + oy * g.out_w;
                            for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) zr[ox] += wv * xr[ox];
                        }
                    } else {
                        for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                            const T* xr = xc + (oy * g.sh + ky - g.ph) * g.in_w + kx - g.pw;
                            T* zr = zc + oy * g.out_w;
                            if (g.sw == 1) {
                                for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) zr[ox] += wv * xr[ox];
                            } else {
                                for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                    zr[ox] += wv * xr[ox * g.sw];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// gx[ic][oy*sh+ky-ph][ox*sw+kx-pw] += sum_oc w[oc][ic][ky][kx] * gz[oc][oy][ox]
template <typename T>
void conv_scatter(const T* gz, const T* w, T* gx, const Geom& g) {
    const bool phased = g.sh == 2 && g.sw == 2;
    PhaseSplit<T> phases;
    if (phased) phases.zero(g.in_c, g.in_h, g.in_w);

    for (int64_t oc = 0; oc < g.out_c; ++oc) {
        for (int64_t ic = 0; ic < g.in_c; ++ic) {
            T* xc = gx + ic * g.in_h * g.in_w;
            const T* wk = w + (oc * g.in_c + ic) * g.kh * g.kw;
            const T* zc = gz + oc * g.out_h * g.out_w;
            for (int64_t ky = 0; ky < g.kh; ++ky) {
                const auto [oy_lo, oy_hi] = valid_range(g.out_h, g.in_h, g.sh, ky, g.ph);
                for (int64_t kx = 0; kx < g.kw; ++kx) {
                    const T wv = wk[ky * g.kw + kx];
                    if (wv == T{}) continue;
                    const auto [ox_lo, ox_hi] = valid_range(g.out_w, g.in_w, g.sw, kx, g.pw);
                    if (phased) {
                        const int64_t a = ky - g.ph, b = kx - g.pw;
                        const int64_t py = a & 1, px = b & 1;
                        const int64_t dy = (a - py) >> 1, dx = (b - px) >> 1;
                        T* pc = phases.plane(ic, py, px);
                        for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                            T* __restrict xr = pc + (oy + dy) * phases.wp + dx;
                            const T* __restrict zr = zc + oy * g.out_w;
                            for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) xr[ox] += wv * zr[ox];
                        }
                    } else {
                        for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                            T* xr = xc + (oy * g.sh + ky - g.ph) * g.in_w + kx - g.pw;
                            const T* zr = zc + oy * g.out_w;
                            if (g.sw == 1) {
                                for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) xr[ox] += wv * zr[ox];
                            } else {
                                for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                    xr[ox * g.sw] += wv * zr[ox];
                            }
                        }
                    }
                }
            }
        }
    }
    if (phased) phases.merge_add(gx, g.in_c, g.in_h, g.in_w);
}

/// Unit-stride dot with eight fixed-order partial lanes; the lane pattern
/// vectorizes without reassociation and the order is static, so results stay
/// reproducible.
template <typename T>
T lane_dot(const T* __restrict a, const T* __restrict b, int64_t n) {
    T lanes[8] = {};
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) lanes[j] += a[i + j] * b[i + j];
    T tail{};
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
           ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail;
}

/// gw[oc][ic][ky][kx] += sum gz[oc][oy][ox] * x[ic][oy*sh+ky-ph][ox*sw+kx-pw]
template <typename T>
void conv_weight_grad(const T* x, const T* gz, T* gw, const Geom& g) {
    const bool phased = g.sh == 2 && g.sw == 2;
    PhaseSplit<T> phases;
    if (phased) phases.split(x, g.in_c, g.in_h, g.in_w);

    for (int64_t oc = 0; oc < g.out_c; ++oc) {
        for (int64_t ic = 0; ic < g.in_c; ++ic) {
            const T* xc = x + ic * g.in_h * g.in_w;
            T* wk = gw + (oc * g.in_c + ic) * g.kh * g.kw;
            const T* zc = gz + oc * g.out_h * g.out_w;
            for (int64_t ky = 0; ky < g.kh; ++ky) {
                const auto [oy_lo, oy_hi] = valid_range(g.out_h, g.in_h, g.sh, ky, g.ph);
                for (int64_t kx = 0; kx < g.kw; ++kx) {
                    const auto [ox_lo, ox_hi] = valid_range(g.out_w, g.in_w, g.sw, kx, g.pw);
                    T acc{};
                    if (phased) {
                        const int64_t a = ky - g.ph, b = kx - g.pw;
                        const int64_t py = a & 1, px = b & 1;
                        const int64_t dy = (a - py) >> 1, dx = (b - px) >> 1;
                        const T* pc = phases.plane(ic, py, px);
                        for (int64_t oy = oy_lo; oy <= oy_hi; ++oy)
                            acc += lane_dot(zc + oy * g.out_w + ox_lo,
                                            pc + (oy + dy) * phases.wp + dx + ox_lo,
                                            ox_hi - ox_lo + 1);
                    } else if (g.sw == 1) {
                        for (int64_t oy = oy_lo; oy <= oy_hi; ++oy)
                            acc += lane_dot(zc + oy * g.out_w + ox_lo,
                                            xc + (oy * g.sh + ky - g.ph) * g.in_w + kx - g.pw + ox_lo,
                                            ox_hi - ox_lo + 1);
                    } else {
                        for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                            const T* xr = xc + (oy * g.sh + ky - g.ph) * g.in_w + kx - g.pw;
                            const T* zr = zc + oy * g.out_w;
                            for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                acc += zr[ox] * xr[ox * g.sw];
                        }
                    }
                    wk[ky * g.kw + kx] += acc;
                }
            }
        }
    }
}

template <typename T>
T nonlin_apply(Nonlin n, double a, T z) {
    switch (n) {
        case Nonlin::leaky_relu: return z > T{} ? z : static_cast<T>(a) * z;
        case Nonlin::relu: return z > T{} ? z : T{};
        case Nonlin::tanh: return std::tanh(z);
        case Nonlin::identity: return z;
    }
    return z;
}

template <typename T>
T nonlin_grad(Nonlin n, double a, T z) {
    switch (n) {
        case Nonlin::leaky_relu: return z > T{} ? T{1} : static_cast<T>(a);
        case Nonlin::relu: return z > T{} ? T{1} : T{};
        case Nonlin::tanh: {
            const T t = std::tanh(z);
            return T{1} - t * t;
        }
        case Nonlin::identity: return T{1};
    }
    return T{1};
}

struct Dims {
    int64_t c, h, w;
};

Dims dims_of(const std::vector<int64_t>& shape, int spatial_dim) {
    if (spatial_dim == 1) {
        if (shape.size() != 2) throw std::invalid_argument("expected [C, W] input");
        return {shape[0], 1, shape[1]};
    }
    if (shape.size() != 3) throw std::invalid_argument("expected [C, H, W] input");
    return {shape[0], shape[1], shape[2]};
}

Dims layer_out_dims(const LayerSpec& s, Dims in, int spatial_dim) {
    const int64_t k = s.kernel_width;
    const int64_t m = s.resample;
    Dims out{s.out_features, in.h, in.w};
    auto down = [&](int64_t n) -> int64_t {
        if (s.padding == Padding::zero_same) {
            if (n % m != 0) throw std::invalid_argument("input width not divisible by resample factor");
            return n / m;
        }
        if (n < k) throw std::invalid_argument("input narrower than kernel (padding none)");
        return (n - k) / m + 1;
    };
    auto up = [&](int64_t n) -> int64_t {
        if (s.padding == Padding::zero_same) return n * m;
        return s.nn_upsample ? n * m - k + 1 : (n - 1) * m + k;
    };
    switch (s.kind) {
        case LayerKind::encoder:
            out.w = down(in.w);
            if (spatial_dim == 2) out.h = down(in.h);
            break;
        case LayerKind::decoder:
            out.w = up(in.w);
            if (spatial_dim == 2) out.h = up(in.h);
            if (out.w < 1 || out.h < 1)
                throw std::invalid_argument("input narrower than kernel (padding none)");
            break;
        case LayerKind::hidden:
            if (s.padding == Padding::none) {
                out.w = in.w - k + 1;
                if (spatial_dim == 2) out.h = in.h - k + 1;
                if (out.w < 1 || out.h < 1)
                    throw std::invalid_argument("input narrower than kernel (padding none)");
            }
            break;
    }
    return out;
}

Geom layer_geom(const LayerSpec& s, Dims in, Dims out, int spatial_dim) {
    Geom g{};
    g.kh = spatial_dim == 2 ? s.kernel_width : 1;
    g.kw = s.kernel_width;
    const int64_t m = s.kind == LayerKind::hidden ? 1 : s.resample;
    g.sh = spatial_dim == 2 ? m : 1;
    g.sw = m;
    g.ph = s.padding == Padding::zero_same ? (g.kh - 1) / 2 : 0;
    g.pw = s.padding == Padding::zero_same ? (g.kw - 1) / 2 : 0;
    if (s.kind == LayerKind::decoder && s.nn_upsample) {
        // plain stride-1 conv over the nearest-neighbor-upsampled grid
        g.sh = 1;
        g.sw = 1;
        g.in_c = in.c;
        g.in_h = spatial_dim == 2 ? in.h * m : in.h;
        g.in_w = in.w * m;
        g.out_c = out.c;
        g.out_h = out.h;
        g.out_w = out.w;
        return g;
    }
    if (s.kind == LayerKind::decoder) {
        // transposed convolution: index arithmetic runs on the matching
        // strided conv that maps the fine grid back to the coarse grid, so
        // the fine side takes the "in" slots. Decoder weights are stored
        // [in_features, out_features, kh, kw] to suit this.
        g.in_c = out.c;
        g.in_h = out.h;
        g.in_w = out.w;
        g.out_c = in.c;
        g.out_h = in.h;
        g.out_w = in.w;
    } else {
        g.in_c = in.c;
        g.in_h = in.h;
        g.in_w = in.w;
        g.out_c = out.c;
        g.out_h = out.h;
        g.out_w = out.w;
    }
    return g;
}

std::vector<int64_t> public_shape(Dims d, int spatial_dim) {
    if (spatial_dim == 1) return {d.c, d.w};
    return {d.c, d.h, d.w};
}

/// Repeats every pixel mh x mw times.
template <typename T>
Tensor<T> nn_expand(const Tensor<T>& x, int64_t mh, int64_t mw) {
    const int64_t c_n = x.extent(0), h = x.extent(1), w = x.extent(2);
    Tensor<T> up({c_n, h * mh, w * mw});
    for (int64_t c = 0; c < c_n; ++c)
        for (int64_t y = 0; y < h * mh; ++y) {
            const T* src = x.data() + (c * h + y / mh) * w;
            T* dst = up.data() + (c * h * mh + y) * (w * mw);
            for (int64_t z = 0; z < w * mw; ++z) dst[z] = src[z / mw];
        }
    return up;
}

/// Adjoint of nn_expand: sums each mh x mw block.
template <typename T>
Tensor<T> nn_reduce_add(const Tensor<T>& up, int64_t mh, int64_t mw) {
    const int64_t c_n = up.extent(0), uh = up.extent(1), uw = up.extent(2);
    const int64_t h = uh / mh, w = uw / mw;
    Tensor<T> down({c_n, h, w});
    for (int64_t c = 0; c < c_n; ++c)
        for (int64_t y = 0; y < uh; ++y) {
            const T* src = up.data() + (c * uh + y) * uw;
            T* dst = down.data() + (c * h + y / mh) * w;
            for (int64_t z = 0; z < uw; ++z) dst[z / mw] += src[z];
        }
    return down;
}

}  // namespace

void LayerSpec::validate() const {
    if (in_features < 1 || out_features < 1)
        throw std::invalid_argument("LayerSpec: feature counts must be positive");
    if (kernel_width < 1 || kernel_width % 2 == 0)
        throw std::invalid_argument("LayerSpec: kernel width must be odd and positive");
    if (resample < 1) throw std::invalid_argument("LayerSpec: resample must be >= 1");
    if (kind == LayerKind::hidden && resample != 1)
        throw std::invalid_argument("LayerSpec: hidden layers must have resample == 1");
    if (nn_upsample && kind != LayerKind::decoder)
        throw std::invalid_argument("LayerSpec: nn_upsample applies to decoders only");
    if (nonlin == Nonlin::leaky_relu && (nonlin_param < 0.0 || nonlin_param > 1.0))
        throw std::invalid_argument("LayerSpec: leaky slope must stay in [0, 1]");
}

template <typename T>
void Gradients<T>::add_params(const Gradients& other) {
    for (size_t l = 0; l < weights.size(); ++l) {
        T* a = weights[l].data();
        const T* b = other.weights[l].data();
        for (int64_t i = 0; i < weights[l].size(); ++i) a[i] += b[i];
        for (size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
    }
}

template <typename T>
void Gradients<T>::scale_params(T s) {
    for (size_t l = 0; l < weights.size(); ++l) {
        for (int64_t i = 0; i < weights[l].size(); ++i) weights[l][i] *= s;
        for (auto& b : bias[l]) b *= s;
    }
}

template <typename T>
Network<T>::Network(int spatial_dim, std::vector<LayerSpec> specs)
    : spatial_dim_(spatial_dim), specs_(std::move(specs)) {
    if (spatial_dim_ < 1 || spatial_dim_ > 2)
        throw std::invalid_argument("Network: spatial_dim must be 1 or 2");
    if (specs_.empty()) throw std::invalid_argument("Network: at least one layer required");
    for (size_t l = 0; l < specs_.size(); ++l) {
        specs_[l].validate();
        if (l > 0 && specs_[l].in_features != specs_[l - 1].out_features)
            throw std::invalid_argument("Network: feature counts do not chain");
    }
    layers_.resize(specs_.size());
    for (size_t l = 0; l < specs_.size(); ++l) {
        const LayerSpec& s = specs_[l];
        const int64_t kh = spatial_dim_ == 2 ? s.kernel_width : 1;
        if (s.kind == LayerKind::decoder && !s.nn_upsample)
            layers_[l].weights = Tensor<T>({s.in_features, s.out_features, kh, s.kernel_width});
        else
            layers_[l].weights = Tensor<T>({s.out_features, s.in_features, kh, s.kernel_width});
        if (s.bias) layers_[l].bias.assign(static_cast<size_t>(s.out_features), T{});
    }
}

template <typename T>
Network<T> Network<T>::randomized(int spatial_dim, const std::vector<LayerSpec>& specs,
                                  uint64_t seed) {
    Network net(spatial_dim, specs);
    Rng rng(seed);
    for (size_t l = 0; l < specs.size(); ++l) {
        const LayerSpec& s = specs[l];
        const int64_t taps = net.layers_[l].weights.size() / (static_cast<int64_t>(s.out_features) * s.in_features);
        const double fan_in = static_cast<double>(s.in_features) * static_cast<double>(taps);
        const double fan_out = static_cast<double>(s.out_features) * static_cast<double>(taps);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        T* w = net.layers_[l].weights.data();
        for (int64_t i = 0; i < net.layers_[l].weights.size(); ++i)
            w[i] = static_cast<T>(rng.uniform(-limit, limit));
    }
    return net;
}

template <typename T>
int Network<T>::encoder_count() const {
    int n = 0;
    for (const auto& s : specs_)
        if (s.kind == LayerKind::encoder) ++n;
    return n;
}

template <typename T>
int Network<T>::total_resample() const {
    int m = 1;
    for (const auto& s : specs_)
        if (s.kind == LayerKind::encoder) m *= s.resample;
    return m;
}

template <typename T>
int64_t Network<T>::parameter_count() const {
    int64_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + static_cast<int64_t>(l.bias.size());
    return n;
}

template <typename T>
std::vector<int64_t> Network<T>::output_shape(const std::vector<int64_t>& input_shape) const {
    Dims d = dims_of(input_shape, spatial_dim_);
    if (d.c != specs_.front().in_features)
        throw std::invalid_argument("Network: input channel count mismatch");
    for (const auto& s : specs_) d = layer_out_dims(s, d, spatial_dim_);
    return public_shape(d, spatial_dim_);
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input) const {
    ForwardCache<T> cache;
    return forward(input, cache);
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, ForwardCache<T>& cache) const {
    Dims d = dims_of(input.shape(), spatial_dim_);
    if (d.c != specs_.front().in_features)
        throw std::invalid_argument("Network: input channel count mismatch");

    cache.inputs.clear();
    cache.preacts.clear();
    cache.inputs.reserve(specs_.size());
    cache.preacts.reserve(specs_.size());

    Tensor<T> x = input;  // copies once; layers then move through the cache
    for (size_t l = 0; l < specs_.size(); ++l) {
        const LayerSpec& s = specs_[l];
        const Dims out_d = layer_out_dims(s, d, spatial_dim_);
        const Geom g = layer_geom(s, d, out_d, spatial_dim_);

        Tensor<T> z({out_d.c, out_d.h, out_d.w});
        const LayerParams<T>& p = layers_[l];
        if (!p.bias.empty()) {
            T* zp = z.data();
            const int64_t plane = out_d.h * out_d.w;
            for (int64_t oc = 0; oc < out_d.c; ++oc)
                std::fill(zp + oc * plane, zp + (oc + 1) * plane, p.bias[static_cast<size_t>(oc)]);
        }
        if (s.kind == LayerKind::decoder && s.nn_upsample) {
            const Tensor<T> up =
                nn_expand(x, spatial_dim_ == 2 ? s.resample : 1, s.resample);
            conv_gather(up.data(), p.weights.data(), z.data(), g);
        } else if (s.kind == LayerKind::decoder) {
            conv_scatter(x.data(), p.weights.data(), z.data(), g);
        } else {
            conv_gather(x.data(), p.weights.data(), z.data(), g);
        }

        Tensor<T> out({out_d.c, out_d.h, out_d.w});
        const T* zp = z.data();
        T* op = out.data();
        for (int64_t i = 0; i < z.size(); ++i) op[i] = nonlin_apply(s.nonlin, s.nonlin_param, zp[i]);

        cache.inputs.push_back(std::move(x));
        cache.preacts.push_back(std::move(z));
        x = std::move(out);
        d = out_d;
    }

    // expose the public rank (drop the dummy H axis for 1-D networks)
    Tensor<T> result(public_shape(d, spatial_dim_), std::vector<T>(x.values().begin(), x.values().end()));
    return result;
}

template <typename T>
Gradients<T> Network<T>::zero_gradients() const {
    Gradients<T> g;
    g.weights.reserve(layers_.size());
    g.bias.reserve(layers_.size());
    for (const auto& l : layers_) {
        g.weights.emplace_back(l.weights.shape());
        g.bias.emplace_back(l.bias.size(), T{});
    }
    return g;
}

template <typename T>
Gradients<T> Network<T>::backward(const ForwardCache<T>& cache, const Tensor<T>& grad_output) const {
    if (cache.inputs.size() != specs_.size())
        throw std::invalid_argument("Network::backward: cache does not match network");

    Gradients<T> grads = zero_gradients();

    Tensor<T> gx;  // gradient w.r.t. the current layer's output
    {
        const Tensor<T>& zL = cache.preacts.back();
        if (grad_output.size() != zL.size())
            throw std::invalid_argument("Network::backward: grad_output shape mismatch");
        gx = Tensor<T>(zL.shape(), std::vector<T>(grad_output.values().begin(), grad_output.values().end()));
    }

    for (int l = static_cast<int>(specs_.size()) - 1; l >= 0; --l) {
        const LayerSpec& s = specs_[static_cast<size_t>(l)];
        const Tensor<T>& x_in = cache.inputs[static_cast<size_t>(l)];
        const Tensor<T>& z = cache.preacts[static_cast<size_t>(l)];

        // through the nonlinearity
        Tensor<T> gz(z.shape());
        {
            const T* zp = z.data();
            const T* gp = gx.data();
            T* out = gz.data();
            for (int64_t i = 0; i < z.size(); ++i)
                out[i] = gp[i] * nonlin_grad(s.nonlin, s.nonlin_param, zp[i]);
        }

        if (!layers_[static_cast<size_t>(l)].bias.empty()) {
            const int64_t plane = z.extent(1) * z.extent(2);
            const T* gzp = gz.data();
            for (int64_t oc = 0; oc < z.extent(0); ++oc) {
                T acc{};
                for (int64_t i = 0; i < plane; ++i) acc += gzp[oc * plane + i];
                grads.bias[static_cast<size_t>(l)][static_cast<size_t>(oc)] = acc;
            }
        }

        const Dims in_d{x_in.extent(0), x_in.extent(1), x_in.extent(2)};
        const Dims out_d{z.extent(0), z.extent(1), z.extent(2)};
        const Geom g = layer_geom(s, in_d, out_d, spatial_dim_);
        const T* w = layers_[static_cast<size_t>(l)].weights.data();

        Tensor<T> gin({in_d.c, in_d.h, in_d.w});
        if (s.kind == LayerKind::decoder && s.nn_upsample) {
            const int64_t mh = spatial_dim_ == 2 ? s.resample : 1;
            const Tensor<T> up = nn_expand(x_in, mh, s.resample);
            conv_weight_grad(up.data(), gz.data(), grads.weights[static_cast<size_t>(l)].data(), g);
            Tensor<T> g_up({g.in_c, g.in_h, g.in_w});
            conv_scatter(gz.data(), w, g_up.data(), g);
            gin = nn_reduce_add(g_up, mh, s.resample);
        } else if (s.kind == LayerKind::decoder) {
            // with the fine side in the "in" slots, the roles flip: the
            // weight grad correlates the coarse input against the fine
            // output grad, and the input grad is the strided gather
            conv_weight_grad(gz.data(), x_in.data(), grads.weights[static_cast<size_t>(l)].data(), g);
            conv_gather(gz.data(), w, gin.data(), g);
        } else {
            conv_weight_grad(x_in.data(), gz.data(), grads.weights[static_cast<size_t>(l)].data(), g);
            conv_scatter(gz.data(), w, gin.data(), g);
        }
        gx = std::move(gin);
    }

    if (spatial_dim_ == 1)
        gx = Tensor<T>({gx.extent(0), gx.extent(2)},
                       std::vector<T>(gx.values().begin(), gx.values().end()));
    grads.input = std::move(gx);
    return grads;
}

template <typename T>
double filter_l1_product(const Network<T>& net) {
    double h = 1.0;
    for (size_t l = 0; l < net.specs().size(); ++l) {
        const LayerSpec& s = net.specs()[l];
        const Tensor<T>& w = net.layers()[l].weights;
        const int64_t taps = w.extent(2) * w.extent(3);
        double layer_norm = 0.0;
        for (int64_t oc = 0; oc < s.out_features; ++oc) {
            double row = 0.0;
            for (int64_t ic = 0; ic < s.in_features; ++ic) {
                // transposed-conv decoder weights are stored [in, out, ...]
                const int64_t base = s.kind == LayerKind::decoder && !s.nn_upsample
                                         ? (ic * s.out_features + oc) * taps
                                         : (oc * s.in_features + ic) * taps;
                const T* p = w.data() + base;
                for (int64_t i = 0; i < taps; ++i) row += std::abs(static_cast<double>(p[i]));
            }
            layer_norm = std::max(layer_norm, row);
        }
        h *= layer_norm;
    }
    return h;
}

int receptive_margin_px(const std::vector<LayerSpec>& specs) {
    // walk layers from output to input, widening the dependency interval
    int64_t lo = 0, hi = 0;
    for (auto it = specs.rbegin(); it != specs.rend(); ++it) {
        const LayerSpec& s = *it;
        const int64_t k = s.kernel_width;
        const int64_t m = s.kind == LayerKind::hidden ? 1 : s.resample;
        const int64_t p = s.padding == Padding::zero_same ? (k - 1) / 2 : 0;
        if (s.kind == LayerKind::decoder && s.nn_upsample) {
            lo = floor_div(lo - p, m);
            hi = floor_div(hi + k - 1 - p, m);
        } else if (s.kind == LayerKind::decoder) {
            lo = floor_div(lo - (k - 1) + p, m);
            hi = floor_div(hi + p, m);
        } else if (s.kind == LayerKind::encoder) {
            lo = lo * m - p;
            hi = hi * m + k - 1 - p;
        } else {
            lo = lo - p;
            hi = hi + k - 1 - p;
        }
    }
    return static_cast<int>(std::max(std::abs(lo), std::abs(hi)));
}

// ---------------------------------------------------------------------------
// optimizer and training loop

template <typename T>
AdamW<T>::AdamW(const Network<T>& net, double lr, double weight_decay) : lr_(lr), wd_(weight_decay) {
    for (const auto& l : net.layers()) {
        m_w_.emplace_back(l.weights.shape());
        v_w_.emplace_back(l.weights.shape());
        m_b_.emplace_back(l.bias.size(), T{});
        v_b_.emplace_back(l.bias.size(), T{});
    }
}

template <typename T>
void AdamW<T>::step(Network<T>& net, const Gradients<T>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (size_t l = 0; l < net.layers().size(); ++l) {
        auto update = [&](T* w, const T* g, T* m, T* v, int64_t n) {
            for (int64_t i = 0; i < n; ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
                const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                const double decayed = lr_ * wd_ * static_cast<double>(w[i]);
                w[i] = static_cast<T>(static_cast<double>(w[i]) -
                                      lr_ * mhat / (std::sqrt(vhat) + eps) - decayed);
            }
        };
        update(net.layers()[l].weights.data(), grads.weights[l].data(), m_w_[l].data(),
               v_w_[l].data(), net.layers()[l].weights.size());
        if (!net.layers()[l].bias.empty())
            update(net.layers()[l].bias.data(), grads.bias[l].data(), m_b_[l].data(),
                   v_b_[l].data(), static_cast<int64_t>(net.layers()[l].bias.size()));
    }
}

template <typename T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* grad) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    const int64_t n = pred.size();
    if (grad && !grad->same_shape(pred)) *grad = Tensor<T>(pred.shape());
    double acc = 0.0;
    const T* p = pred.data();
    const T* t = target.data();
    T* g = grad ? grad->data() : nullptr;
    const double inv = 1.0 / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += d * d;
        if (g) g[i] = static_cast<T>(2.0 * d * inv);
    }
    return acc * inv;
}

std::vector<double> train(Network<float>& net, const TrainView& data, const TrainConfig& cfg,
                          int threads) {
    if (data.count <= 0) throw std::invalid_argument("train: empty dataset");
    if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) || cfg.weight_decay < 0.0)
        throw std::invalid_argument("train: bad config");

    std::vector<double> history;
    if (cfg.epochs == 0) return history;

    AdamW<float> opt(net, cfg.learning_rate, cfg.weight_decay);
    Rng shuffle_rng(cfg.seed, 0x7261696e);

    std::vector<int64_t> order(static_cast<size_t>(data.count));
    for (int64_t i = 0; i < data.count; ++i) order[static_cast<size_t>(i)] = i;

    const int nthreads = resolve_threads(threads);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int64_t i = data.count - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(shuffle_rng.below(static_cast<uint64_t>(i + 1)))]);

        double epoch_loss = 0.0;
        for (int64_t start = 0; start < data.count; start += cfg.batch_size) {
            const int64_t nb = std::min<int64_t>(cfg.batch_size, data.count - start);
            std::vector<Gradients<float>> item_grads(static_cast<size_t>(nb));
            std::vector<double> item_loss(static_cast<size_t>(nb), 0.0);

            parallel_for(nb, nthreads, [&](int64_t lo, int64_t hi) {
                Tensor<float> input(data.input_shape);
                Tensor<float> target(data.target_shape);
                for (int64_t b = lo; b < hi; ++b) {
                    const auto [in_ptr, tg_ptr] = data.sample(order[static_cast<size_t>(start + b)]);
                    std::copy(in_ptr, in_ptr + input.size(), input.data());
                    std::copy(tg_ptr, tg_ptr + target.size(), target.data());
                    ForwardCache<float> cache;
                    const Tensor<float> pred = net.forward(input, cache);
                    Tensor<float> grad;
                    item_loss[static_cast<size_t>(b)] = mse_loss(pred, target, &grad);
                    item_grads[static_cast<size_t>(b)] = net.backward(cache, grad);
                }
            });

            Gradients<float> batch = std::move(item_grads[0]);
            for (int64_t b = 1; b < nb; ++b) batch.add_params(item_grads[static_cast<size_t>(b)]);
            batch.scale_params(1.0f / static_cast<float>(nb));

            double batch_loss = 0.0;
            for (double v : item_loss) batch_loss += v;
            if (!std::isfinite(batch_loss)) throw std::runtime_error("train: non-finite loss");
            epoch_loss += batch_loss;

            opt.step(net, batch);
        }
        history.push_back(epoch_loss / static_cast<double>(data.count));
    }
    return history;
}

// ---------------------------------------------------------------------------
// serialization

std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::encoder: return "encoder";
        case LayerKind::hidden: return "hidden";
        case LayerKind::decoder: return "decoder";
    }
    return "hidden";
}
std::string to_string(Nonlin n) {
    switch (n) {
        case Nonlin::leaky_relu: return "leaky_relu";
        case Nonlin::relu: return "relu";
        case Nonlin::tanh: return "tanh";
        case Nonlin::identity: return "identity";
    }
    return "identity";
}
std::string to_string(Padding p) { return p == Padding::zero_same ? "zero_same" : "none"; }

LayerKind layer_kind_from(const std::string& s) {
    if (s == "encoder") return LayerKind::encoder;
    if (s == "hidden") return LayerKind::hidden;
    if (s == "decoder") return LayerKind::decoder;
    throw std::invalid_argument("unknown layer kind: " + s);
}
Nonlin nonlin_from(const std::string& s) {
    if (s == "leaky_relu") return Nonlin::leaky_relu;
    if (s == "relu") return Nonlin::relu;
    if (s == "tanh") return Nonlin::tanh;
    if (s == "identity") return Nonlin::identity;
    throw std::invalid_argument("unknown nonlinearity: " + s);
}
Padding padding_from(const std::string& s) {
    if (s == "zero_same") return Padding::zero_same;
    if (s == "none") return Padding::none;
    throw std::invalid_argument("unknown padding: " + s);
}

void save_network(const Network<float>& net, const std::string& manifest_path,
                  const std::string& payload_path) {
    std::vector<float> flat;
    flat.reserve(static_cast<size_t>(net.parameter_count()));
    for (const auto& l : net.layers()) {
        flat.insert(flat.end(), l.weights.values().begin(), l.weights.values().end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    io::write_archive(payload_path, {static_cast<int64_t>(flat.size())}, 1,
                      std::span<const float>(flat));

    nlohmann::json m;
    m["format"] = "stlab-model";
    m["dtype"] = "f32";
    m["spatial_dim"] = net.spatial_dim();
    m["param_count"] = static_cast<int64_t>(flat.size());
    m["payload"] = payload_path.substr(payload_path.find_last_of('/') + 1);
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& s : net.specs()) {
        nlohmann::json j;
        j["kind"] = to_string(s.kind);
        j["in_features"] = s.in_features;
        j["out_features"] = s.out_features;
        j["kernel_width"] = s.kernel_width;
        j["resample"] = s.resample;
        j["nonlin"] = to_string(s.nonlin);
        j["nonlin_param"] = s.nonlin_param;
        j["padding"] = to_string(s.padding);
        j["bias"] = s.bias;
        j["nn_upsample"] = s.nn_upsample;
        layers.push_back(j);
    }
    m["layers"] = layers;
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_network: cannot open " + manifest_path);
    out << m.dump(2) << '\n';
}

Network<float> load_network(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("load_network: cannot open " + manifest_path);
    nlohmann::json m = nlohmann::json::parse(in);
    if (m.value("format", "") != "stlab-model")
        throw std::runtime_error("load_network: not a model manifest: " + manifest_path);

    std::vector<LayerSpec> specs;
    for (const auto& j : m.at("layers")) {
        LayerSpec s;
        s.kind = layer_kind_from(j.at("kind").get<std::string>());
        s.in_features = j.at("in_features").get<int>();
        s.out_features = j.at("out_features").get<int>();
        s.kernel_width = j.at("kernel_width").get<int>();
        s.resample = j.at("resample").get<int>();
        s.nonlin = nonlin_from(j.at("nonlin").get<std::string>());
        s.nonlin_param = j.at("nonlin_param").get<double>();
        s.padding = padding_from(j.at("padding").get<std::string>());
        s.bias = j.at("bias").get<bool>();
        s.nn_upsample = j.value("nn_upsample", false);
        specs.push_back(s);
    }
    Network<float> net(m.at("spatial_dim").get<int>(), specs);

    const std::string dir = manifest_path.substr(0, manifest_path.find_last_of('/') + 1);
    const io::TensorArchive payload = io::read_archive(dir + m.at("payload").get<std::string>());
    if (payload.dtype != "f32")
        throw std::runtime_error("load_network: expected f32 payload");
    if (static_cast<int64_t>(payload.f32.size()) != net.parameter_count())
        throw std::runtime_error("load_network: parameter count mismatch");

    size_t off = 0;
    for (auto& l : net.layers()) {
        std::copy(payload.f32.begin() + static_cast<int64_t>(off),
                  payload.f32.begin() + static_cast<int64_t>(off) + l.weights.size(), l.weights.data());
        off += static_cast<size_t>(l.weights.size());
        std::copy(payload.f32.begin() + static_cast<int64_t>(off),
                  payload.f32.begin() + static_cast<int64_t>(off + l.bias.size()), l.bias.begin());
        off += l.bias.size();
    }
    return net;
}

template struct LayerParams<float>;
template struct LayerParams<double>;
template struct Gradients<float>;
template struct Gradients<double>;
template class Network<float>;
template class Network<double>;
template class AdamW<float>;
template class AdamW<double>;
template double filter_l1_product<float>(const Network<float>&);
template double filter_l1_product<double>(const Network<double>&);
template double mse_loss<float>(const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double mse_loss<double>(const Tensor<double>&, const Tensor<double>&, Tensor<double>*);

}  // namespace stlab::cnn
