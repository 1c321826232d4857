#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "stlab/tensor.hpp"

namespace stlab::cnn {

enum class LayerKind { encoder, hidden, decoder };
enum class Nonlin { leaky_relu, relu, tanh, identity };
enum class Padding { zero_same, none };

/// One layer: convolution (strided for encoders, transposed for decoders),
/// optional bias, pointwise nonlinearity. Kernels are square with odd width.
/// Decoders upsample with a transposed convolution by default; nn_upsample
/// switches to nearest-neighbor upsampling followed by a stride-1 convolution.
struct LayerSpec {
    LayerKind kind = LayerKind::hidden;
    int in_features = 1;
    int out_features = 1;
    int kernel_width = 1;
    int resample = 1;  // M; must be 1 for hidden layers
    Nonlin nonlin = Nonlin::leaky_relu;
    double nonlin_param = 0.01;
    Padding padding = Padding::zero_same;
    bool bias = true;
    bool nn_upsample = false;  // decoders only

    void validate() const;
};

template <typename T>
struct LayerParams {
    Tensor<T> weights;    // [out_features, in_features, Kh, Kw]
    std::vector<T> bias;  // empty when the spec has no bias
};

template <typename T>
struct ForwardCache {
    std::vector<Tensor<T>> inputs;   // x_{l-1}, per layer
    std::vector<Tensor<T>> preacts;  // z_l, per layer
};

template <typename T>
struct Gradients {
    std::vector<Tensor<T>> weights;
    std::vector<std::vector<T>> bias;
    Tensor<T> input;

    void add_params(const Gradients& other);
    void scale_params(T s);
};

/// Fully convolutional encoder-hidden-decoder network. Spatial rank is 1 or
/// 2; inputs are [C, W] or [C, H, W]. Forward, exact reverse-mode backward,
/// and the transposed convolution is the adjoint of the matching strided
/// convolution.
template <typename T>
class Network {
public:
    Network() = default;
    Network(int spatial_dim, std::vector<LayerSpec> specs);

    static Network randomized(int spatial_dim, const std::vector<LayerSpec>& specs, uint64_t seed);

    int spatial_dim() const { return spatial_dim_; }
    const std::vector<LayerSpec>& specs() const { return specs_; }
    std::vector<LayerParams<T>>& layers() { return layers_; }
    const std::vector<LayerParams<T>>& layers() const { return layers_; }

    int encoder_count() const;
    int total_resample() const;  // product of encoder resample factors
    int64_t parameter_count() const;

    std::vector<int64_t> output_shape(const std::vector<int64_t>& input_shape) const;

    Tensor<T> forward(const Tensor<T>& input) const;
    Tensor<T> forward(const Tensor<T>& input, ForwardCache<T>& cache) const;

    /// grad_output has the forward output's shape; returns gradients for all
    /// filters/biases plus the gradient with respect to the input.
    Gradients<T> backward(const ForwardCache<T>& cache, const Tensor<T>& grad_output) const;

    Gradients<T> zero_gradients() const;

    template <typename U>
    Network<U> cast() const {
        Network<U> out(spatial_dim_, specs_);
        for (size_t l = 0; l < layers_.size(); ++l) {
            out.layers()[l].weights = layers_[l].weights.template cast<U>();
            out.layers()[l].bias.assign(layers_[l].bias.begin(), layers_[l].bias.end());
        }
        return out;
    }

private:
    int spatial_dim_ = 2;
    std::vector<LayerSpec> specs_;
    std::vector<LayerParams<T>> layers_;
};

/// Product over layers of the per-layer filter norm
/// max_out sum_in sum_taps |w|; the H of the transfer bound.
template <typename T>
double filter_l1_product(const Network<T>& net);

/// Conservative halfwidth, in input pixels, of the input region one output
/// pixel depends on. Crops wider than this margin are free of padding
/// effects.
int receptive_margin_px(const std::vector<LayerSpec>& specs);

struct TrainConfig {
    int epochs = 1;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    uint64_t seed = 0;
};

/// Decoupled-weight-decay Adam. Decay multiplies weights by (1 - lr*wd)
/// directly; it never flows through the moment estimates.
template <typename T>
class AdamW {
public:
    AdamW(const Network<T>& net, double lr, double weight_decay);

    void step(Network<T>& net, const Gradients<T>& grads);

    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

private:
    double lr_;
    double wd_;
    int64_t t_ = 0;
    std::vector<Tensor<T>> m_w_, v_w_;
    std::vector<std::vector<T>> m_b_, v_b_;
};

/// Random-access training set; sample(i) returns (input, target) pointers
/// that stay valid for the duration of the call.
struct TrainView {
    std::vector<int64_t> input_shape;
    std::vector<int64_t> target_shape;
    int64_t count = 0;
    std::function<std::pair<const float*, const float*>(int64_t)> sample;
};

/// Minimizes per-pixel MSE with AdamW. Deterministic given cfg.seed: fixed
/// shuffle order, per-item gradients summed in item order regardless of the
/// worker count. Returns the mean training loss per epoch. Throws on
/// non-finite loss.
std::vector<double> train(Network<float>& net, const TrainView& data, const TrainConfig& cfg,
                          int threads = 0);

/// Mean squared error between prediction and target plus the matching
/// gradient seed (2 * (pred - target) / numel).
template <typename T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* grad = nullptr);

void save_network(const Network<float>& net, const std::string& manifest_path,
                  const std::string& payload_path);
Network<float> load_network(const std::string& manifest_path);

std::string to_string(LayerKind k);
std::string to_string(Nonlin n);
std::string to_string(Padding p);
LayerKind layer_kind_from(const std::string& s);
Nonlin nonlin_from(const std::string& s);
Padding padding_from(const std::string& s);

}  // namespace stlab::cnn
