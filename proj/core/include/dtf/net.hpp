#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dtf/grid.hpp"

namespace dtf {

enum class Activation { leaky_relu, linear };

inline constexpr double kLeakySlope = 0.1;

inline double leaky_relu(double x) { return x >= 0.0 ? x : kLeakySlope * x; }

/// Square-kernel, stride-1 convolution with zero "same" padding.
struct ConvLayerSpec {
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 3;
    int dilation = 1;
    Activation activation = Activation::leaky_relu;

    /// Spatial extent covered by one output pixel: dilation * (kernel - 1) + 1.
    int receptive_field() const { return dilation * (kernel - 1) + 1; }
    std::size_t parameter_count() const {
        return std::size_t(out_channels) * kernel * kernel * in_channels + out_channels;
    }
    void validate() const;

    friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Weights are out_channels x (kernel * kernel * in_channels); column index is
/// (ky * kernel + kx) * in_channels + c.
struct LayerParams {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

using NetworkParams = std::vector<LayerParams>;

NetworkParams zero_params(std::span<const ConvLayerSpec> specs);
std::size_t parameter_count(const NetworkParams& params);
std::vector<double> flatten(const NetworkParams& params);
void unflatten(std::span<const double> flat, NetworkParams& params);

/// Single convolution layer including its activation.
Grid2D conv2d_forward(const Grid2D& input, const ConvLayerSpec& spec, const LayerParams& params);

/// Per-pixel two-way softmax: w_a = exp(a) / (exp(a) + exp(b)), w_b = 1 - w_a.
std::pair<Grid2D, Grid2D> pairwise_softmax(const Grid2D& logit_a, const Grid2D& logit_b);

/// Activations kept from a forward pass for the backward pass.
struct ForwardTape {
    Grid2D input;
    std::vector<Grid2D> outputs;  ///< post-activation output of every layer
};

/// Plain feed-forward stack of convolution layers.
class ConvNet {
public:
    ConvNet() = default;
    explicit ConvNet(std::vector<ConvLayerSpec> specs);

    /// Zero biases; weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    static ConvNet initialized(std::vector<ConvLayerSpec> specs, std::uint64_t seed);

    const std::vector<ConvLayerSpec>& specs() const { return specs_; }
    const NetworkParams& params() const { return params_; }
    NetworkParams& params() { return params_; }
    void set_params(NetworkParams params);
    std::size_t parameter_count() const { return dtf::parameter_count(params_); }
    int in_channels() const { return specs_.front().in_channels; }
    int out_channels() const { return specs_.back().out_channels; }

    Grid2D forward(const Grid2D& input) const;
    Grid2D forward(const Grid2D& input, ForwardTape& tape) const;

    /// Back-propagates dL/d(output). Parameter gradients are added into
    /// `param_grads` (which must be shaped like params()); returns dL/d(input).
    Grid2D backward(const ForwardTape& tape, const Grid2D& grad_output, NetworkParams& param_grads) const;

private:
    std::vector<ConvLayerSpec> specs_;
    NetworkParams params_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

/// Scalar objective over a flat vector. When `grad` is non-empty it receives
/// the analytic gradient (same length as x).
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct GradientCheckOptions {
    double step = 1e-5;
    /// Check at most this many randomly chosen coordinates (0 = all).
    std::size_t max_coordinates = 0;
    std::uint64_t seed = 0;
    /// Gradients smaller than this in magnitude are compared absolutely.
    double abs_floor = 1e-8;
};

struct GradientCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_coordinate = 0;
    std::size_t coordinates_checked = 0;
};

double relative_error(double analytic, double numeric, double abs_floor = 1e-8);

/// Compares the analytic gradient against central differences.
GradientCheckReport gradient_check(const Objective& objective, std::span<const double> x,
                                   const GradientCheckOptions& options = {});

/// Loss on a network output: returns the value and writes dL/dy into `grad`.
using OutputLoss = std::function<double(const Grid2D& y, Grid2D& grad)>;

/// 0.5 * sum (y - target)^2
OutputLoss squared_loss(Grid2D target);

/// Objective over [network parameters..., input values...] for `gradient_check`.
Objective network_objective(const ConvNet& net, const Grid2D& input, OutputLoss loss);

/// Concatenation of flatten(net.params()) and the input values.
std::vector<double> network_point(const ConvNet& net, const Grid2D& input);

}  // namespace dtf
