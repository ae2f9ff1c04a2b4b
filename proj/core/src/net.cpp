#include "dtf/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dtf/error.hpp"

namespace dtf {

namespace {

using Eigen::MatrixXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using MutMap = Eigen::Map<MatrixXd>;

// Columns are pixels; rows are (tap, channel) with the channel fastest.
MatrixXd im2col(const Grid2D& x, const ConvLayerSpec& s) {
    const int H = x.height(), W = x.width(), C = x.channels(), k = s.kernel, d = s.dilation, r = k / 2;
    const int rows = k * k * C;
    MatrixXd cols(rows, Eigen::Index(H) * W);
    const double* src = x.data();
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            double* col = cols.data() + (std::size_t(i) * W + j) * rows;
            for (int ky = 0; ky < k; ++ky) {
                const int si = i + d * (ky - r);
                for (int kx = 0; kx < k; ++kx) {
                    const int sj = j + d * (kx - r);
                    double* dst = col + (ky * k + kx) * C;
                    if (si < 0 || si >= H || sj < 0 || sj >= W) {
                        std::fill_n(dst, C, 0.0);
                    } else {
                        std::copy_n(src + (std::size_t(si) * W + sj) * C, C, dst);
                    }
                }
            }
        }
    }
    return cols;
}

void col2im_add(const MatrixXd& cols, const ConvLayerSpec& s, Grid2D& dx) {
    const int H = dx.height(), W = dx.width(), C = dx.channels(), k = s.kernel, d = s.dilation, r = k / 2;
    const int rows = k * k * C;
    double* dst = dx.data();
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            const double* col = cols.data() + (std::size_t(i) * W + j) * rows;
            for (int ky = 0; ky < k; ++ky) {
                const int si = i + d * (ky - r);
                if (si < 0 || si >= H) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int sj = j + d * (kx - r);
                    if (sj < 0 || sj >= W) continue;
                    const double* g = col + (ky * k + kx) * C;
                    double* t = dst + (std::size_t(si) * W + sj) * C;
                    for (int c = 0; c < C; ++c) t[c] += g[c];
                }
            }
        }
    }
}

void check_layer(const Grid2D& input, const ConvLayerSpec& spec, const LayerParams& p) {
    if (input.channels() != spec.in_channels) {
        throw ShapeError("conv2d: input has " + std::to_string(input.channels()) + " channels, layer expects " +
                         std::to_string(spec.in_channels));
    }
    if (p.weights.rows() != spec.out_channels ||
        p.weights.cols() != Eigen::Index(spec.kernel) * spec.kernel * spec.in_channels ||
        p.bias.size() != spec.out_channels) {
        throw ShapeError("conv2d: parameter shape does not match layer spec");
    }
}

Grid2D apply_layer(const Grid2D& input, const ConvLayerSpec& spec, const LayerParams& p) {
    check_layer(input, spec, p);
    Grid2D out(input.height(), input.width(), spec.out_channels);
    MutMap z(out.data(), spec.out_channels, Eigen::Index(input.pixels()));
    if (spec.kernel == 1 && spec.dilation == 1) {
        z.noalias() = p.weights * ConstMap(input.data(), input.channels(), Eigen::Index(input.pixels()));
    } else {
        z.noalias() = p.weights * im2col(input, spec);
    }
    z.colwise() += p.bias;
    if (spec.activation == Activation::leaky_relu) {
        z = z.unaryExpr([](double v) { return leaky_relu(v); });
    }
    return out;
}

}  // namespace

void ConvLayerSpec::validate() const {
    if (in_channels < 1 || out_channels < 1) throw InvalidArgument("conv layer needs positive channel counts");
    if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("conv kernel must be odd, got " + std::to_string(kernel));
    if (dilation < 1) throw InvalidArgument("conv dilation must be >= 1");
}

NetworkParams zero_params(std::span<const ConvLayerSpec> specs) {
    NetworkParams p;
    p.reserve(specs.size());
    for (const ConvLayerSpec& s : specs) {
        p.push_back({MatrixXd::Zero(s.out_channels, Eigen::Index(s.kernel) * s.kernel * s.in_channels),
                     Eigen::VectorXd::Zero(s.out_channels)});
    }
    return p;
}

std::size_t parameter_count(const NetworkParams& params) {
    std::size_t n = 0;
    for (const LayerParams& l : params) n += std::size_t(l.weights.size() + l.bias.size());
    return n;
}

std::vector<double> flatten(const NetworkParams& params) {
    std::vector<double> flat;
    flat.reserve(parameter_count(params));
    for (const LayerParams& l : params) {
        flat.insert(flat.end(), l.weights.data(), l.weights.data() + l.weights.size());
        flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return flat;
}

void unflatten(std::span<const double> flat, NetworkParams& params) {
    if (flat.size() != parameter_count(params)) throw ShapeError("unflatten: size mismatch");
    const double* p = flat.data();
    for (LayerParams& l : params) {
        std::copy_n(p, l.weights.size(), l.weights.data());
        p += l.weights.size();
        std::copy_n(p, l.bias.size(), l.bias.data());
        p += l.bias.size();
    }
}

Grid2D conv2d_forward(const Grid2D& input, const ConvLayerSpec& spec, const LayerParams& params) {
    spec.validate();
    return apply_layer(input, spec, params);
}

std::pair<Grid2D, Grid2D> pairwise_softmax(const Grid2D& a, const Grid2D& b) {
    if (!a.same_shape(b)) throw ShapeError("pairwise_softmax: logit shapes differ");
    Grid2D wa(a.height(), a.width(), a.channels());
    Grid2D wb(a.height(), a.width(), a.channels());
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double m = std::max(a.values()[k], b.values()[k]);
        const double ea = std::exp(a.values()[k] - m);
        const double eb = std::exp(b.values()[k] - m);
        wa.values()[k] = ea / (ea + eb);
        wb.values()[k] = eb / (ea + eb);
    }
    return {std::move(wa), std::move(wb)};
}

ConvNet::ConvNet(std::vector<ConvLayerSpec> specs) : specs_(std::move(specs)) {
    if (specs_.empty()) throw InvalidArgument("network needs at least one layer");
    for (std::size_t l = 0; l < specs_.size(); ++l) {
        specs_[l].validate();
        if (l > 0 && specs_[l].in_channels != specs_[l - 1].out_channels) {
            throw ShapeError("layer " + std::to_string(l) + " input channels do not match previous output");
        }
    }
    params_ = zero_params(specs_);
}

ConvNet ConvNet::initialized(std::vector<ConvLayerSpec> specs, std::uint64_t seed) {
    ConvNet net(std::move(specs));
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < net.specs_.size(); ++l) {
        const ConvLayerSpec& s = net.specs_[l];
        const double bound = 1.0 / std::sqrt(double(s.kernel * s.kernel * s.in_channels));
        std::uniform_real_distribution<double> dist(-bound, bound);
        MatrixXd& w = net.params_[l].weights;
        for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
    }
    return net;
}

void ConvNet::set_params(NetworkParams params) {
    if (params.size() != params_.size()) throw ShapeError("set_params: layer count mismatch");
    for (std::size_t l = 0; l < params.size(); ++l) {
        if (params[l].weights.rows() != params_[l].weights.rows() ||
            params[l].weights.cols() != params_[l].weights.cols() ||
            params[l].bias.size() != params_[l].bias.size()) {
            throw ShapeError("set_params: shape mismatch in layer " + std::to_string(l));
        }
    }
    params_ = std::move(params);
}

Grid2D ConvNet::forward(const Grid2D& input) const {
    Grid2D x = input;
    for (std::size_t l = 0; l < specs_.size(); ++l) x = apply_layer(x, specs_[l], params_[l]);
    return x;
}

Grid2D ConvNet::forward(const Grid2D& input, ForwardTape& tape) const {
    tape.input = input;
    tape.outputs.clear();
    tape.outputs.reserve(specs_.size());
    const Grid2D* x = &tape.input;
    for (std::size_t l = 0; l < specs_.size(); ++l) {
        tape.outputs.push_back(apply_layer(*x, specs_[l], params_[l]));
        x = &tape.outputs.back();
    }
    return tape.outputs.back();
}

Grid2D ConvNet::backward(const ForwardTape& tape, const Grid2D& grad_output, NetworkParams& grads) const {
    if (tape.outputs.size() != specs_.size()) throw InvalidArgument("backward: tape does not belong to this network");
    if (!grad_output.same_shape(tape.outputs.back())) throw ShapeError("backward: gradient shape mismatch");
    if (grads.size() != params_.size()) throw ShapeError("backward: gradient container mismatch");

    Grid2D dy = grad_output;
    for (std::size_t l = specs_.size(); l-- > 0;) {
        const ConvLayerSpec& s = specs_[l];
        const Grid2D& y = tape.outputs[l];
        const Grid2D& x = l == 0 ? tape.input : tape.outputs[l - 1];
        const Eigen::Index n = Eigen::Index(x.pixels());

        MutMap dz(dy.data(), s.out_channels, n);
        if (s.activation == Activation::leaky_relu) {
            ConstMap ym(y.data(), s.out_channels, n);
            dz = (ym.array() >= 0.0).select(dz, kLeakySlope * dz);
        }

        Grid2D dx(x.height(), x.width(), x.channels());
        if (s.kernel == 1 && s.dilation == 1) {
            ConstMap xm(x.data(), x.channels(), n);
            grads[l].weights.noalias() += dz * xm.transpose();
            MutMap(dx.data(), x.channels(), n).noalias() = params_[l].weights.transpose() * dz;
        } else {
            const MatrixXd cols = im2col(x, s);
            grads[l].weights.noalias() += dz * cols.transpose();
            const MatrixXd dcols = params_[l].weights.transpose() * dz;
            col2im_add(dcols, s, dx);
        }
        grads[l].bias += dz.rowwise().sum();
        dy = std::move(dx);
    }
    return dy;
}

double relative_error(double analytic, double numeric, double abs_floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
    return std::abs(analytic - numeric) / denom;
}

GradientCheckReport gradient_check(const Objective& objective, std::span<const double> x0,
                                   const GradientCheckOptions& options) {
    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> analytic(x.size());
    objective(x, analytic);
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        if (!std::isfinite(analytic[k])) {
            throw NumericalError("gradient_check: non-finite analytic gradient at coordinate " + std::to_string(k));
        }
    }

    std::vector<std::size_t> coords(x.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coordinates > 0 && options.max_coordinates < coords.size()) {
        std::mt19937_64 rng(options.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(options.max_coordinates);
        std::sort(coords.begin(), coords.end());
    }

    GradientCheckReport report;
    const std::span<double> no_grad;
    for (std::size_t k : coords) {
        const double saved = x[k];
        x[k] = saved + options.step;
        const double fp = objective(x, no_grad);
        x[k] = saved - options.step;
        const double fm = objective(x, no_grad);
        x[k] = saved;
        const double numeric = (fp - fm) / (2.0 * options.step);
        if (!std::isfinite(numeric)) {
            throw NumericalError("gradient_check: non-finite numeric gradient at coordinate " + std::to_string(k));
        }
        const double err = relative_error(analytic[k], numeric, options.abs_floor);
        if (err >= report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_coordinate = k;
        }
        ++report.coordinates_checked;
    }
    return report;
}

OutputLoss squared_loss(Grid2D target) {
    return [target = std::move(target)](const Grid2D& y, Grid2D& grad) {
        if (!y.same_shape(target)) throw ShapeError("squared_loss: shape mismatch");
        grad = Grid2D(y.height(), y.width(), y.channels());
        double loss = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const double r = y.values()[k] - target.values()[k];
            loss += 0.5 * r * r;
            grad.values()[k] = r;
        }
        return loss;
    };
}

std::vector<double> network_point(const ConvNet& net, const Grid2D& input) {
    std::vector<double> x = flatten(net.params());
    x.insert(x.end(), input.values().begin(), input.values().end());
    return x;
}

Objective network_objective(const ConvNet& net, const Grid2D& input, OutputLoss loss) {
    return [net = ConvNet(net), shape = input, loss = std::move(loss)](std::span<const double> x, std::span<double> grad) mutable {
        const std::size_t np = net.parameter_count();
        if (x.size() != np + shape.size()) throw ShapeError("network_objective: point has wrong size");
        unflatten(x.subspan(0, np), net.params());
        std::copy(x.begin() + np, x.end(), shape.data());

        ForwardTape tape;
        const Grid2D y = net.forward(shape, tape);
        Grid2D dy;
        const double value = loss(y, dy);
        if (!grad.empty()) {
            NetworkParams pg = zero_params(net.specs());
            const Grid2D dx = net.backward(tape, dy, pg);
            const std::vector<double> gp = flatten(pg);
            std::copy(gp.begin(), gp.end(), grad.begin());
            std::copy(dx.values().begin(), dx.values().end(), grad.begin() + np);
        }
        return value;
    };
}

}  // namespace dtf
