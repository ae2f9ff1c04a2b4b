#include "dtf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "dtf/checkpoint.hpp"
#include "dtf/error.hpp"

namespace dtf {

namespace {

void require_compatible(const SceneFlowField& est, const SceneFlowField& gt, const PixelMask& valid) {
    if (!est.grid().same_shape(gt.grid()) || !valid.same_extent(gt.grid()))
        throw ShapeError("loss: estimate, ground truth and mask must share one extent");
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

void RobustLossConfig::validate() const {
    if (!(epsilon > 0.0)) throw InvalidArgument("robust loss: epsilon must be positive");
    if (!(exponent > 0.0 && exponent <= 1.0)) throw InvalidArgument("robust loss: exponent must lie in (0, 1]");
}

double robust_loss(const SceneFlowField& est, const SceneFlowField& gt, const PixelMask& valid,
                   const RobustLossConfig& cfg, Grid2D* grad) {
    cfg.validate();
    require_compatible(est, gt, valid);
    const std::size_t n = valid.count();
    if (n == 0) throw InvalidArgument("robust loss: no valid pixels");
    if (grad) *grad = Grid2D(gt.height(), gt.width(), kSceneFlowChannels);

    const double inv_n = 1.0 / double(n);
    const double* e = est.grid().data();
    const double* g = gt.grid().data();
    double sum = 0.0;
    for (std::size_t p = 0; p < valid.pixels(); ++p) {
        if (!valid.at_index(p)) continue;
        const std::size_t base = p * kSceneFlowChannels;
        double l1 = 0.0;
        for (int c = 0; c < kSceneFlowChannels; ++c) l1 += std::abs(e[base + c] - g[base + c]);
        const double r = l1 + cfg.epsilon;
        sum += std::pow(r, cfg.exponent);
        if (grad) {
            const double scale = inv_n * cfg.exponent * std::pow(r, cfg.exponent - 1.0);
            double* out = grad->data() + base;
            for (int c = 0; c < kSceneFlowChannels; ++c) out[c] = scale * sign(e[base + c] - g[base + c]);
        }
    }
    return sum * inv_n;
}

LossTerms total_loss(const SceneFlowField& fw, const SceneFlowField& inv, const SceneFlowField& fused,
                     const SceneFlowField& gt, const PixelMask& valid, const RobustLossConfig& cfg) {
    return {robust_loss(fw, gt, valid, cfg), robust_loss(inv, gt, valid, cfg), robust_loss(fused, gt, valid, cfg)};
}

double mse_loss(const SceneFlowField& est, const SceneFlowField& gt, const PixelMask& valid, Grid2D* grad) {
    require_compatible(est, gt, valid);
    const std::size_t n = valid.count() * kSceneFlowChannels;
    if (n == 0) throw InvalidArgument("mse loss: no valid pixels");
    if (grad) *grad = Grid2D(gt.height(), gt.width(), kSceneFlowChannels);
    const double inv_n = 1.0 / double(n);
    const double* e = est.grid().data();
    const double* g = gt.grid().data();
    double sum = 0.0;
    for (std::size_t p = 0; p < valid.pixels(); ++p) {
        if (!valid.at_index(p)) continue;
        for (int c = 0; c < kSceneFlowChannels; ++c) {
            const std::size_t k = p * kSceneFlowChannels + c;
            const double d = e[k] - g[k];
            sum += d * d;
            if (grad) grad->data()[k] = 2.0 * d * inv_n;
        }
    }
    return sum * inv_n;
}

// Schedules and Adam ---------------------------------------------------------

void TrainSchedule::validate() const {
    if (epochs < 1) throw InvalidArgument("schedule: epochs must be at least 1");
    if (batch_size < 1) throw InvalidArgument("schedule: batch size must be at least 1");
    if (lr_stages.empty()) throw InvalidArgument("schedule: at least one learning-rate stage is required");
    if (lr_stages.front().start_epoch != 0) throw InvalidArgument("schedule: first stage must start at epoch 0");
    for (std::size_t k = 0; k < lr_stages.size(); ++k) {
        if (!(lr_stages[k].rate > 0.0) || !std::isfinite(lr_stages[k].rate))
            throw InvalidArgument("schedule: learning rates must be positive");
        if (k > 0 && (lr_stages[k].start_epoch <= lr_stages[k - 1].start_epoch ||
                      lr_stages[k].rate >= lr_stages[k - 1].rate))
            throw InvalidArgument("schedule: stages must increase in epoch and decrease in rate");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw InvalidArgument("schedule: moment decays must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) throw InvalidArgument("schedule: adam epsilon must be positive");
}

double TrainSchedule::rate_at(int epoch) const {
    double rate = lr_stages.front().rate;
    for (const auto& s : lr_stages)
        if (epoch >= s.start_epoch) rate = s.rate;
    return rate;
}

TrainSchedule schedule_preset(std::string_view name) {
    TrainSchedule s;
    if (name == "desk") return s;
    if (name == "paper-inverter") {
        s.epochs = 40;
        s.batch_size = 4;
        s.lr_stages = {{0, 1e-4}, {20, 5e-5}, {30, 1e-5}};
        return s;
    }
    if (name == "paper-finetune") {
        s.epochs = 100;
        s.batch_size = 1;
        s.lr_stages = {{0, 5e-5}, {75, 1e-5}};
        return s;
    }
    throw InvalidArgument("unknown schedule preset '" + std::string(name) + "'");
}

AdamState make_adam_state(const NetworkParams& params) {
    AdamState s;
    s.m = params;
    for (auto& l : s.m) {
        l.weights.setZero();
        l.bias.setZero();
    }
    s.v = s.m;
    return s;
}

void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state, const TrainSchedule& schedule,
               double rate) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam: parameter, gradient and state layer counts differ");
    for (std::size_t l = 0; l < params.size(); ++l) {
        if (grads[l].weights.rows() != params[l].weights.rows() || grads[l].weights.cols() != params[l].weights.cols() ||
            grads[l].bias.size() != params[l].bias.size())
            throw ShapeError("adam: gradient shape mismatch in layer " + std::to_string(l));
        if (!grads[l].weights.allFinite() || !grads[l].bias.allFinite())
            throw NumericalError("adam: non-finite gradient in layer " + std::to_string(l));
    }

    ++state.step;
    const double b1 = schedule.beta1, b2 = schedule.beta2;
    const double c1 = 1.0 - std::pow(b1, double(state.step));
    const double c2 = 1.0 - std::pow(b2, double(state.step));
    const double eps = schedule.adam_epsilon;

    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        p.array() -= rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < params.size(); ++l) {
        update(params[l].weights, grads[l].weights, state.m[l].weights, state.v[l].weights);
        update(params[l].bias, grads[l].bias, state.m[l].bias, state.v[l].bias);
    }
}

// Training state ---------------------------------------------------------------

namespace {

constexpr std::string_view kStateMagic{"DTFSTATE", 8};
constexpr std::uint32_t kStateVersion = 1;

void scale_grads(NetworkParams& g, double s) {
    for (auto& l : g) {
        l.weights *= s;
        l.bias *= s;
    }
}

void zero_grads(NetworkParams& g) {
    for (auto& l : g) {
        l.weights.setZero();
        l.bias.setZero();
    }
}

ConvNet with_params(const ConvNet& shape, NetworkParams p) {
    ConvNet net(shape.specs());
    net.set_params(std::move(p));
    return net;
}

/// One trainable network with its optimizer moments and best-so-far snapshot.
struct Slot {
    std::string tag;
    ConvNet* net;
    AdamState* adam;
    ConvNet* best;
};

struct RunState {
    int epochs_done = 0;
    int best_epoch = 0;
    double best_metric = 0.0;
    std::vector<EpochLog> history;
};

void write_state(const std::filesystem::path& path, const RunState& run, std::span<const Slot> slots) {
    ByteWriter w;
    w.bytes(kStateMagic);
    w.u32(kStateVersion);
    w.u32(std::uint32_t(run.epochs_done));
    w.u32(std::uint32_t(run.best_epoch));
    w.f64(run.best_metric);
    w.u32(std::uint32_t(slots.size()));
    for (const auto& s : slots) {
        w.str(s.tag);
        w.u64(s.adam->step);
        w.str(encode_checkpoint(s.tag, *s.net));
        w.str(encode_checkpoint(s.tag, with_params(*s.net, s.adam->m)));
        w.str(encode_checkpoint(s.tag, with_params(*s.net, s.adam->v)));
        w.str(encode_checkpoint(s.tag, *s.best));
    }
    w.u32(std::uint32_t(run.history.size()));
    for (const auto& h : run.history) {
        w.u32(std::uint32_t(h.epoch));
        w.f64(h.rate);
        w.f64(h.loss.fw);
        w.f64(h.loss.inv);
        w.f64(h.loss.fused);
        w.str(h.validation ? h.validation->to_text() : std::string());
    }
    write_file_bytes(path, w.buffer());
}

ConvNet decode_as(std::string_view bytes, const ConvNet& expected, std::string_view tag) {
    Checkpoint ck = decode_checkpoint(bytes);
    if (ck.architecture != tag || ck.net.specs() != expected.specs())
        throw DataError("training state: network '" + ck.architecture + "' does not match '" + std::string(tag) + "'");
    return std::move(ck.net);
}

RunState read_state(const std::filesystem::path& path, std::span<const Slot> slots) {
    const std::string bytes = read_file_bytes(path);
    try {
        ByteReader r(bytes);
        if (r.bytes(kStateMagic.size()) != kStateMagic) throw DataError("not a training state file");
        if (r.u32() != kStateVersion) throw DataError("unsupported training state version");
        RunState run;
        run.epochs_done = int(r.u32());
        run.best_epoch = int(r.u32());
        run.best_metric = r.f64();
        if (r.u32() != slots.size()) throw DataError("training state holds a different number of networks");
        for (const auto& s : slots) {
            if (r.str() != s.tag) throw DataError("training state network tag mismatch");
            s.adam->step = r.u64();
            *s.net = decode_as(r.str(), *s.net, s.tag);
            s.adam->m = decode_as(r.str(), *s.net, s.tag).params();
            s.adam->v = decode_as(r.str(), *s.net, s.tag).params();
            *s.best = decode_as(r.str(), *s.net, s.tag);
        }
        const std::uint32_t n = r.u32();
        for (std::uint32_t k = 0; k < n; ++k) {
            EpochLog h;
            h.epoch = int(r.u32());
            h.rate = r.f64();
            h.loss.fw = r.f64();
            h.loss.inv = r.f64();
            h.loss.fused = r.f64();
            const std::string report = r.str();
            if (!report.empty()) h.validation = EvalReport::parse(report);
            run.history.push_back(std::move(h));
        }
        if (!r.at_end()) throw DataError("trailing bytes");
        return run;
    } catch (const DataError& e) {
        throw DataError("training state " + path.string() + ": " + e.what());
    }
}

/// Sample order for one epoch; depends only on (seed, epoch) so that resumed
/// runs replay the same sequence.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(epoch), 0x5eedu};
    std::mt19937_64 rng(seq);
    for (std::size_t k = n; k > 1; --k) {
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        std::swap(order[k - 1], order[pick(rng)]);
    }
    return order;
}

double selection_metric(const EpochLog& log) {
    if (log.validation) {
        if (auto r = log.validation->rate(Component::SF, Region::all)) return *r;
    }
    return log.loss.total();
}

void require_finite(const LossTerms& l, int epoch) {
    if (!std::isfinite(l.fw) || !std::isfinite(l.inv) || !std::isfinite(l.fused))
        throw NumericalError("training: non-finite loss in epoch " + std::to_string(epoch));
}

/// Shared epoch loop. `step` processes one sample, accumulates gradients and
/// returns its loss terms; `apply` performs the optimizer update for a batch.
template <class Step, class Apply, class Validate>
void run_epochs(std::size_t n, const TrainSchedule& schedule, const TrainingOptions& options, std::span<const Slot> slots,
                RunState& run, Step&& step, Apply&& apply, Validate&& validate) {
    const int last = options.stop_after_epoch < 0 ? schedule.epochs : std::min(options.stop_after_epoch, schedule.epochs);
    for (int epoch = run.epochs_done; epoch < last; ++epoch) {
        const double rate = schedule.rate_at(epoch);
        const auto order = epoch_order(n, schedule.seed, epoch);
        LossTerms sum;
        for (std::size_t b = 0; b < n; b += std::size_t(schedule.batch_size)) {
            const std::size_t e = std::min(n, b + std::size_t(schedule.batch_size));
            for (std::size_t k = b; k < e; ++k) {
                const LossTerms l = step(order[k]);
                sum.fw += l.fw;
                sum.inv += l.inv;
                sum.fused += l.fused;
            }
            apply(1.0 / double(e - b), rate);
        }
        EpochLog log;
        log.epoch = epoch + 1;
        log.rate = rate;
        log.loss = {sum.fw / double(n), sum.inv / double(n), sum.fused / double(n)};
        require_finite(log.loss, log.epoch);
        log.validation = validate();

        const double metric = selection_metric(log);
        if (run.best_epoch == 0 || metric < run.best_metric) {
            run.best_metric = metric;
            run.best_epoch = log.epoch;
            for (const auto& s : slots) *s.best = *s.net;
        }
        run.epochs_done = epoch + 1;
        run.history.push_back(log);
        if (!options.state_path.empty()) write_state(options.state_path, run, slots);
        if (options.on_epoch) options.on_epoch(log);
    }
}

PixelMask inverter_mask(const FrameTripletSample& s) { return mask_and(s.valid_fw, s.valid_bw); }

void replace_non_finite(SceneFlowField& f) {
    for (double& x : f.grid().values())
        if (!std::isfinite(x)) x = 0.0;
}

}  // namespace

// Inverter pretraining ----------------------------------------------------------

InverterTrainingResult train_inverter(std::span<const FrameTripletSample> data, const TrainSchedule& schedule,
                                      const TrainingOptions& options) {
    schedule.validate();
    if (data.empty()) throw InvalidArgument("train_inverter: empty dataset");
    for (const auto& s : data)
        if (!s.has_backward()) throw DataError("train_inverter: sample '" + s.id + "' lacks backward ground truth");

    InverterNetwork model = build_inverter(schedule.seed);
    InverterNetwork best = model;
    AdamState adam = make_adam_state(model.net.params());
    NetworkParams grads = zero_params(model.net.specs());
    const Slot slots[] = {{std::string(kInverterArchitecture), &model.net, &adam, &best.net}};

    RunState run;
    if (options.resume && !options.state_path.empty() && std::filesystem::exists(options.state_path))
        run = read_state(options.state_path, slots);

    std::vector<PixelMask> masks;
    masks.reserve(data.size());
    for (const auto& s : data) masks.push_back(inverter_mask(s));

    auto step = [&](std::size_t k) {
        const auto& s = data[k];
        if (masks[k].count() == 0) return LossTerms{};
        ForwardTape tape;
        const SceneFlowField out = invert(model, *s.gt_backward, tape);
        Grid2D g;
        const double loss = mse_loss(out, s.gt_forward, masks[k], &g);
        model.net.backward(tape, g, grads);
        return LossTerms{0.0, loss, 0.0};
    };
    auto apply = [&](double scale, double rate) {
        scale_grads(grads, scale);
        adam_step(model.net.params(), grads, adam, schedule, rate);
        zero_grads(grads);
    };
    auto validate = [&]() -> std::optional<EvalReport> {
        if (options.validation.empty()) return std::nullopt;
        std::vector<EvalReport> reports;
        for (const auto& s : options.validation) {
            if (!s.has_backward()) continue;
            reports.push_back(evaluate(invert(model, *s.gt_backward), s.gt_forward, inverter_mask(s), s.noc_fw));
        }
        return aggregate(reports);
    };
    run_epochs(data.size(), schedule, options, slots, run, step, apply, validate);

    return {std::move(model), std::move(best), run.best_epoch, std::move(run.history)};
}

double inverter_flow_outlier_rate(std::span<const FrameTripletSample> data, const InverterNetwork* inverter) {
    std::vector<EvalReport> reports;
    for (const auto& s : data) {
        if (!s.has_backward()) throw DataError("sample '" + s.id + "' lacks backward ground truth");
        const SceneFlowField inv = inverter ? invert(*inverter, *s.gt_backward) : constant_linear_invert(*s.gt_backward);
        reports.push_back(evaluate(inv, s.gt_forward, inverter_mask(s), s.noc_fw));
    }
    const auto r = aggregate(reports).rate(Component::OF, Region::all);
    if (!r) throw InvalidArgument("inverter_flow_outlier_rate: no valid pixels");
    return *r;
}

// Pipeline fine-tuning ----------------------------------------------------------

EstimatePair estimate_pair(const FrameTripletSample& sample, const EstimatorConfig& config) {
    EstimatePair p{estimate(sample, Direction::forward, config), estimate(sample, Direction::backward, config)};
    // Network inputs must be finite; external estimates mark gaps with NaN.
    replace_non_finite(p.fw);
    replace_non_finite(p.bw);
    return p;
}

PipelineOutput run_pipeline(const PipelineModel& model, const EstimatePair& estimates) {
    PipelineOutput out;
    out.fw = estimates.fw;
    out.inv = invert(model.inverter, estimates.bw);
    out.weights = predict_weights(model.fusion, out.fw, out.inv);
    out.fused = weighted_average(out.fw, out.inv, out.weights);
    return out;
}

PipelineTrainingResult train_pipeline(std::span<const FrameTripletSample> data, const EstimatorConfig& estimator,
                                      FusionVariant variant, const TrainSchedule& schedule,
                                      const InverterNetwork& initial_inverter, const TrainingOptions& options) {
    schedule.validate();
    estimator.validate();
    options.loss.validate();
    if (data.empty()) throw InvalidArgument("train_pipeline: empty dataset");
    if (initial_inverter.net.specs() != inverter_layer_specs())
        throw InvalidArgument("train_pipeline: initial inverter has the wrong architecture");

    PipelineModel model{initial_inverter, build_fusion(variant, schedule.seed)};
    PipelineModel best = model;
    AdamState adam_inv = make_adam_state(model.inverter.net.params());
    AdamState adam_fus = make_adam_state(model.fusion.net.params());
    NetworkParams g_inv = zero_params(model.inverter.net.specs());
    NetworkParams g_fus = zero_params(model.fusion.net.specs());
    const Slot slots[] = {
        {std::string(kInverterArchitecture), &model.inverter.net, &adam_inv, &best.inverter.net},
        {fusion_architecture(variant), &model.fusion.net, &adam_fus, &best.fusion.net},
    };

    RunState run;
    if (options.resume && !options.state_path.empty() && std::filesystem::exists(options.state_path))
        run = read_state(options.state_path, slots);

    std::vector<EstimatePair> estimates;
    estimates.reserve(data.size());
    for (const auto& s : data) estimates.push_back(estimate_pair(s, estimator));

    const int inv_channels = kSceneFlowChannels;
    auto step = [&](std::size_t k) {
        const auto& s = data[k];
        const auto& est = estimates[k];
        if (s.valid_fw.count() == 0) return LossTerms{};

        ForwardTape tape_inv, tape_fus;
        const SceneFlowField inv = invert(model.inverter, est.bw, tape_inv);
        const FusionWeights w = predict_weights(model.fusion, est.fw, inv, tape_fus);
        const SceneFlowField fused = weighted_average(est.fw, inv, w);

        LossTerms l;
        Grid2D d_inv, d_fused;
        l.fw = robust_loss(est.fw, s.gt_forward, s.valid_fw, options.loss);
        l.inv = robust_loss(inv, s.gt_forward, s.valid_fw, options.loss, &d_inv);
        l.fused = robust_loss(fused, s.gt_forward, s.valid_fw, options.loss, &d_fused);

        const WeightedAverageGrads wg = weighted_average_backward(est.fw, inv, w, d_fused);
        const Grid2D d_input = model.fusion.net.backward(tape_fus, wg.d_logits, g_fus);

        // The inverted field reaches the loss directly, through the average and
        // as fusion input (channels 4..7).
        double* di = d_inv.data();
        const double* da = wg.d_inv.data();
        const double* dn = d_input.data();
        const int cin = d_input.channels();
        for (std::size_t p = 0; p < d_inv.pixels(); ++p)
            for (int c = 0; c < inv_channels; ++c)
                di[p * inv_channels + c] += da[p * inv_channels + c] + dn[p * cin + kSceneFlowChannels + c];
        model.inverter.net.backward(tape_inv, d_inv, g_inv);
        return l;
    };
    auto apply = [&](double scale, double rate) {
        scale_grads(g_inv, scale);
        scale_grads(g_fus, scale);
        adam_step(model.inverter.net.params(), g_inv, adam_inv, schedule, rate);
        adam_step(model.fusion.net.params(), g_fus, adam_fus, schedule, rate);
        zero_grads(g_inv);
        zero_grads(g_fus);
    };
    auto validate = [&]() -> std::optional<EvalReport> {
        if (options.validation.empty()) return std::nullopt;
        std::vector<EvalReport> reports;
        for (const auto& s : options.validation) {
            const PipelineOutput out = run_pipeline(model, estimate_pair(s, estimator));
            reports.push_back(evaluate(out.fused, s.gt_forward, s.valid_fw, s.noc_fw));
        }
        return aggregate(reports);
    };
    run_epochs(data.size(), schedule, options, slots, run, step, apply, validate);

    return {std::move(model), std::move(best), run.best_epoch, std::move(run.history)};
}

}  // namespace dtf
