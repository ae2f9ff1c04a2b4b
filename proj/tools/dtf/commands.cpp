#include "commands.hpp"

#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include "dtf/checkpoint.hpp"
#include "dtf/data_io.hpp"
#include "dtf/error.hpp"
#include "dtf/inversion.hpp"
#include "dtf/metrics.hpp"
#include "dtf/visualize.hpp"

namespace dtf::cli {

namespace fs = std::filesystem;

namespace {

constexpr Component kComponents[] = {Component::D1, Component::D2, Component::OF, Component::SF};
constexpr Region kRegions[] = {Region::all, Region::noc, Region::occ};

void prepare_out(const RunConfig& config) {
    fs::create_directories(config.out);
    save_run_config(config.out / "run.cfg", config);
}

std::string sample_id(int k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", k);
    return buf;
}

std::vector<FrameTripletSample> load_split(const fs::path& manifest, const char* what) {
    if (manifest.empty()) throw InvalidArgument(std::string("no ") + what + " manifest configured");
    return load_all_samples(load_manifest(manifest));
}

std::string epoch_line(const EpochLog& l) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "epoch=%d rate=%.6g L_fw=%.9g L_inv=%.9g L_fused=%.9g", l.epoch, l.rate, l.loss.fw,
                  l.loss.inv, l.loss.fused);
    std::string line = buf;
    if (l.validation) {
        for (Component c : kComponents)
            for (Region r : kRegions) {
                line += " " + std::string(to_string(c)) + "." + std::string(to_string(r)) + "=";
                const auto rate = l.validation->rate(c, r);
                line += rate ? (std::snprintf(buf, sizeof buf, "%.6g", *rate), std::string(buf)) : "absent";
            }
    }
    return line;
}

void write_metrics_log(const fs::path& path, const std::vector<EpochLog>& history) {
    std::string text = "# dtf training metrics\n";
    for (const auto& h : history) text += epoch_line(h) + "\n";
    write_file_bytes(path, text);
}

TrainingOptions training_options(const RunConfig& config, std::span<const FrameTripletSample> validation,
                                 std::ostream& log) {
    TrainingOptions o;
    o.validation = validation;
    o.state_path = config.out / "train_state.bin";
    o.resume = config.train.resume;
    o.stop_after_epoch = config.train.stop_after_epoch;
    o.loss = config.train.loss;
    o.on_epoch = [&log](const EpochLog& l) { log << epoch_line(l) << std::endl; };
    return o;
}

SceneFlowField with_gaps(const LoadedField& loaded) {
    SceneFlowField f = loaded.field;
    for (int i = 0; i < f.height(); ++i)
        for (int j = 0; j < f.width(); ++j)
            if (!loaded.valid(i, j))
                for (int c = 0; c < kSceneFlowChannels; ++c) f.at(i, j, c) = std::numeric_limits<double>::quiet_NaN();
    return f;
}

void write_field(const fs::path& root, const std::string& id, const SceneFlowField& f) {
    write_scene_flow(root, id, f, encodable_pixels(f));
}

}  // namespace

std::uint64_t scene_seed(std::uint64_t run_seed, int index) {
    // splitmix64 over (seed, index)
    std::uint64_t z = run_seed * 0x9E3779B97F4A7C15ull + std::uint64_t(index) + 0x632BE59BD9B4E019ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::string report_table(const EvalReport& report) {
    std::string out = "        all       noc       occ\n";
    char buf[32];
    for (Component c : kComponents) {
        std::snprintf(buf, sizeof buf, "%-4s", std::string(to_string(c)).c_str());
        out += buf;
        for (Region r : kRegions) {
            const auto rate = report.rate(c, r);
            if (rate) std::snprintf(buf, sizeof buf, "%10.3f", *rate);
            else std::snprintf(buf, sizeof buf, "%10s", "-");
            out += buf;
        }
        out += "\n";
    }
    return out;
}

std::string occ_reconstruction_text(const EvalReport& report, double ratio) {
    const NocRatio r(ratio);
    std::string out;
    char buf[160];
    for (Component c : kComponents) {
        const auto all = report.rate(c, Region::all);
        const auto noc = report.rate(c, Region::noc);
        if (!all || !noc) continue;
        const OccRateEstimate e = reconstruct_occ_rate(*all, *noc, r);
        std::snprintf(buf, sizeof buf, "%s.occ = %.2f%s\n", std::string(to_string(c)).c_str(), e.rate,
                      e.inconsistent ? " (inconsistent: outside [0, 100])" : "");
        out += buf;
    }
    if (out.empty()) throw DataError("report holds no component with both all and noc rates");
    return out;
}

void cmd_generate(const RunConfig& config, std::ostream& log) {
    config.validate();
    prepare_out(config);
    DatasetManifest manifest;
    manifest.root = config.out;
    manifest.split = config.generate.split;
    manifest.config = "run.cfg";
    std::size_t valid[2] = {0, 0}, occ[2] = {0, 0};
    for (int k = 0; k < config.generate.count; ++k) {
        const std::string id = sample_id(k);
        const FrameTripletSample s = generate_sample(sample_scene(config.generate.scene, scene_seed(config.seed, k)), id);
        write_sample(config.out, s);
        manifest.ids.push_back(id);
        for (Direction d : {Direction::forward, Direction::backward}) {
            valid[int(d)] += s.valid(d).count();
            occ[int(d)] += derive_occ_mask(s.valid(d), s.noc(d)).count();
        }
    }
    write_manifest(config.out / "manifest.txt", manifest);
    char buf[128];
    log << "samples: " << manifest.ids.size() << "\n";
    std::snprintf(buf, sizeof buf, "occ fraction forward: %.4f\nocc fraction backward: %.4f\n",
                  valid[0] ? double(occ[0]) / valid[0] : 0.0, valid[1] ? double(occ[1]) / valid[1] : 0.0);
    log << buf;
}

void cmd_train_inverter(const RunConfig& config, std::ostream& log) {
    config.validate();
    const auto train = load_split(config.data.train, "training");
    std::vector<FrameTripletSample> val;
    if (!config.data.validation.empty()) val = load_split(config.data.validation, "validation");
    prepare_out(config);

    const auto result = train_inverter(train, config.train.schedule, training_options(config, val, log));
    write_metrics_log(config.out / "metrics.log", result.history);
    if (static_cast<int>(result.history.size()) < config.train.schedule.epochs) {
        log << "stopped after epoch " << result.history.size() << "; rerun with resume to continue\n";
        return;
    }
    save_checkpoint(config.out / "inverter_final.ckpt", kInverterArchitecture, result.final_model.net);
    save_checkpoint(config.out / "inverter_best.ckpt", kInverterArchitecture, result.best_model.net);
    log << "best epoch: " << result.best_epoch << "\n";
}

void cmd_train(const RunConfig& config, std::ostream& log) {
    config.validate();
    const auto train = load_split(config.data.train, "training");
    std::vector<FrameTripletSample> val;
    if (!config.data.validation.empty()) val = load_split(config.data.validation, "validation");
    InverterNetwork inverter = config.model.inverter_checkpoint.empty()
                                   ? build_inverter(config.train.schedule.seed)
                                   : InverterNetwork{load_checkpoint_as(config.model.inverter_checkpoint, kInverterArchitecture)};
    prepare_out(config);

    const auto result = train_pipeline(train, config.estimator, config.model.variant, config.train.schedule, inverter,
                                       training_options(config, val, log));
    write_metrics_log(config.out / "metrics.log", result.history);
    if (static_cast<int>(result.history.size()) < config.train.schedule.epochs) {
        log << "stopped after epoch " << result.history.size() << "; rerun with resume to continue\n";
        return;
    }
    const std::string tag = fusion_architecture(config.model.variant);
    save_checkpoint(config.out / "inverter_final.ckpt", kInverterArchitecture, result.final_model.inverter.net);
    save_checkpoint(config.out / "fusion_final.ckpt", tag, result.final_model.fusion.net);
    save_checkpoint(config.out / "inverter_best.ckpt", kInverterArchitecture, result.best_model.inverter.net);
    save_checkpoint(config.out / "fusion_best.ckpt", tag, result.best_model.fusion.net);
    log << "best epoch: " << result.best_epoch << "\n";
}

void cmd_fuse(const RunConfig& config, std::ostream& log) {
    config.validate();
    if (config.data.dataset.empty()) throw InvalidArgument("fuse: no dataset manifest configured");
    if (config.model.fusion_checkpoint.empty()) throw InvalidArgument("fuse: no fusion checkpoint configured");
    const DatasetManifest manifest = load_manifest(config.data.dataset);
    FusionNetwork fusion{config.model.variant,
                         load_checkpoint_as(config.model.fusion_checkpoint, fusion_architecture(config.model.variant))};
    InverterNetwork inverter;
    if (config.model.inverter == InverterMode::learned) {
        if (config.model.inverter_checkpoint.empty())
            throw InvalidArgument("fuse: learned inverter requires an inverter checkpoint");
        inverter.net = load_checkpoint_as(config.model.inverter_checkpoint, kInverterArchitecture);
    }
    prepare_out(config);
    fs::create_directories(config.out / "occlusion");
    if (config.model.oracle) fs::create_directories(config.out / "oracle_selection");

    std::vector<std::string> ids;
    SampleStream stream = iterate_samples(manifest);
    while (auto s = stream.next()) {
        const EstimatePair est = estimate_pair(*s, config.estimator);
        const SceneFlowField inv = config.model.inverter == InverterMode::learned ? invert(inverter, est.bw)
                                                                                  : constant_linear_invert(est.bw);
        const FusionWeights w = predict_weights(fusion, est.fw, inv);
        const SceneFlowField fused = weighted_average(est.fw, inv, w);
        write_field(config.out / "fw", s->id, est.fw);
        write_field(config.out / "inv", s->id, inv);
        write_field(config.out / "fused", s->id, fused);
        write_png(config.out / "occlusion" / (s->id + ".png"), occlusion_map_image(occlusion_map(w)));
        if (config.model.oracle) {
            const OracleFusion oracle = oracle_fuse(est.fw, inv, s->gt_forward, s->valid_fw);
            write_field(config.out / "oracle", s->id, oracle.fused);
            write_mask_png(config.out / "oracle_selection" / (s->id + ".png"), oracle.selection);
        }
        ids.push_back(s->id);
    }
    log << "fused samples: " << ids.size() << "\n";
}

void cmd_eval(const RunConfig& config, std::ostream& log) {
    config.validate();
    if (!config.eval.report.empty()) {
        if (!config.eval.reconstruct_occ) throw InvalidArgument("eval: a report file needs --reconstruct-occ");
        const EvalReport report = EvalReport::parse(read_file_bytes(config.eval.report));
        log << occ_reconstruction_text(report, *config.eval.reconstruct_occ);
        return;
    }
    if (config.data.dataset.empty()) throw InvalidArgument("eval: no dataset manifest configured");
    if (config.eval.estimates.empty()) throw InvalidArgument("eval: no estimates directory configured");
    const DatasetManifest manifest = load_manifest(config.data.dataset);
    prepare_out(config);
    fs::create_directories(config.out / "reports");
    fs::create_directories(config.out / "error_maps");
    if (config.eval.flow_images) fs::create_directories(config.out / "flow");

    std::vector<EvalReport> reports;
    SampleStream stream = iterate_samples(manifest);
    while (auto s = stream.next()) {
        LoadedField loaded;
        try {
            loaded = read_scene_flow(config.eval.estimates, s->id, Direction::forward);
        } catch (const DataError& e) {
            throw DataError("eval: missing estimate for sample '" + s->id + "': " + e.what());
        }
        const SceneFlowField est = with_gaps(loaded);
        const EvalReport report = evaluate(est, s->gt_forward, s->valid_fw, s->noc_fw);
        write_file_bytes(config.out / "reports" / (s->id + ".txt"), report.to_text());
        write_png(config.out / "error_maps" / (s->id + ".png"),
                  error_map_image(scene_flow_outlier_map(est, s->gt_forward, s->valid_fw), s->valid_fw));
        if (config.eval.flow_images) write_flow_image(config.out / "flow", s->id, est);
        reports.push_back(report);
    }
    const EvalReport total = aggregate(reports);
    write_file_bytes(config.out / "report.txt", total.to_text());
    log << "samples: " << reports.size() << "\n" << report_table(total);
    if (config.eval.reconstruct_occ) {
        const std::string text = occ_reconstruction_text(total, *config.eval.reconstruct_occ);
        write_file_bytes(config.out / "report_occ_reconstructed.txt", text);
        log << text;
    }
}

}  // namespace dtf::cli
