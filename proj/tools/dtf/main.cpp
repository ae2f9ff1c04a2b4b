#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "dtf/error.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> variant;
    std::optional<std::string> inverter;
    bool oracle = false;
    std::optional<std::string> reconstruct_occ;
    std::optional<std::string> train, validation, dataset, estimates, report;
    std::optional<std::string> inverter_checkpoint, fusion_checkpoint;
    std::optional<std::string> schedule_preset;
    std::optional<int> count;
    bool resume = false;
    std::optional<int> stop_after_epoch;
    bool flow_images = false;
};

void add_flags(CLI::App& cmd, Flags& f) {
    cmd.add_option("--config", f.config, "Run configuration file (INI)");
    cmd.add_option("--seed", f.seed, "Global seed (also seeds training and the estimator)");
    cmd.add_option("--out", f.out, "Output directory");
    cmd.add_option("--variant", f.variant, "Fusion variant")->check(CLI::IsMember({"basic", "spatial", "4ch", "spatial-4ch"}));
    cmd.add_option("--inverter", f.inverter, "Inverter")->check(CLI::IsMember({"learned", "constant-linear"}));
    cmd.add_flag("--oracle", f.oracle, "Also emit the ground-truth oracle fusion and its selection mask");
    cmd.add_option("--reconstruct-occ", f.reconstruct_occ, "Recover occ rates from all/noc, e.g. ratio=0.843");
    cmd.add_option("--train", f.train, "Training manifest");
    cmd.add_option("--validation", f.validation, "Validation manifest");
    cmd.add_option("--dataset", f.dataset, "Dataset manifest for fuse/eval");
    cmd.add_option("--estimates", f.estimates, "Directory of estimated forward fields");
    cmd.add_option("--report", f.report, "Existing report file (eval --reconstruct-occ)");
    cmd.add_option("--inverter-checkpoint", f.inverter_checkpoint, "Inverter checkpoint");
    cmd.add_option("--fusion-checkpoint", f.fusion_checkpoint, "Fusion checkpoint");
    cmd.add_option("--schedule", f.schedule_preset, "Schedule preset")
        ->check(CLI::IsMember({"desk", "paper-inverter", "paper-finetune"}));
    cmd.add_option("--count", f.count, "Number of samples to generate");
    cmd.add_flag("--resume", f.resume, "Continue from the training state in the output directory");
    cmd.add_option("--stop-after-epoch", f.stop_after_epoch, "Stop training after this epoch");
    cmd.add_flag("--flow-images", f.flow_images, "Write flow color-wheel renderings");
}

dtf::cli::RunConfig resolve(const Flags& f) {
    using namespace dtf::cli;
    RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    if (f.seed) {
        c.seed = *f.seed;
        c.train.schedule.seed = *f.seed;
        c.estimator.seed = *f.seed;
    }
    if (f.schedule_preset) {
        const auto seed = c.train.schedule.seed;
        c.train.preset = *f.schedule_preset;
        c.train.schedule = dtf::schedule_preset(*f.schedule_preset);
        c.train.schedule.seed = seed;
    }
    if (f.out) c.out = *f.out;
    if (f.variant) c.model.variant = dtf::parse_fusion_variant(*f.variant);
    if (f.inverter) c.model.inverter = parse_inverter_mode(*f.inverter);
    if (f.oracle) c.model.oracle = true;
    if (f.reconstruct_occ) c.eval.reconstruct_occ = parse_ratio_flag(*f.reconstruct_occ);
    if (f.train) c.data.train = *f.train;
    if (f.validation) c.data.validation = *f.validation;
    if (f.dataset) c.data.dataset = *f.dataset;
    if (f.estimates) c.eval.estimates = *f.estimates;
    if (f.report) c.eval.report = *f.report;
    if (f.inverter_checkpoint) c.model.inverter_checkpoint = *f.inverter_checkpoint;
    if (f.fusion_checkpoint) c.model.fusion_checkpoint = *f.fusion_checkpoint;
    if (f.count) c.generate.count = *f.count;
    if (f.resume) c.train.resume = true;
    if (f.stop_after_epoch) c.train.stop_after_epoch = *f.stop_after_epoch;
    if (f.flow_images) c.eval.flow_images = true;
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scene flow fusion with learned temporal inversion"};
    app.require_subcommand(1);
    Flags flags;
    using Command = void (*)(const dtf::cli::RunConfig&, std::ostream&);
    Command selected = nullptr;
    struct Entry {
        const char* name;
        const char* help;
        Command fn;
    };
    const Entry commands[] = {
        {"generate", "Render a synthetic dataset with ground truth and masks", dtf::cli::cmd_generate},
        {"train-inverter", "Pretrain the temporal inverter on ground truth motion", dtf::cli::cmd_train_inverter},
        {"train", "Fine-tune inverter and fusion network jointly", dtf::cli::cmd_train},
        {"fuse", "Write fused estimates and soft occlusion maps", dtf::cli::cmd_fuse},
        {"eval", "Score forward estimates and write reports", dtf::cli::cmd_eval},
    };
    for (const auto& [name, help, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        add_flags(*sub, flags);
        sub->callback([&selected, fn = fn] { selected = fn; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        selected(resolve(flags), std::cout);
        return kOk;
    } catch (const dtf::InvalidArgument& e) {
        std::cerr << "dtf: " << e.what() << "\n";
        return kUsage;
    } catch (const dtf::NumericalError& e) {
        std::cerr << "dtf: numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "dtf: " << e.what() << "\n";
        return kData;
    }
}
