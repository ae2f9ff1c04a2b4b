#include "run_config.hpp"

#include <cctype>
#include <charconv>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dtf/checkpoint.hpp"
#include "dtf/error.hpp"

namespace dtf::cli {

namespace pt = boost::property_tree;

std::string_view to_string(InverterMode m) { return m == InverterMode::learned ? "learned" : "constant-linear"; }

InverterMode parse_inverter_mode(std::string_view s) {
    if (s == "learned") return InverterMode::learned;
    if (s == "constant-linear") return InverterMode::constant_linear;
    throw InvalidArgument("unknown inverter mode '" + std::string(s) + "' (expected learned or constant-linear)");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <class T>
T parse_value(std::string_view s, std::string_view key) {
    s = trim(s);
    T v{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw InvalidArgument("config: bad value '" + std::string(s) + "' for " + std::string(key));
    return v;
}

bool parse_bool(std::string_view s, std::string_view key) {
    s = trim(s);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw InvalidArgument("config: bad boolean '" + std::string(s) + "' for " + std::string(key));
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
    std::string name() const { return section + "." + key; }
};

/// Binding of every persisted field; presets are handled separately.
std::vector<Field> fields() {
    std::vector<Field> f;
    auto real = [&](std::string s, std::string k, auto access) {
        const std::string name = s + "." + k;
        f.push_back({s, k, [=](const RunConfig& c) { return format_double(access(const_cast<RunConfig&>(c))); },
                     [=](RunConfig& c, std::string_view v) { access(c) = parse_value<double>(v, name); }});
    };
    auto integer = [&](std::string s, std::string k, auto access) {
        const std::string name = s + "." + k;
        f.push_back({s, k, [=](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); },
                     [=](RunConfig& c, std::string_view v) {
                         access(c) = parse_value<std::remove_reference_t<decltype(access(c))>>(v, name);
                     }});
    };
    auto text = [&](std::string s, std::string k, auto access) {
        f.push_back({s, k, [=](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c))); },
                     [=](RunConfig& c, std::string_view v) { access(c) = std::string(trim(v)); }});
    };
    auto path = [&](std::string s, std::string k, auto access) {
        f.push_back({s, k, [=](const RunConfig& c) { return access(const_cast<RunConfig&>(c)).generic_string(); },
                     [=](RunConfig& c, std::string_view v) { access(c) = std::filesystem::path(std::string(trim(v))); }});
    };
    auto flag = [&](std::string s, std::string k, auto access) {
        const std::string name = s + "." + k;
        f.push_back({s, k, [=](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); },
                     [=](RunConfig& c, std::string_view v) { access(c) = parse_bool(v, name); }});
    };

    integer("run", "seed", [](RunConfig& c) -> auto& { return c.seed; });
    path("run", "out", [](RunConfig& c) -> auto& { return c.out; });

    integer("scene", "count", [](RunConfig& c) -> auto& { return c.generate.count; });
    text("scene", "split", [](RunConfig& c) -> auto& { return c.generate.split; });
#define DTF_SCENE_REAL(name) real("scene", #name, [](RunConfig& c) -> auto& { return c.generate.scene.name; })
#define DTF_SCENE_INT(name) integer("scene", #name, [](RunConfig& c) -> auto& { return c.generate.scene.name; })
    DTF_SCENE_INT(width);
    DTF_SCENE_INT(height);
    DTF_SCENE_REAL(focal);
    DTF_SCENE_REAL(baseline);
    DTF_SCENE_REAL(background_depth_min);
    DTF_SCENE_REAL(background_depth_max);
    DTF_SCENE_INT(objects_min);
    DTF_SCENE_INT(objects_max);
    DTF_SCENE_REAL(object_size_min);
    DTF_SCENE_REAL(object_size_max);
    DTF_SCENE_REAL(object_depth_min);
    DTF_SCENE_REAL(object_depth_max);
    DTF_SCENE_REAL(lateral_speed_min);
    DTF_SCENE_REAL(lateral_speed_max);
    DTF_SCENE_REAL(vertical_speed_max);
    DTF_SCENE_REAL(depth_speed_max);
    DTF_SCENE_REAL(accel_gain_min);
    DTF_SCENE_REAL(accel_gain_max);
    DTF_SCENE_REAL(accel_sigma);
    DTF_SCENE_REAL(camera_forward_min);
    DTF_SCENE_REAL(camera_forward_max);
    DTF_SCENE_REAL(camera_yaw_max);
#undef DTF_SCENE_REAL
#undef DTF_SCENE_INT

    path("data", "train", [](RunConfig& c) -> auto& { return c.data.train; });
    path("data", "validation", [](RunConfig& c) -> auto& { return c.data.validation; });
    path("data", "dataset", [](RunConfig& c) -> auto& { return c.data.dataset; });

    f.push_back({"estimator", "kind", [](const RunConfig& c) { return std::string(to_string(c.estimator.kind)); },
                 [](RunConfig& c, std::string_view v) { c.estimator.kind = parse_estimator_kind(trim(v)); }});
    real("estimator", "sigma_flow", [](RunConfig& c) -> auto& { return c.estimator.sigma_flow; });
    real("estimator", "sigma_disp", [](RunConfig& c) -> auto& { return c.estimator.sigma_disp; });
    real("estimator", "noise_length", [](RunConfig& c) -> auto& { return c.estimator.noise_length; });
    f.push_back({"estimator", "occ_corruption",
                 [](const RunConfig& c) { return std::string(to_string(c.estimator.occ_corruption)); },
                 [](RunConfig& c, std::string_view v) { c.estimator.occ_corruption = parse_occlusion_corruption(trim(v)); }});
    real("estimator", "occ_sigma", [](RunConfig& c) -> auto& { return c.estimator.occ_sigma; });
    integer("estimator", "seed", [](RunConfig& c) -> auto& { return c.estimator.seed; });
    path("estimator", "external_root", [](RunConfig& c) -> auto& { return c.estimator.external_root; });

    f.push_back({"model", "variant", [](const RunConfig& c) { return std::string(to_string(c.model.variant)); },
                 [](RunConfig& c, std::string_view v) { c.model.variant = parse_fusion_variant(trim(v)); }});
    f.push_back({"model", "inverter", [](const RunConfig& c) { return std::string(to_string(c.model.inverter)); },
                 [](RunConfig& c, std::string_view v) { c.model.inverter = parse_inverter_mode(trim(v)); }});
    path("model", "inverter_checkpoint", [](RunConfig& c) -> auto& { return c.model.inverter_checkpoint; });
    path("model", "fusion_checkpoint", [](RunConfig& c) -> auto& { return c.model.fusion_checkpoint; });
    flag("model", "oracle", [](RunConfig& c) -> auto& { return c.model.oracle; });

    integer("schedule", "epochs", [](RunConfig& c) -> auto& { return c.train.schedule.epochs; });
    integer("schedule", "batch_size", [](RunConfig& c) -> auto& { return c.train.schedule.batch_size; });
    f.push_back({"schedule", "lr_stages", [](const RunConfig& c) { return format_lr_stages(c.train.schedule.lr_stages); },
                 [](RunConfig& c, std::string_view v) { c.train.schedule.lr_stages = parse_lr_stages(v); }});
    real("schedule", "beta1", [](RunConfig& c) -> auto& { return c.train.schedule.beta1; });
    real("schedule", "beta2", [](RunConfig& c) -> auto& { return c.train.schedule.beta2; });
    real("schedule", "adam_epsilon", [](RunConfig& c) -> auto& { return c.train.schedule.adam_epsilon; });
    integer("schedule", "seed", [](RunConfig& c) -> auto& { return c.train.schedule.seed; });
    flag("schedule", "resume", [](RunConfig& c) -> auto& { return c.train.resume; });
    integer("schedule", "stop_after_epoch", [](RunConfig& c) -> auto& { return c.train.stop_after_epoch; });

    real("loss", "epsilon", [](RunConfig& c) -> auto& { return c.train.loss.epsilon; });
    real("loss", "exponent", [](RunConfig& c) -> auto& { return c.train.loss.exponent; });

    path("eval", "estimates", [](RunConfig& c) -> auto& { return c.eval.estimates; });
    path("eval", "report", [](RunConfig& c) -> auto& { return c.eval.report; });
    f.push_back({"eval", "reconstruct_occ",
                 [](const RunConfig& c) { return c.eval.reconstruct_occ ? format_double(*c.eval.reconstruct_occ) : std::string(); },
                 [](RunConfig& c, std::string_view v) {
                     v = trim(v);
                     if (v.empty()) c.eval.reconstruct_occ.reset();
                     else c.eval.reconstruct_occ = parse_ratio_flag(v);
                 }});
    flag("eval", "flow_images", [](RunConfig& c) -> auto& { return c.eval.flow_images; });
    return f;
}

}  // namespace

std::string format_lr_stages(const std::vector<LrStage>& stages) {
    std::string out;
    for (const auto& s : stages) {
        if (!out.empty()) out += ", ";
        out += std::to_string(s.start_epoch) + ":" + format_double(s.rate);
    }
    return out;
}

std::vector<LrStage> parse_lr_stages(std::string_view s) {
    std::vector<LrStage> stages;
    while (!trim(s).empty()) {
        const auto comma = s.find(',');
        const std::string_view item = trim(s.substr(0, comma));
        const auto colon = item.find(':');
        if (colon == std::string_view::npos)
            throw InvalidArgument("config: learning-rate stage '" + std::string(item) + "' must be EPOCH:RATE");
        stages.push_back({parse_value<int>(item.substr(0, colon), "schedule.lr_stages"),
                          parse_value<double>(item.substr(colon + 1), "schedule.lr_stages")});
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return stages;
}

double parse_ratio_flag(std::string_view s) {
    s = trim(s);
    if (s.starts_with("ratio=")) s.remove_prefix(6);
    const double r = parse_value<double>(s, "reconstruct-occ ratio");
    NocRatio check(r);  // validates 0 < r < 1
    return check.value();
}

void RunConfig::validate() const {
    generate.scene.validate();
    if (generate.count < 1) throw InvalidArgument("config: scene.count must be at least 1");
    if (generate.split != "train" && generate.split != "val" && generate.split != "test")
        throw InvalidArgument("config: scene.split must be train, val or test");
    estimator.validate();
    train.schedule.validate();
    train.loss.validate();
    if (eval.reconstruct_occ) NocRatio check(*eval.reconstruct_occ);
}

std::string to_text(const RunConfig& config) {
    pt::ptree tree;
    for (const auto& f : fields()) {
        // Presets lead their sections: they are applied before the explicit keys.
        if (f.name() == "scene.count") tree.put("scene.preset", config.generate.preset);
        if (f.name() == "schedule.epochs") tree.put("schedule.preset", config.train.preset);
        tree.put(pt::ptree::path_type(f.name(), '.'), f.get(config));
    }
    std::ostringstream out;
    out << "; dtf run configuration\n";
    pt::write_ini(out, tree);
    return out.str();
}

RunConfig parse_run_config(std::string_view text) {
    pt::ptree tree;
    try {
        std::istringstream in{std::string(text)};
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }

    const auto table = fields();
    std::set<std::string> known{"scene.preset", "schedule.preset"};
    for (const auto& f : table) known.insert(f.name());
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw InvalidArgument("config: key '" + section + "' outside a section");
        for (const auto& [key, value] : body) {
            if (!known.count(section + "." + key)) throw InvalidArgument("config: unknown key '" + section + "." + key + "'");
        }
    }

    RunConfig c;
    if (auto p = tree.get_optional<std::string>("scene.preset")) {
        c.generate.preset = std::string(trim(*p));
        c.generate.scene = scene_preset(c.generate.preset);
    }
    if (auto p = tree.get_optional<std::string>("schedule.preset")) {
        c.train.preset = std::string(trim(*p));
        c.train.schedule = schedule_preset(c.train.preset);
    }
    bool schedule_seed = false, estimator_seed = false;
    for (const auto& f : table) {
        const auto v = tree.get_optional<std::string>(pt::ptree::path_type(f.name(), '.'));
        if (!v) continue;
        f.set(c, *v);
        schedule_seed |= f.name() == "schedule.seed";
        estimator_seed |= f.name() == "estimator.seed";
    }
    if (!schedule_seed) c.train.schedule.seed = c.seed;
    if (!estimator_seed) c.estimator.seed = c.seed;
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InvalidArgument("config file not found: " + path.string());
    return parse_run_config(read_file_bytes(path));
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
    write_file_bytes(path, to_text(config));
}

}  // namespace dtf::cli
