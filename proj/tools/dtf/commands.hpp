#pragma once

#include <iosfwd>

#include "run_config.hpp"

namespace dtf::cli {

/// Each command writes its resolved configuration to <out>/run.cfg and
/// reports progress on `log`.
void cmd_generate(const RunConfig& config, std::ostream& log);
void cmd_train_inverter(const RunConfig& config, std::ostream& log);
void cmd_train(const RunConfig& config, std::ostream& log);
void cmd_fuse(const RunConfig& config, std::ostream& log);
void cmd_eval(const RunConfig& config, std::ostream& log);

/// Fixed-width table of the 12 component/region rates.
std::string report_table(const EvalReport& report);

/// Text report of occ rates reconstructed from the all/noc rates of `report`.
std::string occ_reconstruction_text(const EvalReport& report, double ratio);

/// Deterministic per-sample scene seed for `generate`.
std::uint64_t scene_seed(std::uint64_t run_seed, int index);

}  // namespace dtf::cli
