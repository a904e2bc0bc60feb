#pragma once

#include "sage/config.hpp"

#include <string>

namespace sage {

// Generates a synthetic sequence into `out_dir` (manifest + per-frame maps).
void cmd_simulate(const RunConfig& cfg, const std::string& out_dir);

// Runs the full pipeline on a sequence directory; writes trajectory.txt,
// per-keyframe depth maps, graph.txt and run_log.txt into `out_dir`.
void cmd_run(const RunConfig& cfg, const std::string& sequence_dir, const std::string& out_dir);

// Evaluates a run directory against a sequence's ground truth; writes the
// metric report (key = value lines) to `report_path` and returns it.
std::string cmd_eval(const RunConfig& cfg, const std::string& estimate_dir,
                     const std::string& sequence_dir, const std::string& report_path);

}  // namespace sage
