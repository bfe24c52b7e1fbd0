#pragma once

// Command implementations behind the CLI. Every command writes its outputs
// into a directory together with a write-once manifest.json recording the
// config snapshot, RNG algorithm and seed, software version, file digests
// and wall-clock times. Outputs written before a failure are removed.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "g2sim/analysis.hpp"
#include "g2sim/budget.hpp"
#include "g2sim/config.hpp"
#include "g2sim/pipeline.hpp"

namespace g2sim {

inline constexpr const char* kSoftwareVersion = "g2sim 1.0.0";

struct SimulateOptions {
    // Also write converted, background and detector streams (literal stages).
    bool all_stages = false;
    unsigned threads = 1;
};

// source.ttg (+ signal.ttg, background.ttg, det1.ttg, det2.ttg). Resumes from
// a checkpoint left by an interrupted run with the same config.
void cmd_simulate(const PipelineConfig& cfg, const std::filesystem::path& out_dir, const SimulateOptions& options = {});

// Coupler, conversion and filter thinning of a tag file, merged with USPDC background: converted.ttg.
void cmd_convert(const PipelineConfig& cfg, const std::filesystem::path& input, const std::filesystem::path& out_dir);

// Splitter and both detectors: det1.ttg (channel 1), det2.ttg (channel 2).
void cmd_detect(const PipelineConfig& cfg, const std::filesystem::path& input, const std::filesystem::path& out_dir);

// histogram.csv and histogram.meta.json.
Histogram cmd_correlate(const CorrelationConfig& cfg, const std::filesystem::path& file1,
                        const std::filesystem::path& file2, const std::filesystem::path& out_dir, unsigned threads = 1);

// fit.json. eq2 requires sigma and t0.
FitResult cmd_fit(const std::filesystem::path& histogram_csv, FitModel model, std::optional<double> sigma,
                  std::optional<double> t0, Picoseconds exclusion_halfwidth, const std::filesystem::path& out_dir);

// budget.csv; `powers` overrides cfg.power_sweep.
std::vector<RateBudget> cmd_budget(const PipelineConfig& cfg, const std::vector<double>& powers,
                                   const std::filesystem::path& out_dir);

// histogram.csv, histogram.meta.json, fit.json (when a source is configured), budget.json.
PipelineReport cmd_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir, const RunOptions& options = {});

std::string fit_result_json(const FitResult& r, int indent = 2);

}  // namespace g2sim
