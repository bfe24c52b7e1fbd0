#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>

#include "g2sim/analysis.hpp"
#include "g2sim/budget.hpp"
#include "g2sim/config.hpp"

namespace g2sim {

// A run is cut into segments of cfg.segment_duration. Each segment draws
// from seeds derived from (cfg.seed, segment index), so results do not
// depend on thread count or on where a run was interrupted. Pairs that
// straddle a segment boundary are not counted.
std::uint64_t segment_count(const PipelineConfig& cfg);
Picoseconds segment_start(const PipelineConfig& cfg, std::uint64_t index);
Picoseconds segment_length(const PipelineConfig& cfg, std::uint64_t index);

// Streams of one segment, timestamps relative to the segment start.
struct SegmentStreams {
    TagStream source;      // literal mode only
    TagStream signal;      // converted signal arriving at the splitter
    TagStream background;  // USPDC photons arriving at the splitter
    TagStream det1, det2;  // detector outputs, channels 1 and 2
};

// `literal` runs every thinning stage on the full source stream and keeps
// the intermediate streams; otherwise cfg.fuse_thinning decides.
SegmentStreams simulate_segment(const PipelineConfig& cfg, std::uint64_t index, bool literal = false);

struct RunOptions {
    unsigned threads = 1;  // 0 = hardware concurrency
    // Checkpoint file for resumable runs; empty disables checkpointing.
    std::filesystem::path checkpoint;
    double checkpoint_interval_s = 30.0;
    // Stops after this many segments (leaving a checkpoint); for tests.
    std::optional<std::uint64_t> stop_after;
    std::function<void(std::uint64_t done, std::uint64_t total)> progress;
};

struct PipelineReport {
    Histogram histogram;  // normalized
    std::optional<FitResult> fit;
    std::optional<double> corrected_g2;
    RateBudget expected;
    std::uint64_t singles1 = 0, singles2 = 0;
    std::uint64_t segments = 0;
    bool complete = true;  // false when stopped early by RunOptions::stop_after
};

// Runs source -> coupler -> conversion -> USPDC merge -> splitter ->
// detectors -> correlation, then normalizes, fits and corrects.
// Throws DegenerateDataError when a configured source delivers no signal.
PipelineReport run_pipeline(const PipelineConfig& cfg, const RunOptions& options = {});

}  // namespace g2sim
