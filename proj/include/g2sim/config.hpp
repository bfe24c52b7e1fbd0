#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "g2sim/conversion.hpp"
#include "g2sim/correlation.hpp"
#include "g2sim/detection.hpp"
#include "g2sim/photon_source.hpp"

namespace g2sim {

inline constexpr int kConfigSchemaVersion = 1;

struct DetectorPresets {
    DetectorParams snspd1 = snspd1_defaults();
    DetectorParams snspd2 = snspd2_defaults();
    DetectorParams pmt1 = pmt1_defaults();
    DetectorParams pmt2 = pmt2_defaults();
};

enum class FitModel { Eq1, Eq2 };

struct FitSpec {
    FitModel model = FitModel::Eq2;
    double sigma = 213.0;  // ps, eq2 only
    double t0 = -167.0;    // ps, eq2 only
};

struct PipelineConfig {
    // source.rate == 0 disables the source (background-only runs).
    SourceSpec source;
    double coupler_loss = 0.4;
    bool conversion_enabled = true;
    ConversionParams conversion;
    UspdcParams uspdc;
    bool filter_enabled = true;
    FilterSpec filter;
    std::optional<double> temperature;  // K; defaults to conversion.temp_center
    HbtConfig hbt{pmt1_defaults(), pmt2_defaults(), 0.5};
    CorrelationConfig correlation;
    FitSpec fit;
    double pump_power = 0.0;            // W
    double pump_power_rel_sigma = 0.0;  // relative systematic on pump power for the budget
    std::vector<double> power_sweep;    // W, rows of the budget table
    Picoseconds duration = 0;
    Picoseconds segment_duration = 1'000'000'000;
    std::uint64_t seed = 0;
    // Collapses coupler, conversion and filter thinning into the source
    // generator (same law, far fewer variates).
    bool fuse_thinning = true;

    bool has_source() const noexcept { return source.rate > 0.0; }
    double crystal_temperature() const noexcept { return temperature.value_or(conversion.temp_center); }
    double input_wavelength() const noexcept { return source.params.wavelength; }
};

// Parses a config document, or the config snapshot embedded in a run
// manifest. Unknown keys and invariant violations raise ConfigError with
// the dotted field path.
PipelineConfig parse_config(std::string_view json_text);
PipelineConfig load_config(const std::filesystem::path& path);

// Throws ConfigError on the first violated invariant.
void validate_config(const PipelineConfig& cfg);

// Canonical JSON with every field explicit; parse_config(to_json(c)) == c.
std::string config_to_json(const PipelineConfig& cfg, int indent = 2);

}  // namespace g2sim
