#pragma once

#include <cstdint>
#include <optional>

#include "g2sim/photon_source.hpp"
#include "g2sim/tags.hpp"

namespace g2sim {

// Sum-frequency conversion stage. Efficiencies are per watt of pump power;
// acceptance curves are sinc^2 profiles parameterized by their FWHM.
struct ConversionParams {
    double eta_slope = 0.0715;      // external efficiency, 1/W
    double device_slope = 0.043;    // including optics and filter losses, 1/W
    double lambda_center = kBiexcitonWavelengthNm;  // nm
    double lambda_fwhm = 0.2;       // nm
    double temp_center = 313.15;    // K
    double temp_fwhm = 1.0;         // K
    double pump_lambda = 651.39;    // nm
};

// Up-converted SPDC background generated by the pump.
struct UspdcParams {
    double ref_rate = 85e3;   // photons/s at ref_power
    double ref_power = 0.150;  // W
    double spectrum_center = 368.84;  // nm
    double spectrum_fwhm = 1.53;      // nm
};

struct FilterSpec {
    double center = 369.5;  // nm
    double fwhm = 0.5;      // nm
    double peak_transmission = 0.678;
    double background_suppression = 30.0;
};

void validate_conversion(const ConversionParams& p);
void validate_uspdc(const UspdcParams& p);
void validate_filter(const FilterSpec& f);

// 1 / (1/lambda_in + 1/lambda_pump), all in nm.
double sum_frequency(double lambda_in, double lambda_pump);

// Normalized sinc^2 acceptance: 1 at zero detuning, 1/2 at +-fwhm/2.
double sinc2_acceptance(double detuning, double fwhm) noexcept;

// eta_slope * P * A(lambda) * A(T), clamped to [0, 1] (warns when clamping).
double efficiency(const ConversionParams& p, double pump_power_w, double lambda_in, double temp_k);

// Same with device_slope in place of eta_slope.
double device_efficiency(const ConversionParams& p, double pump_power_w, double lambda_in, double temp_k);

// Each tag kept independently with probability eta_total; order and timestamps unchanged.
TagStream convert_stream(const TagStream& stream, double eta_total, std::uint64_t seed);

// ref_rate * (P / ref_power)^2, divided by the filter's suppression when given.
double uspdc_rate(const UspdcParams& p, double pump_power_w, const std::optional<FilterSpec>& filter = std::nullopt);

// Converted-signal rate after the narrow-band filter.
double filtered_signal_rate(double rate, const FilterSpec& filter) noexcept;

TagStream gen_uspdc_stream(double rate, Picoseconds duration, std::uint64_t seed);

// peak_transmission times the share of a Gaussian spectrum (center, FWHM)
// falling inside the filter's FWHM window. Diagnostic only.
double spectral_overlap(const FilterSpec& filter, double spectrum_center, double spectrum_fwhm);

}  // namespace g2sim
