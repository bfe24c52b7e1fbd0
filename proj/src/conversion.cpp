#include "g2sim/conversion.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "g2sim/errors.hpp"
#include "g2sim/log.hpp"
#include "g2sim/rng.hpp"

namespace g2sim {

namespace {

// Root of sinc^2(pi x) = 1/2.
constexpr double kSincHalfMax = 0.44294647068945237;

double clamp_efficiency(double eta) {
    if (eta > 1.0) {
        warn("conversion efficiency " + std::to_string(eta) + " exceeds 1; clamped");
        return 1.0;
    }
    return eta < 0.0 ? 0.0 : eta;
}

}  // namespace

void validate_conversion(const ConversionParams& p) {
    if (!(p.eta_slope > 0.0)) throw InvalidArgument("eta_slope must be positive");
    if (!(p.device_slope <= p.eta_slope)) throw InvalidArgument("device_slope must not exceed eta_slope");
    if (!(p.device_slope >= 0.0)) throw InvalidArgument("device_slope must be non-negative");
    if (!(p.lambda_fwhm > 0.0)) throw InvalidArgument("lambda_fwhm must be positive");
    if (!(p.temp_fwhm > 0.0)) throw InvalidArgument("temp_fwhm must be positive");
    if (!(p.lambda_center > 0.0) || !(p.pump_lambda > 0.0)) throw InvalidArgument("wavelengths must be positive");
}

void validate_uspdc(const UspdcParams& p) {
    if (!(p.ref_rate >= 0.0)) throw InvalidArgument("ref_rate must be non-negative");
    if (!(p.ref_power > 0.0)) throw InvalidArgument("ref_power must be positive");
    if (!(p.spectrum_fwhm > 0.0)) throw InvalidArgument("spectrum_fwhm must be positive");
}

void validate_filter(const FilterSpec& f) {
    if (!(f.fwhm > 0.0)) throw InvalidArgument("filter fwhm must be positive");
    if (!(f.peak_transmission > 0.0 && f.peak_transmission <= 1.0)) {
        throw InvalidArgument("peak_transmission must lie in (0, 1]");
    }
    if (!(f.background_suppression >= 1.0)) throw InvalidArgument("background_suppression must be >= 1");
}

double sum_frequency(double lambda_in, double lambda_pump) {
    if (!(lambda_in > 0.0) || !(lambda_pump > 0.0)) throw InvalidArgument("wavelengths must be positive");
    return 1.0 / (1.0 / lambda_in + 1.0 / lambda_pump);
}

double sinc2_acceptance(double detuning, double fwhm) noexcept {
    const double x = std::numbers::pi * 2.0 * kSincHalfMax * detuning / fwhm;
    if (std::fabs(x) < 1e-8) return 1.0;
    const double s = std::sin(x) / x;
    return s * s;
}

double efficiency(const ConversionParams& p, double pump_power_w, double lambda_in, double temp_k) {
    if (!(pump_power_w >= 0.0)) throw InvalidArgument("pump power must be non-negative");
    return clamp_efficiency(p.eta_slope * pump_power_w * sinc2_acceptance(lambda_in - p.lambda_center, p.lambda_fwhm) *
                            sinc2_acceptance(temp_k - p.temp_center, p.temp_fwhm));
}

double device_efficiency(const ConversionParams& p, double pump_power_w, double lambda_in, double temp_k) {
    if (!(pump_power_w >= 0.0)) throw InvalidArgument("pump power must be non-negative");
    return clamp_efficiency(p.device_slope * pump_power_w *
                            sinc2_acceptance(lambda_in - p.lambda_center, p.lambda_fwhm) *
                            sinc2_acceptance(temp_k - p.temp_center, p.temp_fwhm));
}

TagStream convert_stream(const TagStream& stream, double eta_total, std::uint64_t seed) {
    if (!(eta_total >= 0.0 && eta_total <= 1.0)) throw InvalidArgument("eta_total must lie in [0, 1]");
    TagStream out;
    out.duration = stream.duration;
    out.origin_label = stream.origin_label;
    if (eta_total >= 1.0) {
        out.times = stream.times;
        out.channels = stream.channels;
        return out;
    }
    if (eta_total <= 0.0) return out;
    out.reserve(static_cast<std::size_t>(static_cast<double>(stream.size()) * eta_total * 1.05) + 16);
    Rng rng(derive_seed(seed, rng_stream::kConversion));
    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (rng.bernoulli(eta_total)) out.push_back(stream.times[i], stream.channels[i]);
    }
    return out;
}

double uspdc_rate(const UspdcParams& p, double pump_power_w, const std::optional<FilterSpec>& filter) {
    if (!(pump_power_w >= 0.0)) throw InvalidArgument("pump power must be non-negative");
    const double x = pump_power_w / p.ref_power;
    const double generated = p.ref_rate * x * x;
    return filter ? generated / filter->background_suppression : generated;
}

double filtered_signal_rate(double rate, const FilterSpec& filter) noexcept { return rate * filter.peak_transmission; }

TagStream gen_uspdc_stream(double rate, Picoseconds duration, std::uint64_t seed) {
    if (!(rate >= 0.0)) throw InvalidArgument("USPDC rate must be non-negative");
    if (duration <= 0) throw InvalidArgument("duration must be positive");
    TagStream s;
    s.duration = duration;
    s.origin_label = "uspdc";
    Rng rng(derive_seed(seed, rng_stream::kUspdc));
    append_poisson(s, rate, duration, rng);
    return s;
}

double spectral_overlap(const FilterSpec& filter, double spectrum_center, double spectrum_fwhm) {
    if (!(filter.fwhm > 0.0) || !(spectrum_fwhm > 0.0)) throw InvalidArgument("widths must be positive");
    const double sigma = spectrum_fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    const double lo = (filter.center - 0.5 * filter.fwhm - spectrum_center) / (sigma * std::numbers::sqrt2);
    const double hi = (filter.center + 0.5 * filter.fwhm - spectrum_center) / (sigma * std::numbers::sqrt2);
    return filter.peak_transmission * 0.5 * (std::erf(hi) - std::erf(lo));
}

}  // namespace g2sim
