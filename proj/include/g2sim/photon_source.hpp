#pragma once

#include <cstdint>

#include "g2sim/rng.hpp"
#include "g2sim/tags.hpp"

namespace g2sim {

inline constexpr double kBiexcitonWavelengthNm = 853.42;
inline constexpr double kExcitonWavelengthNm = 850.8;

// Quantum-dot emitter model. The emitter is a renewal process: after each
// photon it waits for a refill (rate reexcite_rate) and then decays
// radiatively (mean tau_rad), so the antibunching time is 1/(1/tau_rad + r).
struct EmitterParams {
    double tau_rad = 0.0;              // ps
    double reexcite_rate = 0.0;        // 1/s, derived from the source rate
    double wavelength = kBiexcitonWavelengthNm;  // nm
    double background_fraction = 0.0;  // share of tags replaced by Poisson background
};

enum class SourceKind { QuantumDot, Coherent };

struct SourceSpec {
    SourceKind kind = SourceKind::Coherent;
    double rate = 0.0;  // mean output rate, photons/s
    EmitterParams params;
    Picoseconds duration = 0;
    std::uint64_t seed = 0;
};

// Refill rate r (1/s) that yields the requested mean rate: the mean renewal
// period is 1/r + tau_rad. Throws InvalidArgument for nonphysical settings.
double refill_rate_for(double rate, double tau_rad_ps);

// Antibunching time constant 1/(gamma + r) in ps.
double emitter_lifetime(const EmitterParams& p);

// Radiative time that, combined with the refill rate implied by `rate`,
// gives the requested antibunching time tau0.
double tau_rad_for_lifetime(double tau0_ps, double rate);

// Dip contrast of the emitted stream, a = (1 - background_fraction)^2.
double emitter_contrast(const EmitterParams& p) noexcept;
double background_fraction_for_contrast(double a);

// Fills reexcite_rate from rate and tau_rad, validating both.
EmitterParams make_emitter(double rate, double tau_rad_ps, double wavelength_nm, double background_fraction);

void validate_source(const SourceSpec& spec);

TagStream gen_qd_stream(const SourceSpec& spec);

// Same law as independently thinning gen_qd_stream(spec) with retention
// probability `keep`, sampled directly: a geometric number of renewal
// periods is skipped per retained tag using Gamma-distributed sums.
TagStream gen_thinned_qd_stream(const SourceSpec& spec, double keep);

TagStream gen_coherent_stream(double rate, Picoseconds duration, std::uint64_t seed);

// Homogeneous Poisson arrivals on [0, duration] appended to `out` with the given channel.
void append_poisson(TagStream& out, double rate, Picoseconds duration, Rng& rng, std::uint8_t channel = 0);

// 1 - a exp(-|tau - t0| / tau0).
double theoretical_g2(double a, double tau0, double t0, double tau) noexcept;

}  // namespace g2sim
