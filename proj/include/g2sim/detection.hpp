#pragma once

#include <cstdint>
#include <utility>

#include "g2sim/rng.hpp"
#include "g2sim/tags.hpp"

namespace g2sim {

struct DetectorParams {
    double efficiency = 1.0;     // (0, 1]
    double jitter_sigma = 0.0;   // ps, Gaussian standard deviation
    double dark_rate = 0.0;      // counts/s
    Picoseconds dead_time = 0;   // ps
    Picoseconds delay = 0;       // ps, fixed electronic offset
};

// Hanbury Brown-Twiss arrangement: splitter feeding two detectors.
// tau = t(det2) - t(det1) throughout, so t0 = det2.delay - det1.delay.
struct HbtConfig {
    DetectorParams det1;
    DetectorParams det2;
    double split_ratio = 0.5;  // probability of routing to det1
};

void validate_detector(const DetectorParams& p);
void validate_hbt(const HbtConfig& h);

// Default parameter sets for the IR (SNSPD) and UV (PMT) detection modules.
DetectorParams snspd1_defaults();
DetectorParams snspd2_defaults();
DetectorParams pmt1_defaults();
DetectorParams pmt2_defaults();

// Routes each tag to output 1 with probability `ratio`; outputs carry channels 1 and 2.
std::pair<TagStream, TagStream> hbt_split(const TagStream& stream, double ratio, std::uint64_t seed);

// Thins by efficiency, shifts by delay plus Gaussian jitter, merges dark
// counts, applies non-paralyzable dead time, then drops tags outside [0, duration].
// `stream_id` selects the RNG stream so that two arms sharing a seed stay independent.
TagStream detect(const TagStream& stream, const DetectorParams& params, std::uint64_t seed,
                 std::uint64_t stream_id = rng_stream::kDetector1);

// Removes tags closer than dead_time after the previously accepted tag. Input must be sorted.
void apply_dead_time(TagStream& s, Picoseconds dead_time);

struct InstrumentCalibration {
    double sigma = 0.0;  // ps
    double t0 = 0.0;     // ps
    double sigma_err = 0.0;
    double t0_err = 0.0;
    std::uint64_t peak_coincidences = 0;
};

struct CalibrationOptions {
    double photons_per_pulse = 0.1;  // mean Poisson photon number per pulse; keep low to limit dead-time selection bias
    Picoseconds bin_width = 4;       // must be even so bins centre on tau = 0
};

// Sends a periodic pulse train through the HBT chain, correlates the two
// arms and fits a Gaussian to the coincidence peak nearest tau = 0.
// Throws FitError if no peak is found within +-pulse_period/2.
InstrumentCalibration calibrate_instrument(Picoseconds pulse_period, std::uint64_t pulse_count, const HbtConfig& hbt,
                                           std::uint64_t seed, const CalibrationOptions& options = {});

}  // namespace g2sim
