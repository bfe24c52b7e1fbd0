#include "g2sim/photon_source.hpp"

#include <cmath>
#include <string>

#include "g2sim/errors.hpp"

namespace g2sim {

namespace {

Picoseconds round_ps(double x) { return static_cast<Picoseconds>(std::llround(x)); }

}  // namespace

double refill_rate_for(double rate, double tau_rad_ps) {
    if (!(rate > 0.0)) throw InvalidArgument("source rate must be positive");
    if (!(tau_rad_ps > 0.0)) throw InvalidArgument("tau_rad must be positive");
    const double period_s = 1.0 / rate;
    const double denom = period_s - tau_rad_ps / kPsPerSecond;
    if (!(denom > 0.0)) {
        throw InvalidArgument("source rate " + std::to_string(rate) + "/s is unreachable with tau_rad " +
                              std::to_string(tau_rad_ps) + " ps (refill rate would be non-positive)");
    }
    const double r = 1.0 / denom;
    const double gamma = kPsPerSecond / tau_rad_ps;
    if (r > 1e3 * gamma) throw InvalidArgument("required refill rate exceeds 10^3 / tau_rad");
    return r;
}

double emitter_lifetime(const EmitterParams& p) {
    return 1.0 / (1.0 / p.tau_rad + p.reexcite_rate / kPsPerSecond);
}

double tau_rad_for_lifetime(double tau0_ps, double rate) {
    if (!(tau0_ps > 0.0) || !(rate > 0.0)) throw InvalidArgument("lifetime and rate must be positive");
    // 1/tau0 = 1/tau_rad + 1/(P - tau_rad) with P the mean period in ps.
    const double period = kPsPerSecond / rate;
    const double disc = period * period - 4.0 * period * tau0_ps;
    if (disc < 0.0) throw InvalidArgument("lifetime too long for the requested rate");
    return 2.0 * period * tau0_ps / (period + std::sqrt(disc));
}

double emitter_contrast(const EmitterParams& p) noexcept {
    const double s = 1.0 - p.background_fraction;
    return s * s;
}

double background_fraction_for_contrast(double a) {
    if (!(a > 0.0) || a > 1.0) throw InvalidArgument("contrast must lie in (0, 1]");
    return 1.0 - std::sqrt(a);
}

EmitterParams make_emitter(double rate, double tau_rad_ps, double wavelength_nm, double background_fraction) {
    if (!(background_fraction >= 0.0 && background_fraction < 1.0)) {
        throw InvalidArgument("background_fraction must lie in [0, 1)");
    }
    EmitterParams p;
    p.tau_rad = tau_rad_ps;
    p.reexcite_rate = refill_rate_for(rate, tau_rad_ps);
    p.wavelength = wavelength_nm;
    p.background_fraction = background_fraction;
    return p;
}

void validate_source(const SourceSpec& spec) {
    if (!(spec.rate > 0.0)) throw InvalidArgument("source rate must be positive");
    if (spec.duration <= 0) throw InvalidArgument("source duration must be positive");
    if (spec.kind == SourceKind::QuantumDot) {
        const auto& p = spec.params;
        if (!(p.tau_rad > 0.0)) throw InvalidArgument("tau_rad must be positive");
        if (!(p.reexcite_rate > 0.0)) throw InvalidArgument("reexcite_rate must be positive");
        if (!(p.background_fraction >= 0.0 && p.background_fraction < 1.0)) {
            throw InvalidArgument("background_fraction must lie in [0, 1)");
        }
        const double r = refill_rate_for(spec.rate, p.tau_rad);
        if (std::fabs(r - p.reexcite_rate) > 1e-6 * r) {
            throw InvalidArgument("reexcite_rate is inconsistent with rate and tau_rad");
        }
    }
}

void append_poisson(TagStream& out, double rate, Picoseconds duration, Rng& rng, std::uint8_t channel) {
    if (!(rate > 0.0)) return;
    const double mean_gap = kPsPerSecond / rate;
    Picoseconds t = 0;
    for (;;) {
        t += round_ps(rng.exponential(mean_gap));
        if (t > duration) break;
        out.push_back(t, channel);
    }
}

TagStream gen_coherent_stream(double rate, Picoseconds duration, std::uint64_t seed) {
    if (!(rate > 0.0)) throw InvalidArgument("coherent source rate must be positive");
    if (duration <= 0) throw InvalidArgument("duration must be positive");
    TagStream s;
    s.duration = duration;
    s.origin_label = "coherent";
    s.reserve(static_cast<std::size_t>(rate * static_cast<double>(duration) / kPsPerSecond * 1.01) + 16);
    Rng rng(derive_seed(seed, rng_stream::kSource));
    append_poisson(s, rate, duration, rng);
    return s;
}

namespace {

TagStream qd_stream_impl(const SourceSpec& spec, double keep) {
    validate_source(spec);
    if (spec.kind != SourceKind::QuantumDot) throw InvalidArgument("quantum-dot generator needs a quantum_dot spec");
    if (!(keep >= 0.0 && keep <= 1.0)) throw InvalidArgument("retention probability must lie in [0, 1]");

    const auto& p = spec.params;
    const double refill_mean = kPsPerSecond / p.reexcite_rate;
    const double signal_keep = keep * (1.0 - p.background_fraction);

    TagStream signal;
    signal.duration = spec.duration;
    const double expected = spec.rate * static_cast<double>(spec.duration) / kPsPerSecond;
    signal.reserve(static_cast<std::size_t>(expected * signal_keep * 1.01) + 16);

    Rng rng(derive_seed(spec.seed, rng_stream::kSource));
    Picoseconds t = 0;
    if (keep >= 1.0) {
        // Literal renewal process: one refill and one radiative wait per photon.
        for (;;) {
            t += round_ps(rng.exponential(refill_mean)) + round_ps(rng.exponential(p.tau_rad));
            if (t > spec.duration) break;
            if (p.background_fraction == 0.0 || !rng.bernoulli(p.background_fraction)) signal.push_back(t, 0);
        }
    } else if (signal_keep > 0.0) {
        for (;;) {
            const auto k = static_cast<double>(rng.geometric(signal_keep));
            t += round_ps(rng.gamma(k, refill_mean)) + round_ps(rng.gamma(k, p.tau_rad));
            if (t > spec.duration || t < 0) break;
            signal.push_back(t, 0);
        }
    }

    TagStream background;
    background.duration = spec.duration;
    Rng bg_rng(derive_seed(spec.seed, rng_stream::kSourceBackground));
    append_poisson(background, spec.rate * p.background_fraction * keep, spec.duration, bg_rng);

    TagStream out = background.empty() ? std::move(signal) : merge_streams(signal, background);
    out.duration = spec.duration;
    out.origin_label = "quantum dot";
    return out;
}

}  // namespace

TagStream gen_qd_stream(const SourceSpec& spec) { return qd_stream_impl(spec, 1.0); }

TagStream gen_thinned_qd_stream(const SourceSpec& spec, double keep) { return qd_stream_impl(spec, keep); }

double theoretical_g2(double a, double tau0, double t0, double tau) noexcept {
    return 1.0 - a * std::exp(-std::fabs(tau - t0) / tau0);
}

}  // namespace g2sim
