#include "g2sim/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "g2sim/correlation.hpp"
#include "g2sim/errors.hpp"
#include "g2sim/photon_source.hpp"
#include "optimize.hpp"

namespace g2sim {

void validate_detector(const DetectorParams& p) {
    if (!(p.efficiency > 0.0 && p.efficiency <= 1.0)) throw InvalidArgument("efficiency must lie in (0, 1]");
    if (!(p.jitter_sigma >= 0.0)) throw InvalidArgument("jitter_sigma must be non-negative");
    if (!(p.dark_rate >= 0.0)) throw InvalidArgument("dark_rate must be non-negative");
    if (p.dead_time < 0) throw InvalidArgument("dead_time must be non-negative");
}

void validate_hbt(const HbtConfig& h) {
    validate_detector(h.det1);
    validate_detector(h.det2);
    if (!(h.split_ratio > 0.0 && h.split_ratio < 1.0)) throw InvalidArgument("split_ratio must lie in (0, 1)");
}

DetectorParams snspd1_defaults() { return {0.80, 18.0, 50.0, 20'000, 0}; }
DetectorParams snspd2_defaults() { return {0.80, 23.0, 50.0, 20'000, 0}; }
DetectorParams pmt1_defaults() { return {0.36, 150.6, 5.0, 18'000, 167}; }
DetectorParams pmt2_defaults() { return {0.40, 150.6, 20.0, 18'000, 0}; }

std::pair<TagStream, TagStream> hbt_split(const TagStream& stream, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split ratio must lie in (0, 1)");
    TagStream a, b;
    a.duration = b.duration = stream.duration;
    a.origin_label = b.origin_label = stream.origin_label;
    a.reserve(static_cast<std::size_t>(static_cast<double>(stream.size()) * ratio * 1.01) + 16);
    b.reserve(static_cast<std::size_t>(static_cast<double>(stream.size()) * (1.0 - ratio) * 1.01) + 16);
    Rng rng(derive_seed(seed, rng_stream::kSplit));
    for (const Picoseconds t : stream.times) {
        if (rng.bernoulli(ratio)) {
            a.push_back(t, 1);
        } else {
            b.push_back(t, 2);
        }
    }
    return {std::move(a), std::move(b)};
}

void apply_dead_time(TagStream& s, Picoseconds dead_time) {
    if (dead_time <= 0 || s.empty()) return;
    std::size_t w = 0;
    Picoseconds last = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (w == 0 || s.times[i] - last >= dead_time) {
            last = s.times[i];
            s.times[w] = s.times[i];
            s.channels[w] = s.channels[i];
            ++w;
        }
    }
    s.times.resize(w);
    s.channels.resize(w);
}

TagStream detect(const TagStream& stream, const DetectorParams& params, std::uint64_t seed, std::uint64_t stream_id) {
    validate_detector(params);
    Rng rng(derive_seed(seed, stream_id, 0));
    const std::uint8_t channel = stream.empty() ? 0 : stream.channels.front();

    struct Tag {
        Picoseconds t;
        std::uint8_t ch;
    };
    std::vector<Tag> kept;
    kept.reserve(static_cast<std::size_t>(static_cast<double>(stream.size()) * params.efficiency * 1.01) + 16);
    const bool thin = params.efficiency < 1.0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (thin && !rng.bernoulli(params.efficiency)) continue;
        Picoseconds t = stream.times[i] + params.delay;
        if (params.jitter_sigma > 0.0) t += std::llround(params.jitter_sigma * rng.normal());
        kept.push_back({t, stream.channels[i]});
    }
    if (params.dark_rate > 0.0) {
        Rng dark(derive_seed(seed, stream_id, 1));
        TagStream d;
        append_poisson(d, params.dark_rate, stream.duration, dark, channel);
        for (const Picoseconds t : d.times) kept.push_back({t, channel});
    }
    std::stable_sort(kept.begin(), kept.end(), [](const Tag& x, const Tag& y) { return x.t < y.t; });

    TagStream out;
    out.duration = stream.duration;
    out.origin_label = stream.origin_label;
    out.reserve(kept.size());
    for (const auto& k : kept) out.push_back(k.t, k.ch);
    apply_dead_time(out, params.dead_time);

    std::size_t w = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.times[i] < 0 || out.times[i] > out.duration) continue;
        out.times[w] = out.times[i];
        out.channels[w] = out.channels[i];
        ++w;
    }
    out.times.resize(w);
    out.channels.resize(w);
    return out;
}

namespace {

struct Moments {
    double mean = 0.0, var = 0.0, weight = 0.0;
};

Moments window_moments(const Histogram& h, std::size_t lo, std::size_t hi, double baseline) {
    Moments m;
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
        const double c = std::max(0.0, static_cast<double>(h.counts[k]) - baseline);
        const double x = h.config.bin_center(k);
        m.weight += c;
        s1 += c * x;
        s2 += c * x * x;
    }
    if (m.weight > 0.0) {
        m.mean = s1 / m.weight;
        m.var = std::max(0.0, s2 / m.weight - m.mean * m.mean);
    }
    return m;
}

}  // namespace

InstrumentCalibration calibrate_instrument(Picoseconds pulse_period, std::uint64_t pulse_count, const HbtConfig& hbt,
                                           std::uint64_t seed, const CalibrationOptions& options) {
    validate_hbt(hbt);
    if (pulse_period <= 0) throw InvalidArgument("pulse_period must be positive");
    if (pulse_count == 0) throw InvalidArgument("pulse_count must be positive");
    const Picoseconds w = options.bin_width;
    if (w <= 0 || w % 2 != 0) throw InvalidArgument("calibration bin_width must be positive and even");
    if (!(options.photons_per_pulse > 0.0)) throw InvalidArgument("photons_per_pulse must be positive");

    TagStream pulses;
    pulses.duration = pulse_period * static_cast<Picoseconds>(pulse_count + 1);
    pulses.origin_label = "pulse train";
    Rng rng(derive_seed(seed, rng_stream::kPulses));
    for (std::uint64_t k = 1; k <= pulse_count; ++k) {
        const auto n = rng.poisson(options.photons_per_pulse);
        for (std::uint64_t j = 0; j < n; ++j) pulses.push_back(static_cast<Picoseconds>(k) * pulse_period, 0);
    }

    auto [a1, a2] = hbt_split(pulses, hbt.split_ratio, seed);
    const TagStream d1 = detect(a1, hbt.det1, seed, rng_stream::kDetector1);
    const TagStream d2 = detect(a2, hbt.det2, seed, rng_stream::kDetector2);

    // Bins centred on tau = 0 spanning (-period/2, period/2).
    const Picoseconds m = std::max<Picoseconds>(1, (pulse_period / 2 - w / 2) / w);
    CorrelationConfig cfg;
    cfg.bin_width = w;
    cfg.tau_min = -(m * w + w / 2);
    cfg.tau_max = m * w + w / 2;
    cfg.exclusion_halfwidth = 0;
    const Histogram h = correlate(d1.times, d2.times, cfg);

    const auto n = h.size();
    const auto peak = static_cast<std::size_t>(std::max_element(h.counts.begin(), h.counts.end()) - h.counts.begin());
    std::vector<std::uint64_t> sorted(h.counts);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
    const double baseline = static_cast<double>(sorted[n / 2]);
    if (static_cast<double>(h.counts[peak]) < baseline + 5.0 * std::sqrt(baseline + 1.0) + 5.0) {
        throw FitError("no coincidence peak found within +-" + std::to_string(pulse_period / 2) + " ps");
    }

    // Iterated moments on a window that tracks the peak width.
    std::size_t half = std::min<std::size_t>(n / 2, 50);
    Moments mom;
    for (int it = 0; it < 4; ++it) {
        const std::size_t lo = peak > half ? peak - half : 0;
        const std::size_t hi = std::min(n - 1, peak + half);
        mom = window_moments(h, lo, hi, baseline);
        half = static_cast<std::size_t>(std::ceil(6.0 * std::sqrt(mom.var) / static_cast<double>(w))) + 3;
    }

    InstrumentCalibration cal;
    cal.peak_coincidences = h.counts[peak];
    const double wd = static_cast<double>(w);
    if (std::sqrt(mom.var) < 1.5 * wd) {
        // Peak narrower than a few bins: a shape fit is not meaningful.
        cal.t0 = mom.mean;
        cal.sigma = std::sqrt(std::max(0.0, mom.var - wd * wd / 12.0));
        cal.t0_err = std::sqrt(mom.var) / std::sqrt(std::max(mom.weight, 1.0));
        cal.sigma_err = cal.t0_err / std::sqrt(2.0);
        return cal;
    }

    const double sd = std::sqrt(mom.var);
    const std::size_t reach = static_cast<std::size_t>(std::ceil(6.0 * sd / wd));
    const std::size_t lo = peak > reach ? peak - reach : 0;
    const std::size_t hi = std::min(n - 1, peak + reach);
    const double amp0 = mom.weight * wd / (std::sqrt(2.0 * std::numbers::pi) * sd);

    // Weights come from the model rather than the data (Neyman weights bias a
    // low-count peak narrow); they are refreshed once from the first solution.
    std::vector<double> err(hi - lo + 1);
    const auto reweight = [&](std::span<const double> p) {
        for (std::size_t k = lo; k <= hi; ++k) {
            const double x = h.config.bin_center(k) - p[1];
            err[k - lo] = std::sqrt(std::max(p[0] * std::exp(-x * x / (2.0 * p[2] * p[2])) + p[3], 1.0));
        }
    };
    const auto residuals = [&](std::span<const double> p, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
        const auto rows = static_cast<Eigen::Index>(hi - lo + 1);
        r.resize(rows);
        jac.resize(rows, 4);
        for (std::size_t k = lo; k <= hi; ++k) {
            const auto i = static_cast<Eigen::Index>(k - lo);
            const double c = static_cast<double>(h.counts[k]);
            const double e = err[k - lo];
            const double x = h.config.bin_center(k) - p[1];
            const double g = std::exp(-x * x / (2.0 * p[2] * p[2]));
            r(i) = (c - p[0] * g - p[3]) / e;
            jac(i, 0) = -g / e;
            jac(i, 1) = -p[0] * g * x / (p[2] * p[2]) / e;
            jac(i, 2) = -p[0] * g * x * x / (p[2] * p[2] * p[2]) / e;
            jac(i, 3) = -1.0 / e;
        }
    };
    detail::Box box{{0.0, h.config.bin_center(lo), 0.25 * wd, 0.0},
                    {1e3 * amp0 + 10.0, h.config.bin_center(hi), 10.0 * sd, 1e3 * (baseline + 1.0)}};
    std::vector<double> p0{amp0, mom.mean, sd, baseline};
    box.clamp(p0);
    detail::LsqResult res;
    for (int pass = 0; pass < 3; ++pass) {
        reweight(pass == 0 ? std::span<const double>(p0) : std::span<const double>(res.p));
        res = detail::gauss_newton(residuals, pass == 0 ? p0 : res.p, box, 200);
        if (!res.converged) throw FitError("calibration peak fit did not converge");
    }
    cal.t0 = res.p[1];
    cal.sigma = res.p[2];
    cal.t0_err = std::sqrt(std::max(0.0, res.covariance(1, 1)));
    cal.sigma_err = std::sqrt(std::max(0.0, res.covariance(2, 2)));
    return cal;
}

}  // namespace g2sim
