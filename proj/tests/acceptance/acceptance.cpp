// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/core.h>

#include "g2sim/analysis.hpp"
#include "g2sim/budget.hpp"
#include "g2sim/config.hpp"
#include "g2sim/conversion.hpp"
#include "g2sim/correlation.hpp"
#include "g2sim/detection.hpp"
#include "g2sim/photon_source.hpp"
#include "g2sim/pipeline.hpp"
#include "g2sim/rng.hpp"

using namespace g2sim;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = G2SIM_CONFIG_DIR;
constexpr Picoseconds kHour = 3'600'000'000'000'000;

struct Outcome {
    bool pass = false;
    std::string detail;
};

PipelineConfig config_for(const char* name, Picoseconds duration) {
    auto c = load_config(kConfigs / name);
    c.duration = duration;
    c.source.duration = duration;
    return c;
}

RunOptions all_threads() {
    RunOptions o;
    o.threads = 0;
    return o;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

Outcome coherent_control() {
    const auto c = config_for("coherent_control.json", kHour);
    const auto r = run_pipeline(c, all_threads());
    const auto& h = r.histogram;
    const double t = h.meta.integration_time_s;
    const double mean = expected_flat(*h.meta.rate1, *h.meta.rate2, static_cast<double>(h.config.bin_width), t);
    std::size_t outside = 0;
    for (auto k : h.counts)
        if (std::abs(static_cast<double>(k) - mean) > 5 * std::sqrt(mean)) ++outside;
    const auto fit = fit_dip(h);
    return {outside == 0 && fit.a < 0.02,
            fmt::format("flat {:.1f}/bin, {} bins outside 5 sigma, fitted a = {:.4f} +- {:.4f}", mean, outside, fit.a,
                        fit.a_err)};
}

Outcome direct_qd() {
    const auto c = load_config(kConfigs / "qd_direct_2mw.json");
    const auto r = run_pipeline(c, all_threads());
    const auto fit = fit_dip(r.histogram);
    const bool ok = fit.g2_at_dip >= 0.006 && fit.g2_at_dip <= 0.026 && std::abs(fit.tau0 - 357.0) <= 0.05 * 357.0;
    return {ok, fmt::format("g2(t0) = {:.4f} +- {:.4f}, tau0 = {:.1f} +- {:.1f} ps", fit.g2_at_dip, fit.a_err, fit.tau0,
                            fit.tau0_err)};
}

struct Converted {
    FitResult fit;
    double corrected = 0.0;
};

Converted converted_run(const char* name) {
    const auto full = load_config(kConfigs / name);
    const auto c = config_for(name, full.duration / 10);
    const auto r = run_pipeline(c, all_threads());
    Converted out;
    out.fit = fit_convolved_dip(r.histogram, 213.0, -167.0);
    out.corrected = background_corrected_g2(out.fit.g2_at_dip, r.expected.coincidences);
    return out;
}

Outcome converted_2mw() {
    const auto r = converted_run("converted_2mw.json");
    const bool ok = std::abs(r.fit.g2_at_dip - 0.31) <= 0.12 && r.corrected <= 0.19;
    return {ok, fmt::format("raw {:.3f} +- {:.3f}, corrected {:.3f}, tau0 = {:.0f} ps", r.fit.g2_at_dip, r.fit.a_err,
                            r.corrected, r.fit.tau0)};
}

Outcome converted_3p2mw() {
    const auto r = converted_run("converted_3p2mw.json");
    const bool ok = std::abs(r.fit.g2_at_dip - 0.43) <= 0.13 && std::abs(r.corrected - 0.22) <= 0.15;
    return {ok, fmt::format("raw {:.3f} +- {:.3f}, corrected {:.3f}, tau0 = {:.0f} ps", r.fit.g2_at_dip, r.fit.a_err,
                            r.corrected, r.fit.tau0)};
}

Outcome coincidence_budget() {
    const auto c = load_config(kConfigs / "converted_2mw.json");
    const auto b = decompose_coincidences(rate_budget(c, c.pump_power).coincidences.rates);
    const double control = expected_flat(380, 380, 200, 17 * 3600.0);
    const bool ok = std::abs(b.ss - 65) <= 9 && std::abs(b.sb - 19) <= 4 && std::abs(b.bb - 1.4) <= 0.4 &&
                    std::abs(control - 1.7) <= 0.2;
    return {ok, fmt::format("(ss, sb, bb) = ({:.1f}, {:.1f}, {:.2f}), 17 h control {:.2f}/bin", b.ss, b.sb, b.bb,
                            control)};
}

std::vector<Picoseconds> random_tags(Rng& rng, std::size_t n, Picoseconds span) {
    std::vector<Picoseconds> v(n);
    for (auto& t : v) t = static_cast<Picoseconds>(rng() % static_cast<std::uint64_t>(span));
    std::sort(v.begin(), v.end());
    return v;
}

Outcome oracle_equivalence() {
    Rng rng(derive_seed(909, 1));
    const CorrelationConfig cfg{200, -10'000, 10'000, 3'000};
    std::size_t mismatches = 0, parallel_mismatches = 0, largest = 0;
    for (int pair = 0; pair < 1000; ++pair) {
        const std::size_t n1 = 1 + rng() % 10'000, n2 = 1 + rng() % 10'000;
        const auto span = static_cast<Picoseconds>(1'000'000 + rng() % 1'000'000'000);
        const auto a = random_tags(rng, n1, span), b = random_tags(rng, n2, span);
        largest = std::max({largest, n1, n2});
        const auto h = correlate(a, b, cfg);
        if (h.counts != brute_force_correlate(a, b, cfg).counts) ++mismatches;
        if (pair % 50 == 0 && correlate_parallel(a, b, cfg, 4).counts != h.counts) ++parallel_mismatches;
    }
    Rng big(derive_seed(909, 2));
    const auto a = random_tags(big, 2'000'000, 2'000'000'000'000), b = random_tags(big, 2'000'000, 2'000'000'000'000);
    const auto serial = correlate(a, b, cfg);
    for (unsigned threads : {2u, 3u, 8u})
        if (correlate_parallel(a, b, cfg, threads).counts != serial.counts) ++parallel_mismatches;
    return {mismatches == 0 && parallel_mismatches == 0,
            fmt::format("1000 pairs up to {} tags: {} mismatches vs brute force, {} parallel mismatches", largest,
                        mismatches, parallel_mismatches)};
}

// Direct numerical convolution of the bare dip with a Gaussian, split at the kinks.
double quadrature_g2(double a, double tau0, double t0, double sigma, double tau) {
    if (sigma == 0.0) return theoretical_g2(a, tau0, t0, tau);
    auto f = [&](double s) {
        const double z = (tau - s) / sigma;
        return theoretical_g2(a, tau0, t0, s) * std::exp(-0.5 * z * z) / (sigma * std::sqrt(2 * M_PI));
    };
    const double lo = tau - 12 * sigma, hi = tau + 12 * sigma;
    std::vector<double> cuts{lo};
    if (t0 > lo && t0 < hi) cuts.push_back(t0);
    cuts.push_back(hi);
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        sum += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, cuts[i], cuts[i + 1], 12, 1e-12);
    return sum;
}

Outcome closed_form_convolution() {
    double worst = 0.0, worst_limit = 0.0;
    for (double a : {0.0, 0.3, 0.984, 1.0})
        for (double tau0 : {50.0, 200.0, 357.0, 565.0, 2000.0})
            for (double sigma : {0.0, 1.0, 29.0, 213.0, 500.0})
                for (double t0 : {-167.0, 0.0})
                    for (double tau = -10'000; tau <= 10'000; tau += 125)
                        worst = std::max(worst, std::abs(eval_convolved_g2(a, tau0, t0, sigma, tau) -
                                                         quadrature_g2(a, tau0, t0, sigma, tau)));
    for (double a : {0.3, 0.984})
        for (double tau0 : {50.0, 357.0, 2000.0})
            for (double tau = -10'000; tau <= 10'000; tau += 12.5) {
                const double bare = theoretical_g2(a, tau0, -167.0, tau);
                worst_limit = std::max({worst_limit, std::abs(eval_convolved_g2(a, tau0, -167.0, 0.0, tau) - bare),
                                        std::abs(eval_convolved_g2(a, tau0, -167.0, 1e-6, tau) - bare)});
            }
    return {worst < 1e-9 && worst_limit <= 4 * std::numeric_limits<double>::epsilon(),
            fmt::format("max |closed form - quadrature| = {:.2e}, max |sigma -> 0 - bare dip| = {:.2e}", worst,
                        worst_limit)};
}

Outcome calibration() {
    const auto c = calibrate_instrument(12'500, 50'000'000, HbtConfig{pmt1_defaults(), pmt2_defaults(), 0.5}, 808);
    const bool ok = std::abs(c.sigma - 213) <= 5 && std::abs(c.t0 + 167) <= 5;
    return {ok, fmt::format("sigma = {:.1f} +- {:.1f} ps, t0 = {:.1f} +- {:.1f} ps", c.sigma, c.sigma_err, c.t0,
                            c.t0_err)};
}

Outcome conversion_arithmetic() {
    const ConversionParams p;
    const UspdcParams u;
    const FilterSpec f;
    const double lambda = sum_frequency(853.42, 651.39);
    const double eta = efficiency(p, 1.0, p.lambda_center, p.temp_center);
    const double bg = uspdc_rate(u, 0.150);
    const double signal_factor = filtered_signal_rate(1.0, f);
    const double bg_factor = bg / uspdc_rate(u, 0.150, f);
    const bool ok = std::abs(lambda - 369.41) <= 0.01 && std::abs(eta - 0.0715) < 1e-12 && std::abs(bg - 85e3) < 1e-6 &&
                    std::abs(signal_factor - 0.678) < 1e-12 && std::abs(bg_factor - 30) < 1e-9;
    return {ok, fmt::format("sum frequency {:.4f} nm (target 369.41 +- 0.01), efficiency {:.4f}, USPDC {:.0f}/s, "
                            "filter x{:.3f} signal, /{:.1f} background",
                            lambda, eta, bg, signal_factor, bg_factor)};
}

Outcome streaming_performance() {
    constexpr std::size_t kTags = 100'000'000;
    constexpr double kRate = 1e6;  // per arm
    constexpr Picoseconds kSlice = 1'000'000'000;
    const CorrelationConfig cfg{200, -10'000, 10'000, 3'000};
    StreamingCorrelator sc(cfg);
    Rng r1(derive_seed(1010, 1)), r2(derive_seed(1010, 2));
    const double gap = 1e12 / kRate;
    double next1 = r1.exponential(gap), next2 = r2.exponential(gap), busy = 0;
    std::size_t pushed = 0;
    std::vector<Picoseconds> a, b;
    for (Picoseconds end = kSlice; pushed < kTags; end += kSlice) {
        a.clear();
        b.clear();
        for (; next1 < static_cast<double>(end); next1 += r1.exponential(gap)) a.push_back(static_cast<Picoseconds>(next1));
        for (; next2 < static_cast<double>(end); next2 += r2.exponential(gap)) b.push_back(static_cast<Picoseconds>(next2));
        const auto start = std::chrono::steady_clock::now();
        sc.push1(a);
        sc.push2(b);
        busy += seconds_since(start);
        pushed += a.size() + b.size();
    }
    const auto start = std::chrono::steady_clock::now();
    const auto h = sc.finish();
    busy += seconds_since(start);
    const double rate = static_cast<double>(pushed) / busy;
    const std::size_t bound = 4 * static_cast<std::size_t>(kRate * 1e-12 * static_cast<double>(kSlice));
    return {rate >= 1e7 && sc.peak_buffered() <= bound && h.total() > 0,
            fmt::format("{} tags in {:.2f} s = {:.2e} tags/s, peak buffer {} tags (bound {}), histogram {} bins",
                        pushed, busy, rate, sc.peak_buffered(), bound, h.size())};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"coherent control is flat", coherent_control},
        {"direct QD dip, 2 mW", direct_qd},
        {"converted dip, 2 mW", converted_2mw},
        {"converted dip, 3.2 mW analogue", converted_3p2mw},
        {"coincidence budget", coincidence_budget},
        {"correlator oracle equivalence", oracle_equivalence},
        {"closed-form convolution", closed_form_convolution},
        {"instrument calibration", calibration},
        {"conversion arithmetic", conversion_arithmetic},
        {"streaming correlator throughput", streaming_performance},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, fmt::format("error: {}", e.what())};
        }
        if (!o.pass) ++failed;
        fmt::print("{} {:2d} {}: {} [{:.1f} s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail,
                   seconds_since(start));
        std::fflush(stdout);
    }
    return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
