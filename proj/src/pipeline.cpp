#include "g2sim/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "json.hpp"

#include "g2sim/digest.hpp"
#include "g2sim/errors.hpp"
#include "g2sim/log.hpp"

namespace g2sim {

namespace {

constexpr std::uint64_t kSegmentStream = 0x5E6;
constexpr std::uint64_t kBatchSegments = 4096;

// Stage probabilities and rates shared by all segments of a run.
struct Plan {
    double keep = 0.0;             // source photon -> splitter
    double coupler_keep = 1.0;
    double eta = 1.0;
    double optics_filter = 1.0;    // after the crystal, including the filter passband
    double background_rate = 0.0;  // at the splitter
};

Plan make_plan(const PipelineConfig& cfg) {
    const RateBudget b = rate_budget(cfg, cfg.pump_power);
    Plan p;
    p.keep = b.signal_keep;
    p.coupler_keep = 1.0 - cfg.coupler_loss;
    if (cfg.conversion_enabled) {
        p.eta = b.eta;
        p.optics_filter = optics_transmission(cfg) * (cfg.filter_enabled ? cfg.filter.peak_transmission : 1.0);
        p.background_rate = b.background_at_splitter;
    }
    return p;
}

SegmentStreams run_segment(const PipelineConfig& cfg, const Plan& plan, std::uint64_t index, bool literal) {
    const std::uint64_t seed = derive_seed(cfg.seed, kSegmentStream, index);
    const Picoseconds len = segment_length(cfg, index);
    SegmentStreams out;
    out.signal.duration = len;
    out.background.duration = len;
    out.source.duration = len;

    if (cfg.has_source()) {
        SourceSpec spec = cfg.source;
        spec.duration = len;
        spec.seed = seed;
        const bool qd = spec.kind == SourceKind::QuantumDot;
        if (!literal && cfg.fuse_thinning) {
            if (qd) {
                out.signal = gen_thinned_qd_stream(spec, plan.keep);
            } else if (spec.rate * plan.keep > 0.0) {
                out.signal = gen_coherent_stream(spec.rate * plan.keep, len, seed);
            }
        } else {
            out.source = qd ? gen_qd_stream(spec) : gen_coherent_stream(spec.rate, len, seed);
            TagStream s = convert_stream(out.source, plan.coupler_keep, derive_seed(seed, rng_stream::kCoupler));
            if (cfg.conversion_enabled) {
                s = convert_stream(s, plan.eta, derive_seed(seed, rng_stream::kConversion));
                s = convert_stream(s, plan.optics_filter, derive_seed(seed, rng_stream::kFilter));
            }
            out.signal = std::move(s);
            if (!literal) out.source = TagStream{{}, {}, len, {}};
        }
        out.signal.duration = len;
    }
    if (plan.background_rate > 0.0) {
        out.background = gen_uspdc_stream(plan.background_rate, len, derive_seed(seed, rng_stream::kUspdc));
    }

    const TagStream merged = out.background.empty() ? out.signal : merge_streams(out.signal, out.background);
    auto [a1, a2] = hbt_split(merged, cfg.hbt.split_ratio, seed);
    out.det1 = detect(a1, cfg.hbt.det1, seed, rng_stream::kDetector1);
    out.det2 = detect(a2, cfg.hbt.det2, seed, rng_stream::kDetector2);
    relabel(out.det1, 1);
    relabel(out.det2, 2);
    return out;
}

struct Accumulator {
    std::vector<std::uint64_t> counts;
    std::uint64_t singles1 = 0, singles2 = 0;

    void add(const SegmentStreams& s, const CorrelationConfig& cc) {
        const Histogram h = correlate(s.det1.times, s.det2.times, cc);
        for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += h.counts[k];
        singles1 += s.det1.size();
        singles2 += s.det2.size();
    }
    void merge(const Accumulator& o) {
        for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += o.counts[k];
        singles1 += o.singles1;
        singles2 += o.singles2;
    }
};

struct Checkpoint {
    std::string digest;
    std::uint64_t next_segment = 0;
    Accumulator acc;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    nlohmann::json j{{"config_digest", c.digest},
                     {"next_segment", c.next_segment},
                     {"counts", c.acc.counts},
                     {"singles1", c.acc.singles1},
                     {"singles2", c.acc.singles2}};
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + tmp.string());
        out << j.dump() << '\n';
        if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::optional<Checkpoint> read_checkpoint(const std::filesystem::path& path, const std::string& digest, std::size_t bins) {
    if (path.empty() || !std::filesystem::exists(path)) return std::nullopt;
    try {
        std::ifstream in(path);
        const auto j = nlohmann::json::parse(in);
        Checkpoint c;
        c.digest = j.at("config_digest").get<std::string>();
        if (c.digest != digest) {
            warn("checkpoint " + path.string() + " belongs to a different configuration; starting over");
            return std::nullopt;
        }
        c.next_segment = j.at("next_segment").get<std::uint64_t>();
        c.acc.counts = j.at("counts").get<std::vector<std::uint64_t>>();
        c.acc.singles1 = j.at("singles1").get<std::uint64_t>();
        c.acc.singles2 = j.at("singles2").get<std::uint64_t>();
        if (c.acc.counts.size() != bins) throw FormatError("checkpoint histogram has the wrong size");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace

std::uint64_t segment_count(const PipelineConfig& cfg) {
    return static_cast<std::uint64_t>((cfg.duration + cfg.segment_duration - 1) / cfg.segment_duration);
}

Picoseconds segment_start(const PipelineConfig& cfg, std::uint64_t index) {
    return static_cast<Picoseconds>(index) * cfg.segment_duration;
}

Picoseconds segment_length(const PipelineConfig& cfg, std::uint64_t index) {
    return std::min(cfg.segment_duration, cfg.duration - segment_start(cfg, index));
}

SegmentStreams simulate_segment(const PipelineConfig& cfg, std::uint64_t index, bool literal) {
    validate_config(cfg);
    if (index >= segment_count(cfg)) throw InvalidArgument("segment index out of range");
    return run_segment(cfg, make_plan(cfg), index, literal);
}

PipelineReport run_pipeline(const PipelineConfig& cfg, const RunOptions& options) {
    validate_config(cfg);
    const Plan plan = make_plan(cfg);
    if (cfg.has_source() && !(plan.keep > 0.0)) {
        throw DegenerateDataError("configured source delivers no signal to the detectors (pump_power = " +
                                  std::to_string(cfg.pump_power) + " W)");
    }

    const std::uint64_t total_segments = segment_count(cfg);
    const std::size_t bins = cfg.correlation.num_bins();
    const std::string digest = sha256_hex(config_to_json(cfg));

    Checkpoint state;
    state.digest = digest;
    state.acc.counts.assign(bins, 0);
    if (auto resumed = read_checkpoint(options.checkpoint, digest, bins)) state = std::move(*resumed);

    unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.threads;
    auto last_save = std::chrono::steady_clock::now();
    std::uint64_t processed_this_call = 0;
    bool stopped = false;

    while (state.next_segment < total_segments) {
        std::uint64_t batch_end = std::min(total_segments, state.next_segment + kBatchSegments);
        if (options.stop_after) {
            const std::uint64_t allowed = *options.stop_after - processed_this_call;
            batch_end = std::min(batch_end, state.next_segment + allowed);
        }
        const std::uint64_t first = state.next_segment;
        const unsigned workers = static_cast<unsigned>(std::min<std::uint64_t>(threads, batch_end - first));
        if (workers <= 1) {
            for (std::uint64_t i = first; i < batch_end; ++i) state.acc.add(run_segment(cfg, plan, i, false), cfg.correlation);
        } else {
            std::vector<Accumulator> partial(workers, Accumulator{std::vector<std::uint64_t>(bins, 0)});
            std::atomic<std::uint64_t> next{first};
            std::exception_ptr failure;
            std::mutex failure_mutex;
            {
                std::vector<std::jthread> pool;
                for (unsigned w = 0; w < workers; ++w) {
                    pool.emplace_back([&, w] {
                        try {
                            for (std::uint64_t i = next++; i < batch_end; i = next++) {
                                partial[w].add(run_segment(cfg, plan, i, false), cfg.correlation);
                            }
                        } catch (...) {
                            std::lock_guard lock(failure_mutex);
                            if (!failure) failure = std::current_exception();
                        }
                    });
                }
            }
            if (failure) std::rethrow_exception(failure);
            for (const auto& p : partial) state.acc.merge(p);
        }
        processed_this_call += batch_end - first;
        state.next_segment = batch_end;
        if (options.progress) options.progress(state.next_segment, total_segments);

        if (options.stop_after && processed_this_call >= *options.stop_after && state.next_segment < total_segments) {
            stopped = true;
            break;
        }
        const auto now = std::chrono::steady_clock::now();
        if (!options.checkpoint.empty() &&
            std::chrono::duration<double>(now - last_save).count() >= options.checkpoint_interval_s) {
            write_checkpoint(options.checkpoint, state);
            last_save = now;
        }
    }

    PipelineReport report;
    report.expected = rate_budget(cfg, cfg.pump_power);
    report.singles1 = state.acc.singles1;
    report.singles2 = state.acc.singles2;
    report.segments = state.next_segment;

    Histogram h = empty_histogram(cfg.correlation);
    h.counts = state.acc.counts;
    const double t_s = static_cast<double>(cfg.duration) / kPsPerSecond;
    h.meta.integration_time_s = t_s;
    h.meta.rate1 = static_cast<double>(state.acc.singles1) / t_s;
    h.meta.rate2 = static_cast<double>(state.acc.singles2) / t_s;
    h.meta.input_digest = digest;

    if (stopped) {
        if (!options.checkpoint.empty()) write_checkpoint(options.checkpoint, state);
        report.complete = false;
        report.histogram = std::move(h);
        return report;
    }

    report.histogram = normalize(std::move(h));
    if (cfg.has_source()) {
        report.fit = cfg.fit.model == FitModel::Eq1
                         ? fit_dip(report.histogram)
                         : fit_convolved_dip(report.histogram, cfg.fit.sigma, cfg.fit.t0);
        if (report.expected.coincidences.ss > 0.0) {
            report.corrected_g2 = background_corrected_g2(report.fit->g2_at_dip, report.expected.coincidences);
        }
    }
    if (!options.checkpoint.empty()) std::filesystem::remove(options.checkpoint);
    return report;
}

}  // namespace g2sim
