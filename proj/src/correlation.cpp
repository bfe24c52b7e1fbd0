#include "g2sim/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "g2sim/errors.hpp"

namespace g2sim {

void validate_correlation(const CorrelationConfig& cfg) {
    if (cfg.bin_width <= 0) throw InvalidArgument("bin_width must be positive");
    if (cfg.tau_min >= cfg.tau_max) throw InvalidArgument("tau_min must be below tau_max");
    if ((cfg.tau_max - cfg.tau_min) % cfg.bin_width != 0) {
        throw InvalidArgument("(tau_max - tau_min) must be a multiple of bin_width");
    }
    if (cfg.exclusion_halfwidth < 0 || -cfg.exclusion_halfwidth <= cfg.tau_min ||
        cfg.exclusion_halfwidth >= cfg.tau_max) {
        throw InvalidArgument("exclusion zone must lie strictly inside [tau_min, tau_max]");
    }
}

std::vector<double> Histogram::bin_centers() const {
    std::vector<double> c(counts.size());
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = config.bin_center(k);
    return c;
}

std::uint64_t Histogram::total() const noexcept {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
}

Histogram empty_histogram(const CorrelationConfig& cfg) {
    validate_correlation(cfg);
    Histogram h;
    h.config = cfg;
    h.counts.assign(cfg.num_bins(), 0);
    return h;
}

namespace {

void require_sorted(std::span<const Picoseconds> t, const char* which) {
    if (!is_sorted_times(t)) throw InvalidArgument(std::string("unsorted input: ") + which);
}

void guard_overflow(std::size_t n, std::size_t m) {
    // Every bin is bounded by the number of pairs.
    const long double pairs = static_cast<long double>(n) * static_cast<long double>(m);
    if (pairs > static_cast<long double>(std::numeric_limits<std::uint64_t>::max())) {
        throw InvalidArgument("coincidence counts could overflow the 64-bit counters");
    }
}

// Counts pairs owned by t1[begin, end).
void correlate_range(std::span<const Picoseconds> t1, std::size_t begin, std::size_t end,
                     std::span<const Picoseconds> t2, const CorrelationConfig& cfg, std::uint64_t* counts) {
    if (begin >= end || t2.empty()) return;
    const Picoseconds w = cfg.bin_width;
    std::size_t lo = static_cast<std::size_t>(
        std::lower_bound(t2.begin(), t2.end(), t1[begin] + cfg.tau_min) - t2.begin());
    const std::size_t m = t2.size();
    for (std::size_t i = begin; i < end; ++i) {
        const Picoseconds lo_t = t1[i] + cfg.tau_min;
        const Picoseconds hi_t = t1[i] + cfg.tau_max;
        while (lo < m && t2[lo] < lo_t) ++lo;
        for (std::size_t j = lo; j < m && t2[j] < hi_t; ++j) {
            ++counts[static_cast<std::size_t>((t2[j] - lo_t) / w)];
        }
    }
}

}  // namespace

Histogram correlate(std::span<const Picoseconds> t1, std::span<const Picoseconds> t2, const CorrelationConfig& cfg) {
    Histogram h = empty_histogram(cfg);
    require_sorted(t1, "detector 1");
    require_sorted(t2, "detector 2");
    guard_overflow(t1.size(), t2.size());
    correlate_range(t1, 0, t1.size(), t2, cfg, h.counts.data());
    return h;
}

Histogram correlate(const TagStream& s1, const TagStream& s2, const CorrelationConfig& cfg) {
    Histogram h = correlate(std::span<const Picoseconds>(s1.times), std::span<const Picoseconds>(s2.times), cfg);
    const double t_s = static_cast<double>(std::max(s1.duration, s2.duration)) / kPsPerSecond;
    h.meta.integration_time_s = t_s;
    if (t_s > 0.0) {
        h.meta.rate1 = static_cast<double>(s1.size()) / t_s;
        h.meta.rate2 = static_cast<double>(s2.size()) / t_s;
    }
    return h;
}

Histogram correlate_parallel(std::span<const Picoseconds> t1, std::span<const Picoseconds> t2,
                             const CorrelationConfig& cfg, unsigned threads, std::size_t chunk_size) {
    Histogram h = empty_histogram(cfg);
    require_sorted(t1, "detector 1");
    require_sorted(t2, "detector 2");
    guard_overflow(t1.size(), t2.size());
    if (chunk_size == 0) throw InvalidArgument("chunk_size must be positive");
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());

    const std::size_t n_chunks = (t1.size() + chunk_size - 1) / chunk_size;
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n_chunks, 1)));
    std::vector<std::vector<std::uint64_t>> partial(threads, std::vector<std::uint64_t>(h.counts.size(), 0));

    auto worker = [&](unsigned w) {
        for (std::size_t c = w; c < n_chunks; c += threads) {
            const std::size_t b = c * chunk_size;
            const std::size_t e = std::min(t1.size(), b + chunk_size);
            correlate_range(t1, b, e, t2, cfg, partial[w].data());
        }
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    }
    for (const auto& p : partial) {
        for (std::size_t k = 0; k < p.size(); ++k) h.counts[k] += p[k];
    }
    return h;
}

Histogram brute_force_correlate(std::span<const Picoseconds> t1, std::span<const Picoseconds> t2,
                                const CorrelationConfig& cfg) {
    if (static_cast<long double>(t1.size()) * static_cast<long double>(t2.size()) >
        static_cast<long double>(kBruteForceMaxPairs)) {
        throw InvalidArgument("brute-force correlation limited to 1e8 pairs");
    }
    Histogram h = empty_histogram(cfg);
    for (const Picoseconds a : t1) {
        for (const Picoseconds b : t2) {
            const Picoseconds tau = b - a;
            if (tau >= cfg.tau_min && tau < cfg.tau_max) {
                ++h.counts[static_cast<std::size_t>((tau - cfg.tau_min) / cfg.bin_width)];
            }
        }
    }
    return h;
}

void accumulate(Histogram& into, const Histogram& from) {
    if (!(into.config == from.config)) throw InvalidArgument("cannot accumulate histograms with different binning");
    for (std::size_t k = 0; k < into.counts.size(); ++k) into.counts[k] += from.counts[k];
    into.meta.integration_time_s += from.meta.integration_time_s;
}

Histogram normalize(Histogram h, const CorrelationConfig& cfg) {
    h.config.exclusion_halfwidth = cfg.exclusion_halfwidth;
    return normalize(std::move(h));
}

Histogram normalize(Histogram h) {
    const auto& cfg = h.config;
    const std::size_t n = h.counts.size();
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (std::fabs(cfg.bin_center(k)) > static_cast<double>(cfg.exclusion_halfwidth)) {
            sum += static_cast<double>(h.counts[k]);
            ++used;
        }
    }
    if (used < 10) {
        throw InvalidArgument("insufficient sidebands: " + std::to_string(used) +
                              " bins outside the exclusion zone (need at least 10)");
    }
    const double flat = sum / static_cast<double>(used);
    if (!(flat > 0.0)) throw DegenerateDataError("zero flat level: no coincidences outside the exclusion zone");
    h.flat_level = flat;
    h.normalized.resize(n);
    for (std::size_t k = 0; k < n; ++k) h.normalized[k] = static_cast<double>(h.counts[k]) / flat;
    return h;
}

double expected_flat(double r1, double r2, double bin_width_ps, double t_s) {
    if (r1 < 0.0 || r2 < 0.0 || bin_width_ps < 0.0 || t_s < 0.0) {
        throw InvalidArgument("expected_flat inputs must be non-negative");
    }
    return r1 * r2 * (bin_width_ps / kPsPerSecond) * t_s;
}

// ---------------------------------------------------------------------------

StreamingCorrelator::StreamingCorrelator(const CorrelationConfig& cfg)
    : cfg_(cfg),
      last1_(std::numeric_limits<Picoseconds>::min()),
      last2_(std::numeric_limits<Picoseconds>::min()) {
    validate_correlation(cfg);
    counts_.assign(cfg.num_bins(), 0);
}

void StreamingCorrelator::push1(std::span<const Picoseconds> tags) {
    if (tags.empty()) return;
    if (!is_sorted_times(tags) || tags.front() < last1_) throw InvalidArgument("unsorted input: detector 1");
    buf1_.insert(buf1_.end(), tags.begin(), tags.end());
    last1_ = tags.back();
    seen1_ = true;
    consumed_ += tags.size();
    peak_ = std::max(peak_, buffered());
    process(false);
}

void StreamingCorrelator::push2(std::span<const Picoseconds> tags) {
    if (tags.empty()) return;
    if (!is_sorted_times(tags) || tags.front() < last2_) throw InvalidArgument("unsorted input: detector 2");
    buf2_.insert(buf2_.end(), tags.begin(), tags.end());
    last2_ = tags.back();
    seen2_ = true;
    consumed_ += tags.size();
    peak_ = std::max(peak_, buffered());
    process(false);
}

void StreamingCorrelator::process(bool final) {
    const Picoseconds w = cfg_.bin_width;
    const std::size_t m = buf2_.size();
    while (head1_ < buf1_.size()) {
        const Picoseconds t1 = buf1_[head1_];
        // Complete only once no future detector-2 tag can fall inside the window.
        if (!final && !(seen2_ && last2_ >= t1 + cfg_.tau_max)) break;
        const Picoseconds lo_t = t1 + cfg_.tau_min;
        const Picoseconds hi_t = t1 + cfg_.tau_max;
        while (head2_ < m && buf2_[head2_] < lo_t) ++head2_;
        for (std::size_t j = head2_; j < m && buf2_[j] < hi_t; ++j) {
            ++counts_[static_cast<std::size_t>((buf2_[j] - lo_t) / w)];
        }
        ++head1_;
    }
    if (head1_ == buf1_.size() && seen1_) {
        // Later detector-1 tags are >= last1_, so earlier detector-2 tags are dead.
        const Picoseconds cut = last1_ + cfg_.tau_min;
        while (head2_ < m && buf2_[head2_] < cut) ++head2_;
    }
    compact();
}

void StreamingCorrelator::compact() {
    if (head1_ > 4096 && head1_ * 2 > buf1_.size()) {
        buf1_.erase(buf1_.begin(), buf1_.begin() + static_cast<std::ptrdiff_t>(head1_));
        head1_ = 0;
    }
    if (head2_ > 4096 && head2_ * 2 > buf2_.size()) {
        buf2_.erase(buf2_.begin(), buf2_.begin() + static_cast<std::ptrdiff_t>(head2_));
        head2_ = 0;
    }
}

Histogram StreamingCorrelator::finish() {
    process(true);
    Histogram h;
    h.config = cfg_;
    h.counts = counts_;
    return h;
}

// ---------------------------------------------------------------------------

namespace {

std::string format_center(double c) {
    if (c == std::floor(c)) return fmt::format("{}", static_cast<long long>(c));
    return fmt::format("{:.1f}", c);
}

}  // namespace

std::string histogram_csv(const Histogram& h) {
    std::string out = "bin_center_ps,counts,normalized\n";
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        out += format_center(h.config.bin_center(k));
        out += ',';
        out += std::to_string(h.counts[k]);
        out += ',';
        if (h.is_normalized()) out += fmt::format("{:.17g}", h.normalized[k]);
        out += '\n';
    }
    return out;
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& h) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out << histogram_csv(h);
    if (!out) throw IoError("write failed: " + path.string());
}

Histogram parse_histogram_csv(const std::string& text, Picoseconds exclusion) {
    std::istringstream in(text);
    std::string line;
    std::uint64_t offset = 0;
    if (!std::getline(in, line)) throw FormatError("empty histogram CSV", 0);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "bin_center_ps,counts,normalized") throw FormatError("unexpected CSV header \"" + line + "\"", 0);
    offset += line.size() + 1;

    std::vector<double> centers;
    std::vector<std::uint64_t> counts;
    std::vector<double> normalized;
    bool any_normalized = false, any_missing = false;
    while (std::getline(in, line)) {
        const std::uint64_t line_offset = offset;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos) throw FormatError("expected 3 comma-separated fields", line_offset);
        try {
            std::size_t used = 0;
            const std::string f0 = line.substr(0, c1);
            const std::string f1 = line.substr(c1 + 1, c2 - c1 - 1);
            const std::string f2 = line.substr(c2 + 1);
            centers.push_back(std::stod(f0, &used));
            if (used != f0.size()) throw std::invalid_argument("trailing characters");
            if (f1.empty() || f1[0] == '-') throw std::invalid_argument("negative count");
            counts.push_back(std::stoull(f1, &used));
            if (used != f1.size()) throw std::invalid_argument("trailing characters");
            if (f2.empty()) {
                any_missing = true;
                normalized.push_back(0.0);
            } else {
                normalized.push_back(std::stod(f2, &used));
                if (used != f2.size()) throw std::invalid_argument("trailing characters");
                any_normalized = true;
            }
        } catch (const std::exception& e) {
            throw FormatError(std::string("bad CSV row: ") + e.what(), line_offset);
        }
    }
    if (centers.size() < 2) throw FormatError("histogram CSV needs at least two bins", offset);
    if (any_normalized && any_missing) throw FormatError("normalized column partially filled", offset);

    const double w = centers[1] - centers[0];
    if (!(w > 0.0) || w != std::floor(w)) throw FormatError("bin centres must increase by a whole number of ps", offset);
    for (std::size_t k = 1; k < centers.size(); ++k) {
        if (centers[k] - centers[k - 1] != w) throw FormatError("non-uniform bin spacing", offset);
    }
    Histogram h;
    h.config.bin_width = static_cast<Picoseconds>(w);
    const double lo = centers[0] - 0.5 * w;
    if (lo != std::floor(lo)) throw FormatError("bin edges must fall on whole picoseconds", offset);
    h.config.tau_min = static_cast<Picoseconds>(lo);
    h.config.tau_max = h.config.tau_min + static_cast<Picoseconds>(centers.size()) * h.config.bin_width;
    h.config.exclusion_halfwidth = exclusion;
    h.counts = std::move(counts);
    if (any_normalized) {
        double sc = 0.0, sn = 0.0;
        for (std::size_t k = 0; k < h.counts.size(); ++k) {
            sc += static_cast<double>(h.counts[k]);
            sn += normalized[k];
        }
        if (!(sn > 0.0)) throw FormatError("normalized column sums to zero", offset);
        h.flat_level = sc / sn;
        h.normalized = std::move(normalized);
    }
    return h;
}

Histogram read_histogram_csv(const std::filesystem::path& path, Picoseconds exclusion) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_histogram_csv(ss.str(), exclusion);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace g2sim
