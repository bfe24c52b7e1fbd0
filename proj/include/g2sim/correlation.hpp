#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "g2sim/tags.hpp"

namespace g2sim {

// Delay convention: tau = t2 - t1 (detector 2 minus detector 1). Bins are
// half-open [lo, lo + bin_width); k = floor((tau - tau_min) / bin_width).
struct CorrelationConfig {
    Picoseconds bin_width = 200;
    Picoseconds tau_min = -10'000;
    Picoseconds tau_max = 10'000;
    Picoseconds exclusion_halfwidth = 3'000;

    std::size_t num_bins() const noexcept { return static_cast<std::size_t>((tau_max - tau_min) / bin_width); }
    double bin_center(std::size_t k) const noexcept {
        return static_cast<double>(tau_min) + (static_cast<double>(k) + 0.5) * static_cast<double>(bin_width);
    }

    friend bool operator==(const CorrelationConfig&, const CorrelationConfig&) = default;
};

void validate_correlation(const CorrelationConfig& cfg);

struct HistogramMeta {
    double integration_time_s = 0.0;
    std::optional<double> rate1;  // singles rate on detector 1, counts/s
    std::optional<double> rate2;
    std::string input_digest;
};

struct Histogram {
    CorrelationConfig config;
    std::vector<std::uint64_t> counts;
    std::vector<double> normalized;  // empty until normalized
    double flat_level = 0.0;
    HistogramMeta meta;

    std::size_t size() const noexcept { return counts.size(); }
    bool is_normalized() const noexcept { return !normalized.empty(); }
    std::vector<double> bin_centers() const;
    std::uint64_t total() const noexcept;
};

Histogram empty_histogram(const CorrelationConfig& cfg);

// Sorted two-pointer sliding window, O(N + M + pairs). Inputs must be sorted.
Histogram correlate(std::span<const Picoseconds> t1, std::span<const Picoseconds> t2, const CorrelationConfig& cfg);
Histogram correlate(const TagStream& s1, const TagStream& s2, const CorrelationConfig& cfg);

// Splits detector-1 tags into chunks; each chunk owns the pairs of its tags,
// so the merged result is identical to correlate(). threads = 0 picks the hardware count.
Histogram correlate_parallel(std::span<const Picoseconds> t1, std::span<const Picoseconds> t2,
                             const CorrelationConfig& cfg, unsigned threads, std::size_t chunk_size = 1 << 16);

// Exhaustive O(N * M) pair enumeration (reference implementation).
inline constexpr std::uint64_t kBruteForceMaxPairs = 100'000'000;
Histogram brute_force_correlate(std::span<const Picoseconds> t1, std::span<const Picoseconds> t2,
                                const CorrelationConfig& cfg);

// Adds counts of `from` into `into`; configs must match.
void accumulate(Histogram& into, const Histogram& from);

// Flat level = mean counts over bins with |center| > exclusion_halfwidth,
// leaving out the outermost bin on each side. Requires >= 10 such bins.
Histogram normalize(Histogram h);
Histogram normalize(Histogram h, const CorrelationConfig& cfg);

// r1 * r2 * bin_width * T, rates in 1/s, bin width in ps, T in s.
double expected_flat(double r1, double r2, double bin_width_ps, double t_s);

// Incremental correlator for streams too long to hold in memory. Tags must
// be pushed in time order per stream; memory is bounded by the histogram
// plus the tags whose correlation window is still open.
class StreamingCorrelator {
public:
    explicit StreamingCorrelator(const CorrelationConfig& cfg);

    void push1(std::span<const Picoseconds> tags);
    void push2(std::span<const Picoseconds> tags);
    Histogram finish();

    std::size_t buffered() const noexcept { return (buf1_.size() - head1_) + (buf2_.size() - head2_); }
    std::size_t peak_buffered() const noexcept { return peak_; }
    std::uint64_t consumed() const noexcept { return consumed_; }

private:
    void process(bool final);
    void compact();

    CorrelationConfig cfg_;
    std::vector<std::uint64_t> counts_;
    std::vector<Picoseconds> buf1_, buf2_;
    std::size_t head1_ = 0, head2_ = 0;
    Picoseconds last1_, last2_;
    bool seen1_ = false, seen2_ = false;
    std::size_t peak_ = 0;
    std::uint64_t consumed_ = 0;
};

// CSV with header "bin_center_ps,counts,normalized".
void write_histogram_csv(const std::filesystem::path& path, const Histogram& h);
std::string histogram_csv(const Histogram& h);
// Bin geometry is inferred from the centres; exclusion_halfwidth comes from `exclusion`.
Histogram read_histogram_csv(const std::filesystem::path& path, Picoseconds exclusion = 3'000);
Histogram parse_histogram_csv(const std::string& text, Picoseconds exclusion = 3'000);

}  // namespace g2sim
