#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace g2sim {

// Picoseconds since stream origin.
using Picoseconds = std::int64_t;

inline constexpr double kPsPerSecond = 1e12;

struct TimeTag {
    Picoseconds t = 0;
    std::uint8_t channel = 0;

    friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

// Time-ordered tags stored as parallel arrays. Invariants: duration > 0,
// 0 <= t <= duration, times non-decreasing.
struct TagStream {
    std::vector<Picoseconds> times;
    std::vector<std::uint8_t> channels;
    Picoseconds duration = 0;
    std::string origin_label;

    std::size_t size() const noexcept { return times.size(); }
    bool empty() const noexcept { return times.empty(); }
    TimeTag operator[](std::size_t i) const { return {times[i], channels[i]}; }

    void reserve(std::size_t n) {
        times.reserve(n);
        channels.reserve(n);
    }
    void push_back(Picoseconds t, std::uint8_t ch) {
        times.push_back(t);
        channels.push_back(ch);
    }
    void clear() noexcept {
        times.clear();
        channels.clear();
    }

    // Mean rate in tags per second.
    double rate() const noexcept {
        return duration > 0 ? static_cast<double>(size()) * kPsPerSecond / static_cast<double>(duration) : 0.0;
    }

    friend bool operator==(const TagStream&, const TagStream&) = default;
};

// Throws InvalidArgument if the stream invariants do not hold.
void validate_stream(const TagStream& s);

bool is_sorted_times(std::span<const Picoseconds> t) noexcept;

// Sorts tags by time (stable with respect to equal times).
void sort_stream(TagStream& s);

// Time-ordered merge of two sorted streams; duration is the larger of the two.
TagStream merge_streams(const TagStream& a, const TagStream& b, std::string label = {});

// Sets every tag's channel.
void relabel(TagStream& s, std::uint8_t channel) noexcept;

// ---------------------------------------------------------------------------
// "TTG1" binary tag files.
//
//   offset 0   4 bytes   magic "TTG1"
//          4   int64 LE  duration in ps
//         12   uint32 LE origin label length L
//         16   L bytes   origin label, UTF-8
//       16+L   records of 9 bytes: uint8 channel, int64 LE t (ps), until EOF
//
// Records are sorted by t within each channel.
// ---------------------------------------------------------------------------

inline constexpr char kTagMagic[4] = {'T', 'T', 'G', '1'};
inline constexpr std::size_t kTagRecordSize = 9;

TagStream read_tag_file(const std::filesystem::path& path);
TagStream parse_tag_bytes(std::span<const unsigned char> bytes);
void write_tag_file(const std::filesystem::path& path, const TagStream& s);

// Appends records incrementally so long simulations never hold a whole stream in memory.
class TagFileWriter {
public:
    TagFileWriter(const std::filesystem::path& path, Picoseconds duration, const std::string& label);
    // Reopens an existing file, keeps its first `keep_records` records and
    // continues appending; later tags on any channel must be >= `floor`.
    TagFileWriter(const std::filesystem::path& path, std::uint64_t keep_records, Picoseconds floor);
    TagFileWriter(const TagFileWriter&) = delete;
    TagFileWriter& operator=(const TagFileWriter&) = delete;
    ~TagFileWriter();

    void append(std::span<const Picoseconds> times, std::uint8_t channel);
    void append(const TagStream& s);
    void close();

    std::uint64_t records() const noexcept { return records_; }

private:
    void flush_buffer();

    std::filesystem::path path_;
    std::ofstream out_;
    std::vector<char> buffer_;
    Picoseconds last_[256];
    std::uint64_t records_ = 0;
};

}  // namespace g2sim
