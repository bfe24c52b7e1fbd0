#include "g2sim/tags.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>
#include <numeric>

#include "g2sim/errors.hpp"

namespace g2sim {

static_assert(std::endian::native == std::endian::little, "tag file I/O assumes a little-endian host");

void validate_stream(const TagStream& s) {
    if (s.duration <= 0) throw InvalidArgument("tag stream duration must be positive");
    if (s.times.size() != s.channels.size()) throw InvalidArgument("tag stream arrays differ in length");
    if (!is_sorted_times(s.times)) throw InvalidArgument("tag stream is not sorted by time");
    if (!s.times.empty() && (s.times.front() < 0 || s.times.back() > s.duration)) {
        throw InvalidArgument("tag outside [0, duration]");
    }
}

bool is_sorted_times(std::span<const Picoseconds> t) noexcept { return std::is_sorted(t.begin(), t.end()); }

void sort_stream(TagStream& s) {
    if (is_sorted_times(s.times)) return;
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.times[a] < s.times[b]; });
    std::vector<Picoseconds> t(s.size());
    std::vector<std::uint8_t> c(s.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        t[i] = s.times[idx[i]];
        c[i] = s.channels[idx[i]];
    }
    s.times = std::move(t);
    s.channels = std::move(c);
}

TagStream merge_streams(const TagStream& a, const TagStream& b, std::string label) {
    TagStream out;
    out.duration = std::max(a.duration, b.duration);
    out.origin_label = label.empty() ? a.origin_label + "+" + b.origin_label : std::move(label);
    out.reserve(a.size() + b.size());
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (b.times[j] < a.times[i]) {
            out.push_back(b.times[j], b.channels[j]);
            ++j;
        } else {
            out.push_back(a.times[i], a.channels[i]);
            ++i;
        }
    }
    for (; i < a.size(); ++i) out.push_back(a.times[i], a.channels[i]);
    for (; j < b.size(); ++j) out.push_back(b.times[j], b.channels[j]);
    return out;
}

void relabel(TagStream& s, std::uint8_t channel) noexcept { std::fill(s.channels.begin(), s.channels.end(), channel); }

namespace {

template <typename T>
T load_le(const unsigned char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <typename T>
void store_le(std::vector<char>& buf, T v) {
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf.insert(buf.end(), raw, raw + sizeof(T));
}

}  // namespace

TagStream parse_tag_bytes(std::span<const unsigned char> bytes) {
    constexpr std::size_t kFixedHeader = 16;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kTagMagic, 4) != 0) {
        throw FormatError("bad magic bytes, expected \"TTG1\"", 0);
    }
    if (bytes.size() < kFixedHeader) throw FormatError("truncated header", bytes.size());
    TagStream s;
    s.duration = load_le<std::int64_t>(bytes.data() + 4);
    if (s.duration <= 0) throw FormatError("non-positive duration", 4);
    const auto label_len = load_le<std::uint32_t>(bytes.data() + 12);
    if (bytes.size() < kFixedHeader + label_len) throw FormatError("truncated origin label", bytes.size());
    s.origin_label.assign(reinterpret_cast<const char*>(bytes.data() + kFixedHeader), label_len);

    const std::size_t body = kFixedHeader + label_len;
    const std::size_t n = (bytes.size() - body) / kTagRecordSize;
    if ((bytes.size() - body) % kTagRecordSize != 0) {
        throw FormatError("trailing partial record", body + n * kTagRecordSize);
    }
    s.reserve(n);
    Picoseconds last[256];
    std::fill(std::begin(last), std::end(last), std::numeric_limits<Picoseconds>::min());
    bool globally_sorted = true;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = body + i * kTagRecordSize;
        const std::uint8_t ch = bytes[off];
        const auto t = load_le<std::int64_t>(bytes.data() + off + 1);
        if (t < 0 || t > s.duration) throw FormatError("timestamp outside [0, duration]", off);
        if (t < last[ch]) throw FormatError("timestamps not sorted within channel " + std::to_string(ch), off);
        last[ch] = t;
        if (!s.times.empty() && t < s.times.back()) globally_sorted = false;
        s.push_back(t, ch);
    }
    if (!globally_sorted) sort_stream(s);
    return s;
}

TagStream read_tag_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<unsigned char> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw IoError("read failed: " + path.string());
    }
    try {
        return parse_tag_bytes(bytes);
    } catch (const FormatError& e) {
        FormatError wrapped(path.string() + ": " + e.what());
        wrapped.offset = e.offset;
        throw wrapped;
    }
}

void write_tag_file(const std::filesystem::path& path, const TagStream& s) {
    validate_stream(s);
    TagFileWriter w(path, s.duration, s.origin_label);
    w.append(s);
    w.close();
}

TagFileWriter::TagFileWriter(const std::filesystem::path& path, Picoseconds duration, const std::string& label)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot create " + path.string());
    if (duration <= 0) throw InvalidArgument("tag file duration must be positive");
    std::fill(std::begin(last_), std::end(last_), std::numeric_limits<Picoseconds>::min());
    buffer_.insert(buffer_.end(), kTagMagic, kTagMagic + 4);
    store_le<std::int64_t>(buffer_, duration);
    store_le<std::uint32_t>(buffer_, static_cast<std::uint32_t>(label.size()));
    buffer_.insert(buffer_.end(), label.begin(), label.end());
}

TagFileWriter::TagFileWriter(const std::filesystem::path& path, std::uint64_t keep_records, Picoseconds floor)
    : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    unsigned char header[16];
    if (!in.read(reinterpret_cast<char*>(header), 16) || std::memcmp(header, kTagMagic, 4) != 0) {
        throw FormatError("not a TTG1 file: " + path.string(), 0);
    }
    const auto label_len = load_le<std::uint32_t>(header + 12);
    in.close();
    const std::uint64_t keep_bytes = 16 + label_len + keep_records * kTagRecordSize;
    if (std::filesystem::file_size(path) < keep_bytes) {
        throw FormatError("tag file shorter than its checkpoint: " + path.string(), std::filesystem::file_size(path));
    }
    std::filesystem::resize_file(path, keep_bytes);
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw IoError("cannot append to " + path.string());
    std::fill(std::begin(last_), std::end(last_), floor);
    records_ = keep_records;
}

TagFileWriter::~TagFileWriter() {
    if (out_.is_open()) {
        try {
            close();
        } catch (...) {
        }
    }
}

void TagFileWriter::append(std::span<const Picoseconds> times, std::uint8_t channel) {
    for (const Picoseconds t : times) {
        if (t < last_[channel]) throw InvalidArgument("tags appended out of order on channel " + std::to_string(channel));
        last_[channel] = t;
        buffer_.push_back(static_cast<char>(channel));
        store_le<std::int64_t>(buffer_, t);
        if (buffer_.size() >= (1u << 20)) flush_buffer();
    }
    records_ += times.size();
}

void TagFileWriter::append(const TagStream& s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Picoseconds t = s.times[i];
        const std::uint8_t ch = s.channels[i];
        if (t < last_[ch]) throw InvalidArgument("tags appended out of order on channel " + std::to_string(ch));
        last_[ch] = t;
        buffer_.push_back(static_cast<char>(ch));
        store_le<std::int64_t>(buffer_, t);
        if (buffer_.size() >= (1u << 20)) flush_buffer();
    }
    records_ += s.size();
}

void TagFileWriter::flush_buffer() {
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!out_) throw IoError("write failed: " + path_.string());
    buffer_.clear();
}

void TagFileWriter::close() {
    if (!out_.is_open()) return;
    flush_buffer();
    out_.close();
    if (!out_) throw IoError("close failed: " + path_.string());
}

}  // namespace g2sim
