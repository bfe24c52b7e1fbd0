#include <cstring>
#include <vector>

#include <gtest/gtest.h>

#include "g2sim/errors.hpp"
#include "g2sim/tags.hpp"
#include "test_util.hpp"

using namespace g2sim;

namespace {

TagStream sample() {
    TagStream s;
    s.duration = 1'000'000;
    s.origin_label = "unit";
    s.push_back(0, 1);
    s.push_back(17, 2);
    s.push_back(17, 1);
    s.push_back(999'999, 2);
    s.push_back(1'000'000, 1);
    return s;
}

std::vector<unsigned char> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Tags, RoundTrip) {
    testutil::TempDir dir;
    const auto s = sample();
    write_tag_file(dir / "a.ttg", s);
    EXPECT_EQ(read_tag_file(dir / "a.ttg"), s);
    EXPECT_EQ(std::filesystem::file_size(dir / "a.ttg"), 16 + 4 + 9 * s.size());
}

TEST(Tags, HeaderLayout) {
    testutil::TempDir dir;
    write_tag_file(dir / "a.ttg", sample());
    const auto raw = testutil::slurp(dir / "a.ttg");
    EXPECT_EQ(raw.substr(0, 4), "TTG1");
    std::int64_t d;
    std::memcpy(&d, raw.data() + 4, 8);
    EXPECT_EQ(d, 1'000'000);
    EXPECT_EQ(raw.substr(16, 4), "unit");
    EXPECT_EQ(static_cast<unsigned char>(raw[20]), 1);
}

TEST(Tags, BadMagic) {
    testutil::TempDir dir;
    write_tag_file(dir / "a.ttg", sample());
    auto raw = testutil::slurp(dir / "a.ttg");
    raw[3] = '2';
    testutil::spit(dir / "b.ttg", raw);
    try {
        read_tag_file(dir / "b.ttg");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset, 0u);
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }
}

TEST(Tags, ErrorsCarryByteOffsets) {
    testutil::TempDir dir;
    write_tag_file(dir / "a.ttg", sample());
    const auto good = testutil::slurp(dir / "a.ttg");

    auto truncated = bytes_of(good.substr(0, good.size() - 3));
    try {
        parse_tag_bytes(truncated);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset, 20u + 9 * 4);
    }

    // Second channel-1 record (t = 17) moved behind the last one.
    auto unsorted = bytes_of(good);
    const std::size_t rec = 20 + 9 * 2;
    const std::int64_t t = 2'000;
    std::memcpy(unsorted.data() + 20 + 1, &t, 8);
    try {
        parse_tag_bytes(unsorted);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset, rec);
    }

    auto outside = bytes_of(good);
    const std::int64_t big = 5'000'000;
    std::memcpy(outside.data() + 20 + 9 + 1, &big, 8);
    try {
        parse_tag_bytes(outside);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset, 29u);
    }

    EXPECT_THROW(parse_tag_bytes(bytes_of("TTG1")), FormatError);
}

TEST(Tags, MissingFileIsIoError) {
    EXPECT_THROW(read_tag_file("/nonexistent/x.ttg"), IoError);
}

TEST(Tags, ValidateStream) {
    auto s = sample();
    EXPECT_NO_THROW(validate_stream(s));
    s.times[1] = -1;
    EXPECT_THROW(validate_stream(s), InvalidArgument);
    s = sample();
    s.duration = 0;
    EXPECT_THROW(validate_stream(s), InvalidArgument);
}

TEST(Tags, MergeKeepsOrder) {
    TagStream a, b;
    a.duration = 100;
    b.duration = 200;
    for (int t : {1, 5, 9}) a.push_back(t, 1);
    for (int t : {2, 5, 150}) b.push_back(t, 2);
    const auto m = merge_streams(a, b);
    EXPECT_EQ(m.duration, 200);
    EXPECT_EQ(m.times, (std::vector<Picoseconds>{1, 2, 5, 5, 9, 150}));
    EXPECT_EQ(m.channels, (std::vector<std::uint8_t>{1, 2, 1, 2, 1, 2}));
}

TEST(Tags, WriterMatchesBulkWrite) {
    testutil::TempDir dir;
    const auto s = sample();
    write_tag_file(dir / "bulk.ttg", s);
    {
        TagFileWriter w(dir / "inc.ttg", s.duration, s.origin_label);
        TagStream first, second;
        first.duration = second.duration = s.duration;
        for (std::size_t i = 0; i < s.size(); ++i) (i < 2 ? first : second).push_back(s.times[i], s.channels[i]);
        w.append(first);
        w.append(second);
        w.close();
        EXPECT_EQ(w.records(), s.size());
    }
    EXPECT_EQ(testutil::slurp(dir / "bulk.ttg"), testutil::slurp(dir / "inc.ttg"));
}

TEST(Tags, WriterResumeTruncatesAndContinues) {
    testutil::TempDir dir;
    const auto s = sample();
    write_tag_file(dir / "bulk.ttg", s);
    {
        TagFileWriter w(dir / "inc.ttg", s.duration, s.origin_label);
        w.append(s);  // pretend the run got further than its checkpoint
    }
    {
        TagFileWriter w(dir / "inc.ttg", 3, 17);
        TagStream rest;
        rest.duration = s.duration;
        for (std::size_t i = 3; i < s.size(); ++i) rest.push_back(s.times[i], s.channels[i]);
        w.append(rest);
        EXPECT_THROW(w.append(std::vector<Picoseconds>{5}, 1), InvalidArgument);
    }
    EXPECT_EQ(testutil::slurp(dir / "bulk.ttg"), testutil::slurp(dir / "inc.ttg"));
}
