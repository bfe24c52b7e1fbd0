#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "g2sim/correlation.hpp"
#include "g2sim/errors.hpp"
#include "g2sim/photon_source.hpp"
#include "g2sim/rng.hpp"
#include "test_util.hpp"

using namespace g2sim;

namespace {

std::vector<Picoseconds> random_tags(Rng& rng, std::size_t n, Picoseconds span) {
    std::vector<Picoseconds> t(n);
    for (auto& x : t) x = static_cast<Picoseconds>(rng.uniform() * static_cast<double>(span));
    std::sort(t.begin(), t.end());
    return t;
}

const CorrelationConfig kSmall{50, -1000, 1000, 400};

}  // namespace

TEST(Correlation, SinglePair) {
    const std::vector<Picoseconds> a{0}, b{100};
    const auto h = correlate(a, b, kSmall);
    EXPECT_EQ(h.total(), 1u);
    EXPECT_EQ(h.counts[(100 - kSmall.tau_min) / kSmall.bin_width], 1u);
}

TEST(Correlation, HandEnumeration) {
    const std::vector<Picoseconds> t{0, 50};
    const auto h = correlate(t, t, kSmall);
    EXPECT_EQ(h.counts[20], 2u);  // [0, 50)
    EXPECT_EQ(h.counts[21], 1u);  // [50, 100)
    EXPECT_EQ(h.counts[19], 1u);  // [-50, 0)
    EXPECT_EQ(h.total(), 4u);
}

TEST(Correlation, EmptyInputs) {
    const std::vector<Picoseconds> t{1, 2, 3}, none;
    EXPECT_EQ(correlate(t, none, kSmall).total(), 0u);
    EXPECT_EQ(correlate(none, t, kSmall).total(), 0u);
    EXPECT_EQ(correlate(none, none, kSmall).total(), 0u);
}

TEST(Correlation, BinEdgesHalfOpen) {
    const std::vector<Picoseconds> a{1000};
    const std::vector<Picoseconds> b{0, 1000 - 1000 + 2000 - 1, 2000, 1999};
    std::vector<Picoseconds> bs(b);
    std::sort(bs.begin(), bs.end());
    const auto h = correlate(a, bs, kSmall);
    EXPECT_EQ(h.counts.front(), 1u);  // tau = -1000 is included
    EXPECT_EQ(h.counts.back(), 2u);   // tau = 999 twice; tau = 1000 excluded
    EXPECT_EQ(h.total(), 3u);
}

TEST(Correlation, MatchesBruteForceOnRandomPairs) {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n1 = 1 + rng() % 2000, n2 = 1 + rng() % 2000;
        const Picoseconds span = 10'000 + static_cast<Picoseconds>(rng() % 2'000'000);
        const auto a = random_tags(rng, n1, span), b = random_tags(rng, n2, span);
        ASSERT_EQ(correlate(a, b, kSmall).counts, brute_force_correlate(a, b, kSmall).counts) << trial;
    }
}

TEST(Correlation, DuplicateTimestamps) {
    const std::vector<Picoseconds> a{5, 5, 5, 100, 100}, b{5, 5, 40, 100};
    EXPECT_EQ(correlate(a, b, kSmall).counts, brute_force_correlate(a, b, kSmall).counts);
}

TEST(Correlation, MirrorSymmetry) {
    Rng rng(3);
    const auto a = random_tags(rng, 3000, 3'000'000), b = random_tags(rng, 3000, 3'000'000);
    // 1 ps bins: bin k holds tau = k - 1000 exactly, so swapping the inputs mirrors k -> 2000 - k.
    const CorrelationConfig unit{1, -1000, 1000, 400};
    const auto ab = correlate(a, b, unit), ba = correlate(b, a, unit);
    for (std::size_t k = 1; k < 2000; ++k) ASSERT_EQ(ab.counts[k], ba.counts[2000 - k]) << k;

    const auto aa = correlate(a, a, unit);
    for (std::size_t k = 1; k < 2000; ++k) ASSERT_EQ(aa.counts[k], aa.counts[2000 - k]) << k;
    EXPECT_GE(aa.counts[1000], 3000u);
    EXPECT_EQ(*std::max_element(aa.counts.begin(), aa.counts.end()), aa.counts[1000]);
}

TEST(Correlation, ParallelBitIdentical) {
    Rng rng(5);
    const auto a = random_tags(rng, 200'000, 2'000'000'000), b = random_tags(rng, 200'000, 2'000'000'000);
    const CorrelationConfig cfg{100, -20'000, 20'000, 5'000};
    const auto serial = correlate(a, b, cfg);
    for (unsigned threads : {1u, 2u, 3u, 8u})
        for (std::size_t chunk : {std::size_t{1}, std::size_t{777}, std::size_t{1} << 16})
            EXPECT_EQ(correlate_parallel(a, b, cfg, threads, chunk).counts, serial.counts) << threads << " " << chunk;
}

TEST(Correlation, StreamingMatchesBatch) {
    Rng rng(6);
    const auto a = random_tags(rng, 50'000, 500'000'000), b = random_tags(rng, 50'000, 500'000'000);
    const CorrelationConfig cfg{100, -20'000, 20'000, 5'000};
    StreamingCorrelator sc(cfg);
    // Both inputs advance together in random time slices, as a live tagger would deliver them.
    std::size_t i = 0, j = 0;
    Picoseconds cursor = 0;
    while (i < a.size() || j < b.size()) {
        cursor += static_cast<Picoseconds>(1 + rng() % 5'000'000);
        const std::size_t ni = std::lower_bound(a.begin() + i, a.end(), cursor) - (a.begin() + i);
        const std::size_t nj = std::lower_bound(b.begin() + j, b.end(), cursor) - (b.begin() + j);
        if (ni) sc.push1(std::span(a).subspan(i, ni));
        if (nj) sc.push2(std::span(b).subspan(j, nj));
        i += ni;
        j += nj;
    }
    EXPECT_EQ(sc.finish().counts, correlate(a, b, cfg).counts);
    EXPECT_LT(sc.peak_buffered(), 2000u);
}

TEST(Correlation, StreamingRejectsOutOfOrder) {
    StreamingCorrelator sc(kSmall);
    sc.push1(std::vector<Picoseconds>{10, 20});
    EXPECT_THROW(sc.push1(std::vector<Picoseconds>{15}), InvalidArgument);
}

TEST(Correlation, PoissonStreamsAreFlat) {
    const auto s1 = gen_coherent_stream(1000, 3'600'000'000'000'000, 1);
    const auto s2 = gen_coherent_stream(1000, 3'600'000'000'000'000, 2);
    const CorrelationConfig cfg{200, -10'000, 10'000, 3'000};
    const auto h = correlate(s1, s2, cfg);
    const double mean = expected_flat(s1.rate(), s2.rate(), 200, 3600);
    EXPECT_NEAR(mean, 0.72, 0.01);
    for (auto c : h.counts) EXPECT_LE(std::abs(double(c) - mean), 5 * std::sqrt(mean) + 1);
    EXPECT_NEAR(double(h.total()) / h.size(), mean, 5 * std::sqrt(mean / h.size()));
}

TEST(Correlation, NormalizeConstant) {
    auto h = empty_histogram(CorrelationConfig{200, -10'000, 10'000, 3'000});
    std::fill(h.counts.begin(), h.counts.end(), 42);
    h = normalize(h);
    EXPECT_DOUBLE_EQ(h.flat_level, 42.0);
    for (double v : h.normalized) EXPECT_EQ(v, 1.0);
}

TEST(Correlation, NormalizeErrors) {
    auto h = empty_histogram(CorrelationConfig{200, -10'000, 10'000, 3'000});
    EXPECT_THROW(normalize(h), DegenerateDataError);
    auto narrow = empty_histogram(CorrelationConfig{200, -1'000, 1'000, 900});
    std::fill(narrow.counts.begin(), narrow.counts.end(), 1);
    EXPECT_THROW(normalize(narrow), InvalidArgument);
}

TEST(Correlation, ExpectedFlat) {
    EXPECT_NEAR(expected_flat(380, 380, 200, 17 * 3600), 1.767, 0.001);
    EXPECT_EQ(expected_flat(380, 380, 200, 0), 0.0);
    EXPECT_NEAR(expected_flat(860, 860, 200, 122 * 3600), 65.0, 0.1);
}

TEST(Correlation, ConfigValidation) {
    EXPECT_THROW(validate_correlation(CorrelationConfig{0, -10, 10, 2}), InvalidArgument);
    EXPECT_THROW(validate_correlation(CorrelationConfig{3, -10, 10, 2}), InvalidArgument);
    EXPECT_THROW(validate_correlation(CorrelationConfig{2, 10, -10, 2}), InvalidArgument);
    EXPECT_THROW(validate_correlation(CorrelationConfig{2, -10, 10, 10}), InvalidArgument);
}

TEST(Correlation, CsvRoundTrip) {
    testutil::TempDir dir;
    Rng rng(9);
    const auto a = random_tags(rng, 20'000, 50'000'000), b = random_tags(rng, 20'000, 50'000'000);
    const CorrelationConfig cfg{200, -10'000, 10'000, 3'000};
    const auto h = normalize(correlate(a, b, cfg));
    write_histogram_csv(dir / "h.csv", h);
    const auto back = read_histogram_csv(dir / "h.csv", 3'000);
    EXPECT_EQ(back.config, cfg);
    EXPECT_EQ(back.counts, h.counts);
    EXPECT_EQ(histogram_csv(normalize(back)), histogram_csv(h));
    EXPECT_EQ(testutil::slurp(dir / "h.csv").substr(0, 31), "bin_center_ps,counts,normalized");
}

TEST(Correlation, CsvFormatErrors) {
    EXPECT_THROW(parse_histogram_csv("nope\n1,2,3\n"), FormatError);
    EXPECT_THROW(parse_histogram_csv("bin_center_ps,counts,normalized\n100,x,1\n"), FormatError);
}
