#include <cmath>

#include <gtest/gtest.h>

#include "g2sim/config.hpp"
#include "g2sim/errors.hpp"
#include "g2sim/pipeline.hpp"
#include "test_util.hpp"

using namespace g2sim;

namespace {

const std::filesystem::path kConfigs = G2SIM_CONFIG_DIR;

PipelineConfig shortened(const std::string& name, Picoseconds duration) {
    auto c = load_config(kConfigs / name);
    c.duration = duration;
    c.source.duration = duration;
    return c;
}

RunOptions with_threads(unsigned n) {
    RunOptions o;
    o.threads = n;
    return o;
}

}  // namespace

TEST(Pipeline, Segments) {
    auto c = shortened("qd_direct_2mw.json", 2'500'000'000);
    EXPECT_EQ(segment_count(c), 3u);
    EXPECT_EQ(segment_start(c, 2), 2'000'000'000);
    EXPECT_EQ(segment_length(c, 2), 500'000'000);
    EXPECT_EQ(segment_length(c, 0), 1'000'000'000);
}

TEST(Pipeline, DeterministicAcrossThreadCounts) {
    const auto c = shortened("qd_direct_2mw.json", 2'000'000'000'000);
    const auto a = run_pipeline(c, with_threads(1));
    const auto b = run_pipeline(c, with_threads(3));
    EXPECT_EQ(a.histogram.counts, b.histogram.counts);
    EXPECT_EQ(a.singles1, b.singles1);
    EXPECT_EQ(a.singles2, b.singles2);
    ASSERT_TRUE(a.fit && b.fit);
    EXPECT_EQ(a.fit->a, b.fit->a);
    auto other = c;
    other.seed += 1;
    EXPECT_NE(run_pipeline(other).histogram.counts, a.histogram.counts);
}

TEST(Pipeline, CheckpointResumeMatchesUninterruptedRun) {
    testutil::TempDir dir;
    const auto c = shortened("qd_direct_2mw.json", 1'000'000'000'000);
    const auto full = run_pipeline(c);

    RunOptions opts;
    opts.checkpoint = dir / "ckpt.json";
    opts.checkpoint_interval_s = 0.0;
    opts.stop_after = 400;
    const auto partial = run_pipeline(c, opts);
    EXPECT_FALSE(partial.complete);
    EXPECT_TRUE(std::filesystem::exists(opts.checkpoint));

    opts.stop_after.reset();
    opts.threads = 2;
    const auto resumed = run_pipeline(c, opts);
    EXPECT_TRUE(resumed.complete);
    EXPECT_EQ(resumed.histogram.counts, full.histogram.counts);
    EXPECT_EQ(resumed.singles1, full.singles1);
    EXPECT_EQ(resumed.segments, full.segments);
    EXPECT_FALSE(std::filesystem::exists(opts.checkpoint));
}

TEST(Pipeline, CheckpointOfOtherConfigIsIgnored) {
    testutil::TempDir dir;
    auto c = shortened("qd_direct_2mw.json", 200'000'000'000);
    RunOptions opts;
    opts.checkpoint = dir / "ckpt.json";
    opts.checkpoint_interval_s = 0.0;
    opts.stop_after = 50;
    run_pipeline(c, opts);
    opts.stop_after.reset();
    c.seed += 1;
    const auto resumed = run_pipeline(c, opts);
    EXPECT_EQ(resumed.histogram.counts, run_pipeline(c).histogram.counts);
}

// Fused and stage-by-stage thinning deliver the same rates to both detectors.
TEST(Pipeline, FusedMatchesLiteralRates) {
    auto fused_cfg = shortened("converted_3p2mw.json", 20'000'000'000'000);
    fused_cfg.fuse_thinning = true;
    auto literal_cfg = fused_cfg;
    literal_cfg.fuse_thinning = false;
    std::uint64_t f1 = 0, f2 = 0, l1 = 0, l2 = 0, fs = 0, ls = 0;
    for (std::uint64_t i = 0; i < segment_count(fused_cfg); ++i) {
        const auto f = simulate_segment(fused_cfg, i);
        const auto l = simulate_segment(literal_cfg, i);
        f1 += f.det1.size();
        f2 += f.det2.size();
        l1 += l.det1.size();
        l2 += l.det2.size();
        fs += f.signal.size();
        ls += l.signal.size();
    }
    for (auto [x, y] : {std::pair{f1, l1}, std::pair{f2, l2}, std::pair{fs, ls}}) {
        const double nx = static_cast<double>(x), ny = static_cast<double>(y);
        EXPECT_LT(std::abs(nx - ny), 5 * std::sqrt(nx + ny)) << nx << " vs " << ny;
    }
    const auto b = rate_budget(fused_cfg, fused_cfg.pump_power);
    const double t = 20.0;
    EXPECT_NEAR(static_cast<double>(fs) / t, b.signal_at_splitter, 5 * std::sqrt(b.signal_at_splitter / t));
}

TEST(Pipeline, LiteralSegmentKeepsStages) {
    const auto c = shortened("converted_2mw.json", 2'000'000'000);
    const auto s = simulate_segment(c, 0, true);
    EXPECT_GT(s.source.size(), s.signal.size());
    EXPECT_TRUE(is_sorted_times(s.det1.times));
    EXPECT_TRUE(is_sorted_times(s.det2.times));
    const auto again = simulate_segment(c, 0, true);
    EXPECT_EQ(s.det1, again.det1);
    EXPECT_NE(simulate_segment(c, 1, true).source.times, s.source.times);
}

TEST(Pipeline, ZeroPumpIsDegenerate) {
    auto c = shortened("converted_2mw.json", 10'000'000'000);
    c.pump_power = 0.0;
    EXPECT_THROW(run_pipeline(c), DegenerateDataError);
}

TEST(Pipeline, BackgroundOnlyRunIsFlat) {
    const auto c = shortened("uspdc_only.json", 6'120'000'000'000'000);
    const auto r = run_pipeline(c);
    EXPECT_FALSE(r.fit.has_value());
    const double flat = r.expected.coincidences.total;
    for (auto k : r.histogram.counts) EXPECT_LE(std::abs(double(k) - flat), 5 * std::sqrt(flat) + 1);
}

TEST(Pipeline, InvalidConfigRejected) {
    auto c = shortened("qd_direct_2mw.json", 0);
    EXPECT_THROW(run_pipeline(c), ConfigError);
}
