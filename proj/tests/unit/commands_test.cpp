#include <cmath>

#include <gtest/gtest.h>

#include "json.hpp"

#include "g2sim/commands.hpp"
#include "g2sim/digest.hpp"
#include "g2sim/errors.hpp"
#include "g2sim/pipeline.hpp"
#include "test_util.hpp"

using namespace g2sim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = G2SIM_CONFIG_DIR;

PipelineConfig shortened(const std::string& name, Picoseconds duration) {
    auto c = load_config(kConfigs / name);
    c.duration = duration;
    c.source.duration = duration;
    return c;
}

json manifest(const fs::path& dir) { return json::parse(testutil::slurp(dir / "manifest.json")); }

// Outputs listed in a manifest exist and match their recorded digests.
void expect_manifest_consistent(const fs::path& dir) {
    const auto m = manifest(dir);
    EXPECT_EQ(m.at("software"), kSoftwareVersion);
    EXPECT_EQ(m.at("rng").at("algorithm"), kRngAlgorithm);
    for (const auto& o : m.at("outputs")) {
        const fs::path p = dir / o.at("path").get<std::string>();
        ASSERT_TRUE(fs::exists(p)) << p;
        EXPECT_EQ(o.at("sha256"), sha256_file(p));
        EXPECT_EQ(o.at("bytes").get<std::uintmax_t>(), fs::file_size(p));
    }
}

RunOptions with_threads(unsigned n) {
    RunOptions o;
    o.threads = n;
    return o;
}

}  // namespace

TEST(Digest, KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Commands, SimulateCoherentTenSeconds) {
    testutil::TempDir dir;
    auto c = shortened("coherent_control.json", 10'000'000'000'000);
    cmd_simulate(c, dir.path());
    const auto records = (fs::file_size(dir / "source.ttg") - 16 - std::string("source").size()) / 9;
    EXPECT_NEAR(static_cast<double>(records), 1.7e7, 5 * std::sqrt(1.7e7));
    expect_manifest_consistent(dir.path());
    EXPECT_FALSE(fs::exists(dir / "checkpoint.json"));
    EXPECT_EQ(manifest(dir.path()).at("rng").at("seed"), c.seed);
}

TEST(Commands, SimulateIsByteIdentical) {
    testutil::TempDir a, b;
    const auto c = shortened("converted_2mw.json", 20'000'000'000);
    cmd_simulate(c, a.path(), SimulateOptions{.all_stages = true});
    cmd_simulate(c, b.path(), SimulateOptions{.all_stages = true});
    for (const char* f : {"source.ttg", "signal.ttg", "background.ttg", "det1.ttg", "det2.ttg"}) {
        EXPECT_EQ(testutil::slurp(a / f), testutil::slurp(b / f)) << f;
    }
    EXPECT_EQ(manifest(a.path()).at("outputs"), manifest(b.path()).at("outputs"));
}

TEST(Commands, SimulateResumesFromCheckpoint) {
    testutil::TempDir ref, dir;
    const auto c = shortened("coherent_control.json", 5'000'000'000);
    cmd_simulate(c, ref.path());
    const auto full = read_tag_file(ref / "source.ttg");

    // State an interrupted run leaves behind: a checkpoint at segment 2 and a
    // tag file holding those records plus some unflushed extras.
    const Picoseconds cut = segment_start(c, 2);
    std::uint64_t kept = 0;
    while (kept < full.size() && full.times[kept] < cut) ++kept;
    TagStream partial = full;
    partial.times.resize(kept + 10);
    partial.channels.resize(kept + 10);
    write_tag_file(dir / "source.ttg", partial);
    const std::string digest = sha256_hex(config_to_json(c));
    testutil::spit(dir / "checkpoint.json",
                   json{{"config_digest", digest}, {"next_segment", 2}, {"records", {kept}}}.dump());

    cmd_simulate(c, dir.path());
    EXPECT_EQ(testutil::slurp(ref / "source.ttg"), testutil::slurp(dir / "source.ttg"));
    EXPECT_FALSE(fs::exists(dir / "checkpoint.json"));
}

TEST(Commands, ManifestIsWriteOnce) {
    testutil::TempDir dir;
    const auto c = shortened("coherent_control.json", 1'000'000'000);
    cmd_simulate(c, dir.path());
    const auto before = testutil::slurp(dir / "source.ttg");
    EXPECT_THROW(cmd_simulate(c, dir.path()), IoError);
    EXPECT_EQ(testutil::slurp(dir / "source.ttg"), before);
}

TEST(Commands, InvalidConfigLeavesNothing) {
    testutil::TempDir dir;
    auto c = shortened("coherent_control.json", 0);
    EXPECT_THROW(cmd_simulate(c, dir / "out"), ConfigError);
    EXPECT_FALSE(fs::exists(dir / "out" / "manifest.json"));
}

TEST(Commands, FailedPipelineRemovesPartialOutputs) {
    testutil::TempDir dir;
    auto c = shortened("converted_2mw.json", 10'000'000'000);
    c.pump_power = 0.0;
    EXPECT_THROW(cmd_pipeline(c, dir.path()), DegenerateDataError);
    EXPECT_TRUE(fs::is_empty(dir.path()));
}

TEST(Commands, StagedCommandsChain) {
    testutil::TempDir sim, conv, det, cor, fit;
    const auto c = shortened("qd_direct_2mw.json", 2'000'000'000'000);
    cmd_simulate(c, sim.path());
    cmd_convert(c, sim / "source.ttg", conv.path());
    cmd_detect(c, conv / "converted.ttg", det.path());
    const auto h = cmd_correlate(c.correlation, det / "det1.ttg", det / "det2.ttg", cor.path());
    EXPECT_TRUE(h.is_normalized());
    EXPECT_GT(h.total(), 0u);
    const auto r = cmd_fit(cor / "histogram.csv", FitModel::Eq1, std::nullopt, std::nullopt, 3000, fit.path());
    EXPECT_LT(r.g2_at_dip, 0.3);
    EXPECT_NEAR(r.tau0, 357, 80);
    for (const auto* d : {&sim, &conv, &det, &cor, &fit}) expect_manifest_consistent(d->path());
    // Inputs are recorded with their digests.
    const auto m = manifest(cor.path());
    EXPECT_EQ(m.at("inputs").size(), 2u);
    EXPECT_EQ(m.at("inputs")[0].at("sha256"), sha256_file(det / "det1.ttg"));
    const auto fj = json::parse(testutil::slurp(fit / "fit.json"));
    EXPECT_EQ(fj.at("summary"), summary_line(r));
}

TEST(Commands, CorrelateSelfIsSymmetric) {
    testutil::TempDir dir, out;
    TagStream s = gen_coherent_stream(1e6, 100'000'000'000, 3);
    write_tag_file(dir / "a.ttg", s);
    CorrelationConfig cfg{1, -1000, 1000, 400};
    const auto h = cmd_correlate(cfg, dir / "a.ttg", dir / "a.ttg", out.path());
    for (std::size_t k = 1; k < 1000; ++k) EXPECT_EQ(h.counts[k], h.counts[2000 - k]);
    EXPECT_EQ(*std::max_element(h.counts.begin(), h.counts.end()), h.counts[1000]);
}

TEST(Commands, CorrelateBadMagic) {
    testutil::TempDir dir, out;
    testutil::spit(dir / "bad.ttg", "XXXX0000000000000000");
    try {
        cmd_correlate(CorrelationConfig{}, dir / "bad.ttg", dir / "bad.ttg", out.path());
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset, 0u);
    }
    EXPECT_FALSE(fs::exists(out / "manifest.json"));
    EXPECT_FALSE(fs::exists(out / "histogram.csv"));
}

TEST(Commands, GoldenHistogram) {
    // Fixture streams whose pairs are enumerated by brute force.
    testutil::TempDir dir, out;
    Rng rng(77);
    TagStream a, b;
    a.duration = b.duration = 2'000'000;
    for (int i = 0; i < 400; ++i) a.push_back(static_cast<Picoseconds>(rng.uniform() * 2e6), 1);
    for (int i = 0; i < 400; ++i) b.push_back(static_cast<Picoseconds>(rng.uniform() * 2e6), 2);
    sort_stream(a);
    sort_stream(b);
    write_tag_file(dir / "a.ttg", a);
    write_tag_file(dir / "b.ttg", b);
    const CorrelationConfig cfg{200, -10'000, 10'000, 3'000};
    cmd_correlate(cfg, dir / "a.ttg", dir / "b.ttg", out.path());
    EXPECT_EQ(testutil::slurp(out / "histogram.csv"), histogram_csv(normalize(brute_force_correlate(a.times, b.times, cfg))));
}

TEST(Commands, FitFlatHistogram) {
    testutil::TempDir dir, out;
    auto h = empty_histogram(CorrelationConfig{200, -10'000, 10'000, 3'000});
    std::fill(h.counts.begin(), h.counts.end(), 50);
    write_histogram_csv(dir / "flat.csv", normalize(h));
    const auto r = cmd_fit(dir / "flat.csv", FitModel::Eq1, std::nullopt, std::nullopt, 3000, out.path());
    EXPECT_EQ(r.a, 0.0);
    EXPECT_THROW(cmd_fit(dir / "flat.csv", FitModel::Eq2, std::nullopt, std::nullopt, 3000, out / "x"), InvalidArgument);
}

TEST(Commands, BudgetTable) {
    testutil::TempDir dir;
    const auto c = load_config(kConfigs / "converted_2mw.json");
    const auto rows = cmd_budget(c, {0.0, 0.077, 0.150}, dir.path());
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_NEAR(rows[2].background_generated, 85e3, 1e-6);
    EXPECT_NEAR(rows[1].coincidences.ss, 65, 9);
    EXPECT_EQ(testutil::slurp(dir / "budget.csv"), budget_table_csv(rows));
    expect_manifest_consistent(dir.path());
}

TEST(Commands, PipelineRerunFromManifestIsByteIdentical) {
    testutil::TempDir a, b;
    const auto c = shortened("qd_direct_2mw.json", 1'000'000'000'000);
    cmd_pipeline(c, a.path(), with_threads(2));
    const auto again = load_config(a / "manifest.json");
    cmd_pipeline(again, b.path(), with_threads(1));
    for (const char* f : {"histogram.csv", "histogram.meta.json", "fit.json", "budget.json"}) {
        EXPECT_EQ(testutil::slurp(a / f), testutil::slurp(b / f)) << f;
    }
    expect_manifest_consistent(a.path());
    EXPECT_FALSE(fs::exists(a / "checkpoint.json"));
}
