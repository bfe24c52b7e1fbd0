#include "g2sim/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <memory>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "g2sim/digest.hpp"
#include "g2sim/errors.hpp"
#include "g2sim/log.hpp"

namespace g2sim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Tracks one command invocation: registered outputs are deleted unless the
// run commits, and commit writes the manifest exactly once.
class RunRecord {
public:
    RunRecord(const fs::path& out_dir, std::string command)
        : dir_(out_dir), command_(std::move(command)), started_(utc_now()), t0_(std::chrono::steady_clock::now()) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
        if (fs::exists(dir_ / "manifest.json")) {
            throw IoError(dir_.string() + " already holds a manifest; manifests are write-once");
        }
    }
    RunRecord(const RunRecord&) = delete;
    RunRecord& operator=(const RunRecord&) = delete;

    ~RunRecord() {
        if (committed_) return;
        for (const auto& p : outputs_) {
            std::error_code ec;
            fs::remove(dir_ / p, ec);
        }
    }

    fs::path output(const std::string& name) {
        outputs_.push_back(name);
        return dir_ / name;
    }
    void input(const fs::path& p) { inputs_.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}}); }
    void arg(const std::string& key, json value) { args_[key] = std::move(value); }
    void config(const PipelineConfig& cfg) {
        config_ = json::parse(config_to_json(cfg));
        seed_ = cfg.seed;
    }

    void commit() {
        json outputs = json::array();
        for (const auto& name : outputs_) {
            const fs::path p = dir_ / name;
            outputs.push_back({{"path", name}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
        }
        json m{{"manifest_version", 1},
               {"software", kSoftwareVersion},
               {"command", command_},
               {"arguments", args_.is_null() ? json::object() : args_},
               {"rng", {{"algorithm", kRngAlgorithm}, {"seed", seed_ ? json(*seed_) : json(nullptr)}}},
               {"config", config_},
               {"inputs", inputs_.empty() ? json::array() : json(inputs_)},
               {"outputs", outputs},
               {"started_utc", started_},
               {"finished_utc", utc_now()},
               {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count()}};
        const fs::path path = dir_ / "manifest.json";
        std::FILE* f = std::fopen(path.c_str(), "wx");
        if (!f) throw IoError("cannot create " + path.string() + " (manifests are write-once)");
        const std::string text = m.dump(2) + "\n";
        const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
        if (std::fclose(f) != 0 || !ok) throw IoError("write failed: " + path.string());
        committed_ = true;
    }

    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::string command_;
    std::string started_;
    std::chrono::steady_clock::time_point t0_;
    std::vector<std::string> outputs_;
    std::vector<json> inputs_;
    json args_;
    json config_;
    std::optional<std::uint64_t> seed_;
    bool committed_ = false;
};

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json histogram_meta_json(const Histogram& h) {
    const auto& c = h.config;
    return json{{"config",
                 {{"bin_width", c.bin_width},
                  {"tau_min", c.tau_min},
                  {"tau_max", c.tau_max},
                  {"exclusion_halfwidth", c.exclusion_halfwidth}}},
                {"num_bins", h.size()},
                {"total_counts", h.total()},
                {"flat_level", h.flat_level},
                {"integration_time_s", h.meta.integration_time_s},
                {"rate1", h.meta.rate1 ? json(*h.meta.rate1) : json(nullptr)},
                {"rate2", h.meta.rate2 ? json(*h.meta.rate2) : json(nullptr)},
                {"input_digest", h.meta.input_digest}};
}

json fit_json(const FitResult& r) {
    return json{{"model", r.model},
                {"a", r.a},
                {"tau0", r.tau0},
                {"t0", r.t0},
                {"sigma", r.sigma},
                {"g2_at_dip", r.g2_at_dip},
                {"a_err", number_or_null(r.a_err)},
                {"tau0_err", number_or_null(r.tau0_err)},
                {"t0_err", number_or_null(r.t0_err)},
                {"sigma_err", number_or_null(r.sigma_err)},
                {"chi2_reduced", number_or_null(r.chi2_reduced)},
                {"n_points", r.n_points},
                {"n_free", r.n_free},
                {"iterations", r.iterations},
                {"degenerate", r.degenerate},
                {"summary", summary_line(r)}};
}

json budget_json(const RateBudget& b) {
    const auto& c = b.coincidences;
    const auto& q = c.rates;
    return json{{"pump_power", b.pump_power},
                {"eta", b.eta},
                {"signal_at_splitter", b.signal_at_splitter},
                {"background_generated", b.background_generated},
                {"background_at_splitter", b.background_at_splitter},
                {"sbr", number_or_null(b.sbr)},
                {"r_s1", q.r_s1},
                {"r_s2", q.r_s2},
                {"r_b1", q.r_b1},
                {"r_b2", q.r_b2},
                {"bin_width", q.bin_width},
                {"T", q.t},
                {"ss", c.ss},
                {"sb", c.sb},
                {"bb", c.bb},
                {"total", c.total},
                {"ss_err", c.ss_err},
                {"sb_err", c.sb_err},
                {"bb_err", c.bb_err}};
}

void write_histogram(RunRecord& rec, const Histogram& h) {
    write_histogram_csv(rec.output("histogram.csv"), h);
    write_text(rec.output("histogram.meta.json"), histogram_meta_json(h).dump(2) + "\n");
}

TagStream shifted(const TagStream& s, Picoseconds offset) {
    TagStream out = s;
    for (auto& t : out.times) t += offset;
    return out;
}

}  // namespace

std::string fit_result_json(const FitResult& r, int indent) { return fit_json(r).dump(indent); }

void cmd_simulate(const PipelineConfig& cfg, const fs::path& out_dir, const SimulateOptions& options) {
    validate_config(cfg);
    RunRecord rec(out_dir, "simulate");
    rec.config(cfg);
    rec.arg("all_stages", options.all_stages);

    std::vector<std::string> names{"source.ttg"};
    if (options.all_stages) names.insert(names.end(), {"signal.ttg", "background.ttg", "det1.ttg", "det2.ttg"});
    std::vector<fs::path> paths;
    for (const auto& n : names) paths.push_back(rec.output(n));

    const fs::path ckpt = out_dir / "checkpoint.json";
    const std::string digest = sha256_hex(config_to_json(cfg) + (options.all_stages ? "+all" : ""));
    std::uint64_t first = 0;
    std::vector<std::uint64_t> resume_records;
    if (fs::exists(ckpt)) {
        const json j = json::parse(read_text(ckpt));
        bool files_present = true;
        for (const auto& p : paths) files_present = files_present && fs::exists(p);
        if (j.value("config_digest", "") == digest && files_present) {
            first = j.at("next_segment").get<std::uint64_t>();
            resume_records = j.at("records").get<std::vector<std::uint64_t>>();
        } else {
            warn("checkpoint " + ckpt.string() + " belongs to a different configuration; starting over");
        }
    }

    std::vector<std::unique_ptr<TagFileWriter>> writers;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        if (!resume_records.empty()) {
            writers.push_back(std::make_unique<TagFileWriter>(paths[i], resume_records.at(i), segment_start(cfg, first)));
        } else {
            writers.push_back(std::make_unique<TagFileWriter>(paths[i], cfg.duration, names[i].substr(0, names[i].size() - 4)));
        }
    }

    const std::uint64_t n = segment_count(cfg);
    auto last_save = std::chrono::steady_clock::now();
    try {
        for (std::uint64_t i = first; i < n; ++i) {
            const SegmentStreams s = simulate_segment(cfg, i, true);
            const Picoseconds off = segment_start(cfg, i);
            writers[0]->append(shifted(s.source, off));
            if (options.all_stages) {
                writers[1]->append(shifted(s.signal, off));
                writers[2]->append(shifted(s.background, off));
                writers[3]->append(shifted(s.det1, off));
                writers[4]->append(shifted(s.det2, off));
            }
            const auto now = std::chrono::steady_clock::now();
            if (i + 1 < n && std::chrono::duration<double>(now - last_save).count() >= 30.0) {
                // Records are flushed by close(); reopen in append mode to keep going.
                std::vector<std::uint64_t> records;
                for (std::size_t w = 0; w < writers.size(); ++w) {
                    writers[w]->close();
                    records.push_back(writers[w]->records());
                    writers[w] = std::make_unique<TagFileWriter>(paths[w], records.back(), segment_start(cfg, i + 1));
                }
                write_text(ckpt, json{{"config_digest", digest}, {"next_segment", i + 1}, {"records", records}}.dump() + "\n");
                last_save = now;
            }
        }
        for (auto& w : writers) w->close();
    } catch (...) {
        // The partial tag files are about to be removed, so the checkpoint is void.
        std::error_code ec;
        fs::remove(ckpt, ec);
        throw;
    }
    std::error_code ec;
    fs::remove(ckpt, ec);
    rec.commit();
}

void cmd_convert(const PipelineConfig& cfg, const fs::path& input, const fs::path& out_dir) {
    validate_config(cfg);
    RunRecord rec(out_dir, "convert");
    rec.config(cfg);
    rec.input(input);
    const TagStream in = read_tag_file(input);
    const RateBudget b = rate_budget(cfg, cfg.pump_power);

    TagStream s = convert_stream(in, 1.0 - cfg.coupler_loss, derive_seed(cfg.seed, rng_stream::kCoupler));
    if (cfg.conversion_enabled) {
        s = convert_stream(s, b.eta, derive_seed(cfg.seed, rng_stream::kConversion));
        const double filter_t = cfg.filter_enabled ? cfg.filter.peak_transmission : 1.0;
        s = convert_stream(s, optics_transmission(cfg) * filter_t, derive_seed(cfg.seed, rng_stream::kFilter));
        if (b.background_at_splitter > 0.0) {
            const TagStream bg = gen_uspdc_stream(b.background_at_splitter, in.duration, derive_seed(cfg.seed, rng_stream::kUspdc));
            s = merge_streams(s, bg, in.origin_label + " converted");
        }
    }
    s.duration = in.duration;
    write_tag_file(rec.output("converted.ttg"), s);
    rec.commit();
}

void cmd_detect(const PipelineConfig& cfg, const fs::path& input, const fs::path& out_dir) {
    validate_config(cfg);
    RunRecord rec(out_dir, "detect");
    rec.config(cfg);
    rec.input(input);
    const TagStream in = read_tag_file(input);
    auto [a1, a2] = hbt_split(in, cfg.hbt.split_ratio, cfg.seed);
    TagStream d1 = detect(a1, cfg.hbt.det1, cfg.seed, rng_stream::kDetector1);
    TagStream d2 = detect(a2, cfg.hbt.det2, cfg.seed, rng_stream::kDetector2);
    relabel(d1, 1);
    relabel(d2, 2);
    write_tag_file(rec.output("det1.ttg"), d1);
    write_tag_file(rec.output("det2.ttg"), d2);
    rec.commit();
}

Histogram cmd_correlate(const CorrelationConfig& cfg, const fs::path& file1, const fs::path& file2,
                        const fs::path& out_dir, unsigned threads) {
    validate_correlation(cfg);
    RunRecord rec(out_dir, "correlate");
    rec.input(file1);
    rec.input(file2);
    rec.arg("correlation", {{"bin_width", cfg.bin_width},
                            {"tau_min", cfg.tau_min},
                            {"tau_max", cfg.tau_max},
                            {"exclusion_halfwidth", cfg.exclusion_halfwidth}});
    const TagStream s1 = read_tag_file(file1);
    const TagStream s2 = read_tag_file(file2);
    Histogram h = threads == 1 ? correlate(s1, s2, cfg) : correlate_parallel(s1.times, s2.times, cfg, threads);
    const double t_s = static_cast<double>(std::max(s1.duration, s2.duration)) / kPsPerSecond;
    h.meta.integration_time_s = t_s;
    h.meta.rate1 = s1.rate();
    h.meta.rate2 = s2.rate();
    h.meta.input_digest = sha256_hex(sha256_file(file1) + sha256_file(file2));
    h = normalize(std::move(h));
    write_histogram(rec, h);
    rec.commit();
    return h;
}

FitResult cmd_fit(const fs::path& histogram_csv, FitModel model, std::optional<double> sigma, std::optional<double> t0,
                  Picoseconds exclusion_halfwidth, const fs::path& out_dir) {
    if (model == FitModel::Eq2 && (!sigma || !t0)) throw InvalidArgument("eq2 fits need both sigma and t0");
    RunRecord rec(out_dir, "fit");
    rec.input(histogram_csv);
    rec.arg("model", model == FitModel::Eq1 ? "eq1" : "eq2");
    if (sigma) rec.arg("sigma", *sigma);
    if (t0) rec.arg("t0", *t0);
    rec.arg("exclusion_halfwidth", exclusion_halfwidth);
    Histogram h = read_histogram_csv(histogram_csv, exclusion_halfwidth);
    if (!h.is_normalized()) h = normalize(std::move(h));
    const FitResult r = model == FitModel::Eq1 ? fit_dip(h) : fit_convolved_dip(h, *sigma, *t0);
    write_text(rec.output("fit.json"), fit_json(r).dump(2) + "\n");
    rec.commit();
    return r;
}

std::vector<RateBudget> cmd_budget(const PipelineConfig& cfg, const std::vector<double>& powers, const fs::path& out_dir) {
    validate_config(cfg);
    RunRecord rec(out_dir, "budget");
    rec.config(cfg);
    if (!powers.empty()) rec.arg("powers", powers);
    const auto rows = rate_budget_sweep(cfg, powers);
    write_text(rec.output("budget.csv"), budget_table_csv(rows));
    rec.commit();
    return rows;
}

PipelineReport cmd_pipeline(const PipelineConfig& cfg, const fs::path& out_dir, const RunOptions& options) {
    validate_config(cfg);
    RunRecord rec(out_dir, "pipeline");
    rec.config(cfg);
    RunOptions opts = options;
    if (opts.checkpoint.empty()) opts.checkpoint = out_dir / "checkpoint.json";
    PipelineReport report = run_pipeline(cfg, opts);
    if (!report.complete) return report;

    write_histogram(rec, report.histogram);
    if (report.fit) write_text(rec.output("fit.json"), fit_json(*report.fit).dump(2) + "\n");
    json b = budget_json(report.expected);
    json summary{{"expected", b},
                 {"measured_singles", {{"det1", report.singles1}, {"det2", report.singles2}}},
                 {"measured_flat_level", report.histogram.flat_level},
                 {"g2_raw_at_dip", report.fit ? json(report.fit->g2_at_dip) : json(nullptr)},
                 {"g2_corrected_at_dip", report.corrected_g2 ? json(*report.corrected_g2) : json(nullptr)}};
    write_text(rec.output("budget.json"), summary.dump(2) + "\n");
    rec.commit();
    return report;
}

}  // namespace g2sim
