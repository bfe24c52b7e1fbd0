#include "g2sim/g2sim.h"

#include <cstdlib>
#include <algorithm>
#include <cstring>
#include <new>
#include <string>

#include "g2sim/commands.hpp"
#include "g2sim/errors.hpp"

struct g2sim_config {
    g2sim::PipelineConfig cfg;
};
struct g2sim_stream {
    g2sim::TagStream s;
};
struct g2sim_histogram {
    g2sim::Histogram h;
};

namespace {

thread_local std::string last_error;

g2sim_status status_of(g2sim::ErrorKind k) {
    switch (k) {
        case g2sim::ErrorKind::InvalidArgument: return G2SIM_ERR_INVALID_ARGUMENT;
        case g2sim::ErrorKind::Config: return G2SIM_ERR_CONFIG;
        case g2sim::ErrorKind::Format: return G2SIM_ERR_FORMAT;
        case g2sim::ErrorKind::Fit: return G2SIM_ERR_FIT;
        case g2sim::ErrorKind::DegenerateData: return G2SIM_ERR_DEGENERATE_DATA;
        case g2sim::ErrorKind::Io: return G2SIM_ERR_IO;
    }
    return G2SIM_ERR_INTERNAL;
}

template <typename F>
g2sim_status guarded(F&& f) {
    try {
        last_error.clear();
        f();
        return G2SIM_OK;
    } catch (const g2sim::Error& e) {
        last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return G2SIM_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return G2SIM_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown error";
        return G2SIM_ERR_INTERNAL;
    }
}

void require(bool ok, const char* what) {
    if (!ok) throw g2sim::InvalidArgument(what);
}

void fill(g2sim_fit_result* out, const g2sim::FitResult& r) {
    out->model = r.model == "eq1" ? G2SIM_FIT_EQ1 : G2SIM_FIT_EQ2;
    out->a = r.a;
    out->tau0 = r.tau0;
    out->t0 = r.t0;
    out->sigma = r.sigma;
    out->g2_at_dip = r.g2_at_dip;
    out->a_err = r.a_err;
    out->tau0_err = r.tau0_err;
    out->t0_err = r.t0_err;
    out->sigma_err = r.sigma_err;
    out->chi2_reduced = r.chi2_reduced;
    out->n_points = r.n_points;
    out->n_free = r.n_free;
    out->iterations = r.iterations;
    out->degenerate = r.degenerate ? 1 : 0;
}

g2sim::FitResult unfill(const g2sim_fit_result* in) {
    g2sim::FitResult r;
    r.model = in->model == G2SIM_FIT_EQ1 ? "eq1" : "eq2";
    r.a = in->a;
    r.tau0 = in->tau0;
    r.t0 = in->t0;
    r.sigma = in->sigma;
    r.g2_at_dip = in->g2_at_dip;
    r.a_err = in->a_err;
    r.tau0_err = in->tau0_err;
    return r;
}

void fill(g2sim_budget_row* out, const g2sim::RateBudget& b) {
    const auto& c = b.coincidences;
    *out = g2sim_budget_row{b.pump_power, b.eta, b.signal_at_splitter, b.background_generated,
                            b.background_at_splitter, b.sbr, c.rates.r_s1, c.rates.r_s2, c.rates.r_b1,
                            c.rates.r_b2, c.ss, c.sb, c.bb, c.total, c.ss_err, c.sb_err, c.bb_err};
}

char* dup_string(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

}  // namespace

extern "C" {

const char* g2sim_version(void) { return g2sim::kSoftwareVersion; }
const char* g2sim_last_error(void) { return last_error.c_str(); }

const char* g2sim_status_name(g2sim_status status) {
    switch (status) {
        case G2SIM_OK: return "ok";
        case G2SIM_ERR_INVALID_ARGUMENT: return "invalid argument";
        case G2SIM_ERR_CONFIG: return "config error";
        case G2SIM_ERR_FORMAT: return "format error";
        case G2SIM_ERR_FIT: return "fit failure";
        case G2SIM_ERR_DEGENERATE_DATA: return "degenerate data";
        case G2SIM_ERR_IO: return "i/o error";
        case G2SIM_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

g2sim_status g2sim_config_load(const char* path, g2sim_config** out) {
    return guarded([&] {
        require(path && out, "null argument");
        *out = new g2sim_config{g2sim::load_config(path)};
    });
}

g2sim_status g2sim_config_parse(const char* json_text, g2sim_config** out) {
    return guarded([&] {
        require(json_text && out, "null argument");
        *out = new g2sim_config{g2sim::parse_config(json_text)};
    });
}

g2sim_status g2sim_config_set_seed(g2sim_config* cfg, uint64_t seed) {
    return guarded([&] {
        require(cfg, "null config");
        cfg->cfg.seed = seed;
        cfg->cfg.source.seed = seed;
    });
}

g2sim_status g2sim_config_set_duration(g2sim_config* cfg, int64_t duration_ps) {
    return guarded([&] {
        require(cfg, "null config");
        auto copy = cfg->cfg;
        copy.duration = duration_ps;
        copy.source.duration = duration_ps;
        g2sim::validate_config(copy);
        cfg->cfg = copy;
    });
}

g2sim_status g2sim_config_get_seed(const g2sim_config* cfg, uint64_t* out) {
    return guarded([&] {
        require(cfg && out, "null argument");
        *out = cfg->cfg.seed;
    });
}

g2sim_status g2sim_config_to_json(const g2sim_config* cfg, char** out) {
    return guarded([&] {
        require(cfg && out, "null argument");
        *out = dup_string(g2sim::config_to_json(cfg->cfg));
    });
}

void g2sim_config_free(g2sim_config* cfg) { delete cfg; }
void g2sim_string_free(char* s) { std::free(s); }

g2sim_status g2sim_cmd_simulate(const g2sim_config* cfg, const char* out_dir, int all_stages) {
    return guarded([&] {
        require(cfg && out_dir, "null argument");
        g2sim::SimulateOptions opts;
        opts.all_stages = all_stages != 0;
        g2sim::cmd_simulate(cfg->cfg, out_dir, opts);
    });
}

g2sim_status g2sim_cmd_convert(const g2sim_config* cfg, const char* input, const char* out_dir) {
    return guarded([&] {
        require(cfg && input && out_dir, "null argument");
        g2sim::cmd_convert(cfg->cfg, input, out_dir);
    });
}

g2sim_status g2sim_cmd_detect(const g2sim_config* cfg, const char* input, const char* out_dir) {
    return guarded([&] {
        require(cfg && input && out_dir, "null argument");
        g2sim::cmd_detect(cfg->cfg, input, out_dir);
    });
}

g2sim_status g2sim_cmd_correlate(const g2sim_config* cfg, const char* file1, const char* file2, const char* out_dir,
                                 unsigned threads) {
    return guarded([&] {
        require(file1 && file2 && out_dir, "null argument");
        const g2sim::CorrelationConfig cc = cfg ? cfg->cfg.correlation : g2sim::CorrelationConfig{};
        g2sim::cmd_correlate(cc, file1, file2, out_dir, threads);
    });
}

g2sim_status g2sim_cmd_fit(const char* histogram_csv, g2sim_fit_model model, double sigma, double t0,
                           int64_t exclusion_halfwidth, const char* out_dir, g2sim_fit_result* out) {
    return guarded([&] {
        require(histogram_csv && out_dir, "null argument");
        require(model == G2SIM_FIT_EQ1 || model == G2SIM_FIT_EQ2, "unknown fit model");
        const bool eq2 = model == G2SIM_FIT_EQ2;
        const auto r = g2sim::cmd_fit(histogram_csv, eq2 ? g2sim::FitModel::Eq2 : g2sim::FitModel::Eq1,
                                      eq2 ? std::optional<double>(sigma) : std::nullopt,
                                      eq2 ? std::optional<double>(t0) : std::nullopt, exclusion_halfwidth, out_dir);
        if (out) fill(out, r);
    });
}

g2sim_status g2sim_cmd_budget(const g2sim_config* cfg, const double* powers, size_t n, const char* out_dir,
                              g2sim_budget_row* rows, size_t max_rows, size_t* n_rows) {
    return guarded([&] {
        require(cfg && out_dir, "null argument");
        require(n == 0 || powers, "null powers");
        const std::vector<double> grid = n ? std::vector<double>(powers, powers + n) : std::vector<double>{};
        const auto result = g2sim::cmd_budget(cfg->cfg, grid, out_dir);
        if (n_rows) *n_rows = result.size();
        for (size_t i = 0; rows && i < result.size() && i < max_rows; ++i) fill(&rows[i], result[i]);
    });
}

g2sim_status g2sim_cmd_pipeline(const g2sim_config* cfg, const char* out_dir, unsigned threads,
                                g2sim_pipeline_summary* out) {
    return guarded([&] {
        require(cfg && out_dir, "null argument");
        g2sim::RunOptions opts;
        opts.threads = threads;
        const auto r = g2sim::cmd_pipeline(cfg->cfg, out_dir, opts);
        if (!out) return;
        *out = g2sim_pipeline_summary{};
        out->flat_level = r.histogram.flat_level;
        out->rate1 = r.histogram.meta.rate1.value_or(0.0);
        out->rate2 = r.histogram.meta.rate2.value_or(0.0);
        out->has_fit = r.fit ? 1 : 0;
        if (r.fit) fill(&out->fit, *r.fit);
        out->has_corrected = r.corrected_g2 ? 1 : 0;
        out->g2_corrected = r.corrected_g2.value_or(0.0);
        fill(&out->expected, r.expected);
    });
}

g2sim_status g2sim_stream_read(const char* path, g2sim_stream** out) {
    return guarded([&] {
        require(path && out, "null argument");
        *out = new g2sim_stream{g2sim::read_tag_file(path)};
    });
}

g2sim_status g2sim_stream_write(const g2sim_stream* s, const char* path) {
    return guarded([&] {
        require(s && path, "null argument");
        g2sim::write_tag_file(path, s->s);
    });
}

g2sim_status g2sim_stream_from_times(const int64_t* times, size_t n, int64_t duration_ps, g2sim_stream** out) {
    return guarded([&] {
        require(out && (n == 0 || times), "null argument");
        g2sim::TagStream s;
        s.duration = duration_ps;
        s.times.assign(times, times + n);
        s.channels.assign(n, 0);
        g2sim::validate_stream(s);
        *out = new g2sim_stream{std::move(s)};
    });
}

g2sim_status g2sim_stream_gen_coherent(double rate, int64_t duration_ps, uint64_t seed, g2sim_stream** out) {
    return guarded([&] {
        require(out, "null argument");
        *out = new g2sim_stream{g2sim::gen_coherent_stream(rate, duration_ps, seed)};
    });
}

size_t g2sim_stream_size(const g2sim_stream* s) { return s ? s->s.size() : 0; }
int64_t g2sim_stream_duration(const g2sim_stream* s) { return s ? s->s.duration : 0; }
const int64_t* g2sim_stream_times(const g2sim_stream* s) { return s ? s->s.times.data() : nullptr; }
void g2sim_stream_free(g2sim_stream* s) { delete s; }

g2sim_status g2sim_correlate(const g2sim_stream* s1, const g2sim_stream* s2, int64_t bin_width, int64_t tau_min,
                             int64_t tau_max, int64_t exclusion_halfwidth, g2sim_histogram** out) {
    return guarded([&] {
        require(s1 && s2 && out, "null argument");
        const g2sim::CorrelationConfig cfg{bin_width, tau_min, tau_max, exclusion_halfwidth};
        *out = new g2sim_histogram{g2sim::correlate(s1->s, s2->s, cfg)};
    });
}

g2sim_status g2sim_histogram_read_csv(const char* path, int64_t exclusion_halfwidth, g2sim_histogram** out) {
    return guarded([&] {
        require(path && out, "null argument");
        *out = new g2sim_histogram{g2sim::read_histogram_csv(path, exclusion_halfwidth)};
    });
}

g2sim_status g2sim_histogram_normalize(g2sim_histogram* h) {
    return guarded([&] {
        require(h, "null histogram");
        h->h = g2sim::normalize(h->h);
    });
}

size_t g2sim_histogram_num_bins(const g2sim_histogram* h) { return h ? h->h.size() : 0; }
double g2sim_histogram_bin_center(const g2sim_histogram* h, size_t k) {
    return h && k < h->h.size() ? h->h.config.bin_center(k) : 0.0;
}
const uint64_t* g2sim_histogram_counts(const g2sim_histogram* h) { return h ? h->h.counts.data() : nullptr; }
const double* g2sim_histogram_normalized(const g2sim_histogram* h) {
    return h && h->h.is_normalized() ? h->h.normalized.data() : nullptr;
}
double g2sim_histogram_flat_level(const g2sim_histogram* h) { return h ? h->h.flat_level : 0.0; }
void g2sim_histogram_free(g2sim_histogram* h) { delete h; }

g2sim_status g2sim_fit_dip(const g2sim_histogram* h, g2sim_fit_result* out) {
    return guarded([&] {
        require(h && out, "null argument");
        fill(out, g2sim::fit_dip(h->h));
    });
}

g2sim_status g2sim_fit_convolved_dip(const g2sim_histogram* h, double sigma, double t0, g2sim_fit_result* out) {
    return guarded([&] {
        require(h && out, "null argument");
        fill(out, g2sim::fit_convolved_dip(h->h, sigma, t0));
    });
}

double g2sim_eval_convolved_g2(double a, double tau0, double t0, double sigma, double tau) {
    return g2sim::eval_convolved_g2(a, tau0, t0, sigma, tau);
}

g2sim_status g2sim_fit_summary(const g2sim_fit_result* r, char* buf, size_t size) {
    return guarded([&] {
        require(r && buf && size > 0, "null argument");
        const std::string s = g2sim::summary_line(unfill(r));
        const size_t n = std::min(size - 1, s.size());
        std::memcpy(buf, s.data(), n);
        buf[n] = '\0';
    });
}

}  // extern "C"
