#ifndef G2SIM_G2SIM_H
#define G2SIM_G2SIM_H

/* C interface to the g2sim library. All functions return a g2sim_status;
 * on failure g2sim_last_error() describes the problem (thread-local, valid
 * until the next call on the same thread). Handles are opaque and owned by
 * the caller, who releases them with the matching *_free function. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define G2SIM_API __declspec(dllexport)
#else
#define G2SIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum g2sim_status {
    G2SIM_OK = 0,
    G2SIM_ERR_INVALID_ARGUMENT = 1,
    G2SIM_ERR_CONFIG = 2,
    G2SIM_ERR_FORMAT = 3,
    G2SIM_ERR_FIT = 4,
    G2SIM_ERR_DEGENERATE_DATA = 5,
    G2SIM_ERR_IO = 6,
    G2SIM_ERR_INTERNAL = 7
} g2sim_status;

typedef struct g2sim_config g2sim_config;
typedef struct g2sim_stream g2sim_stream;
typedef struct g2sim_histogram g2sim_histogram;

typedef enum g2sim_fit_model { G2SIM_FIT_EQ1 = 1, G2SIM_FIT_EQ2 = 2 } g2sim_fit_model;

typedef struct g2sim_fit_result {
    int model; /* g2sim_fit_model */
    double a, tau0, t0, sigma, g2_at_dip;
    double a_err, tau0_err, t0_err, sigma_err;
    double chi2_reduced;
    int n_points, n_free, iterations, degenerate;
} g2sim_fit_result;

typedef struct g2sim_budget_row {
    double pump_power, eta, signal_at_splitter, background_generated, background_at_splitter, sbr;
    double r_s1, r_s2, r_b1, r_b2;
    double ss, sb, bb, total, ss_err, sb_err, bb_err;
} g2sim_budget_row;

typedef struct g2sim_pipeline_summary {
    double flat_level;
    double rate1, rate2; /* measured singles, counts/s */
    int has_fit;
    g2sim_fit_result fit;
    int has_corrected;
    double g2_corrected;
    g2sim_budget_row expected;
} g2sim_pipeline_summary;

G2SIM_API const char* g2sim_version(void);
G2SIM_API const char* g2sim_last_error(void);
G2SIM_API const char* g2sim_status_name(g2sim_status status);

/* Configuration. */
G2SIM_API g2sim_status g2sim_config_load(const char* path, g2sim_config** out);
G2SIM_API g2sim_status g2sim_config_parse(const char* json_text, g2sim_config** out);
G2SIM_API g2sim_status g2sim_config_set_seed(g2sim_config* cfg, uint64_t seed);
G2SIM_API g2sim_status g2sim_config_set_duration(g2sim_config* cfg, int64_t duration_ps);
G2SIM_API g2sim_status g2sim_config_get_seed(const g2sim_config* cfg, uint64_t* out);
/* Canonical JSON; release with g2sim_string_free. */
G2SIM_API g2sim_status g2sim_config_to_json(const g2sim_config* cfg, char** out);
G2SIM_API void g2sim_config_free(g2sim_config* cfg);
G2SIM_API void g2sim_string_free(char* s);

/* Commands; each writes into out_dir with a manifest. threads = 0 picks the hardware count. */
G2SIM_API g2sim_status g2sim_cmd_simulate(const g2sim_config* cfg, const char* out_dir, int all_stages);
G2SIM_API g2sim_status g2sim_cmd_convert(const g2sim_config* cfg, const char* input, const char* out_dir);
G2SIM_API g2sim_status g2sim_cmd_detect(const g2sim_config* cfg, const char* input, const char* out_dir);
/* cfg may be NULL for the default correlation settings. */
G2SIM_API g2sim_status g2sim_cmd_correlate(const g2sim_config* cfg, const char* file1, const char* file2,
                                           const char* out_dir, unsigned threads);
/* sigma and t0 are read only for G2SIM_FIT_EQ2. */
G2SIM_API g2sim_status g2sim_cmd_fit(const char* histogram_csv, g2sim_fit_model model, double sigma, double t0,
                                     int64_t exclusion_halfwidth, const char* out_dir, g2sim_fit_result* out);
/* powers may be NULL (n = 0) to use the config's power_sweep; rows receives up to max_rows entries. */
G2SIM_API g2sim_status g2sim_cmd_budget(const g2sim_config* cfg, const double* powers, size_t n, const char* out_dir,
                                        g2sim_budget_row* rows, size_t max_rows, size_t* n_rows);
G2SIM_API g2sim_status g2sim_cmd_pipeline(const g2sim_config* cfg, const char* out_dir, unsigned threads,
                                          g2sim_pipeline_summary* out);

/* Tag streams. */
G2SIM_API g2sim_status g2sim_stream_read(const char* path, g2sim_stream** out);
G2SIM_API g2sim_status g2sim_stream_write(const g2sim_stream* s, const char* path);
G2SIM_API g2sim_status g2sim_stream_from_times(const int64_t* times, size_t n, int64_t duration_ps, g2sim_stream** out);
G2SIM_API g2sim_status g2sim_stream_gen_coherent(double rate, int64_t duration_ps, uint64_t seed, g2sim_stream** out);
G2SIM_API size_t g2sim_stream_size(const g2sim_stream* s);
G2SIM_API int64_t g2sim_stream_duration(const g2sim_stream* s);
/* Borrowed pointer, valid until the stream is freed. */
G2SIM_API const int64_t* g2sim_stream_times(const g2sim_stream* s);
G2SIM_API void g2sim_stream_free(g2sim_stream* s);

/* Histograms. */
G2SIM_API g2sim_status g2sim_correlate(const g2sim_stream* s1, const g2sim_stream* s2, int64_t bin_width,
                                       int64_t tau_min, int64_t tau_max, int64_t exclusion_halfwidth,
                                       g2sim_histogram** out);
G2SIM_API g2sim_status g2sim_histogram_read_csv(const char* path, int64_t exclusion_halfwidth, g2sim_histogram** out);
G2SIM_API g2sim_status g2sim_histogram_normalize(g2sim_histogram* h);
G2SIM_API size_t g2sim_histogram_num_bins(const g2sim_histogram* h);
G2SIM_API double g2sim_histogram_bin_center(const g2sim_histogram* h, size_t k);
G2SIM_API const uint64_t* g2sim_histogram_counts(const g2sim_histogram* h);
/* NULL until normalized. */
G2SIM_API const double* g2sim_histogram_normalized(const g2sim_histogram* h);
G2SIM_API double g2sim_histogram_flat_level(const g2sim_histogram* h);
G2SIM_API void g2sim_histogram_free(g2sim_histogram* h);

/* Analysis. */
G2SIM_API g2sim_status g2sim_fit_dip(const g2sim_histogram* h, g2sim_fit_result* out);
G2SIM_API g2sim_status g2sim_fit_convolved_dip(const g2sim_histogram* h, double sigma, double t0, g2sim_fit_result* out);
G2SIM_API double g2sim_eval_convolved_g2(double a, double tau0, double t0, double sigma, double tau);
/* Writes the one-line fit summary into buf (truncated to size). */
G2SIM_API g2sim_status g2sim_fit_summary(const g2sim_fit_result* r, char* buf, size_t size);

#ifdef __cplusplus
}
#endif

#endif
