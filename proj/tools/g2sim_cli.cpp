// g2sim command-line front end. Talks to the library only through the C API.
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "g2sim/g2sim.h"

namespace {

struct Globals {
    std::string config;
    std::optional<uint64_t> seed;
    std::string out = ".";
    unsigned threads = 1;
};

int exit_code(g2sim_status s) {
    switch (s) {
        case G2SIM_OK: return 0;
        case G2SIM_ERR_CONFIG: return 2;
        case G2SIM_ERR_FORMAT: return 3;
        case G2SIM_ERR_FIT:
        case G2SIM_ERR_DEGENERATE_DATA: return 4;
        default: return 1;
    }
}

int fail(g2sim_status s) {
    std::fprintf(stderr, "g2sim: %s: %s\n", g2sim_status_name(s), g2sim_last_error());
    return exit_code(s);
}

class ConfigHandle {
public:
    ~ConfigHandle() { g2sim_config_free(cfg_); }
    g2sim_status load(const Globals& g) {
        if (g.config.empty()) {
            std::fprintf(stderr, "g2sim: --config is required for this command\n");
            return G2SIM_ERR_CONFIG;
        }
        g2sim_status s = g2sim_config_load(g.config.c_str(), &cfg_);
        if (s == G2SIM_OK && g.seed) s = g2sim_config_set_seed(cfg_, *g.seed);
        return s;
    }
    const g2sim_config* get() const { return cfg_; }

private:
    g2sim_config* cfg_ = nullptr;
};

void print_fit(const g2sim_fit_result& r) {
    char line[256];
    if (g2sim_fit_summary(&r, line, sizeof line) == G2SIM_OK) std::printf("%s\n", line);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo HBT simulator for a frequency-converted quantum-dot photon source"};
    app.set_version_flag("--version", std::string(g2sim_version()));
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "Config JSON (or a run manifest)");
    app.add_option("--seed", g.seed, "Override the config seed");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads, 0 = hardware count")->capture_default_str();

    bool all_stages = false;
    auto* simulate = app.add_subcommand("simulate", "Generate the source tag stream");
    simulate->add_flag("--all-stages", all_stages, "Also write converted, background and detector streams");

    std::string input;
    auto* convert = app.add_subcommand("convert", "Coupler, conversion and filter thinning plus USPDC background");
    convert->add_option("input", input, "Source tag file")->required()->check(CLI::ExistingFile);
    auto* detect = app.add_subcommand("detect", "Beam splitter and both detectors");
    detect->add_option("input", input, "Tag file at the splitter")->required()->check(CLI::ExistingFile);

    std::string file1, file2;
    auto* correlate = app.add_subcommand("correlate", "Coincidence histogram of two tag files");
    correlate->add_option("file1", file1, "Detector 1 tags")->required();
    correlate->add_option("file2", file2, "Detector 2 tags")->required();

    std::string csv, model = "eq2";
    double sigma = 213.0, t0 = -167.0;
    int64_t exclusion = 3000;
    auto* fit = app.add_subcommand("fit", "Fit the antibunching dip of a histogram CSV");
    fit->add_option("histogram", csv, "histogram.csv")->required();
    fit->add_option("--model", model, "eq1 (bare dip) or eq2 (jitter-convolved)")
        ->check(CLI::IsMember({"eq1", "eq2"}))
        ->capture_default_str();
    fit->add_option("--sigma", sigma, "Fixed jitter sigma, ps (eq2)")->capture_default_str();
    fit->add_option("--t0", t0, "Fixed dip position, ps (eq2)")->capture_default_str();
    fit->add_option("--exclusion", exclusion, "Half-width excluded from the flat level, ps")->capture_default_str();

    std::vector<double> powers;
    auto* budget = app.add_subcommand("budget", "Rate and coincidence budget over pump power");
    budget->add_option("--powers", powers, "Pump powers in W (default: config power_sweep)");

    auto* pipeline = app.add_subcommand("pipeline", "Full simulation, correlation, fit and correction");

    CLI11_PARSE(app, argc, argv);

    const char* out = g.out.c_str();
    ConfigHandle cfg;

    if (*correlate) {
        if (!g.config.empty()) {
            if (auto s = cfg.load(g); s != G2SIM_OK) return fail(s);
        }
        const auto s = g2sim_cmd_correlate(cfg.get(), file1.c_str(), file2.c_str(), out, g.threads);
        return s == G2SIM_OK ? 0 : fail(s);
    }
    if (*fit) {
        g2sim_fit_result r{};
        const auto m = model == "eq1" ? G2SIM_FIT_EQ1 : G2SIM_FIT_EQ2;
        const auto s = g2sim_cmd_fit(csv.c_str(), m, sigma, t0, exclusion, out, &r);
        if (s != G2SIM_OK) return fail(s);
        print_fit(r);
        return 0;
    }

    if (auto s = cfg.load(g); s != G2SIM_OK) return g.config.empty() ? 2 : fail(s);

    g2sim_status s = G2SIM_OK;
    if (*simulate) {
        s = g2sim_cmd_simulate(cfg.get(), out, all_stages ? 1 : 0);
    } else if (*convert) {
        s = g2sim_cmd_convert(cfg.get(), input.c_str(), out);
    } else if (*detect) {
        s = g2sim_cmd_detect(cfg.get(), input.c_str(), out);
    } else if (*budget) {
        size_t n = 0;
        s = g2sim_cmd_budget(cfg.get(), powers.data(), powers.size(), out, nullptr, 0, &n);
        if (s == G2SIM_OK) std::printf("budget: %zu rows -> %s/budget.csv\n", n, out);
    } else if (*pipeline) {
        g2sim_pipeline_summary sum{};
        s = g2sim_cmd_pipeline(cfg.get(), out, g.threads, &sum);
        if (s == G2SIM_OK) {
            std::printf("singles: %.1f /s, %.1f /s; flat level %.3f per bin\n", sum.rate1, sum.rate2, sum.flat_level);
            if (sum.has_fit) print_fit(sum.fit);
            if (sum.has_corrected) std::printf("g2_corrected=%.4f\n", sum.g2_corrected);
        }
    }
    return s == G2SIM_OK ? 0 : fail(s);
}
