#pragma once

#include <string>
#include <vector>

#include "g2sim/analysis.hpp"
#include "g2sim/config.hpp"

namespace g2sim {

// Expected rates through the pipeline at one pump power.
struct RateBudget {
    double pump_power = 0.0;         // W
    double eta = 0.0;                // external conversion efficiency at the configured line and temperature
    double signal_keep = 0.0;        // probability that a source photon reaches the splitter
    double signal_at_splitter = 0.0; // photons/s
    double background_generated = 0.0;    // USPDC photons/s before optics and filter
    double background_at_splitter = 0.0;  // photons/s
    double sbr = 0.0;                // signal_at_splitter / background_at_splitter
    BackgroundBudget coincidences;   // per-arm rates and expected flat coincidences per bin
};

// Share of converted light surviving the optics between crystal and filter:
// device_slope / (eta_slope * filter.peak_transmission).
double optics_transmission(const PipelineConfig& cfg);

RateBudget rate_budget(const PipelineConfig& cfg, double pump_power);

// One row per pump power; uses cfg.power_sweep when `powers` is empty.
std::vector<RateBudget> rate_budget_sweep(const PipelineConfig& cfg, const std::vector<double>& powers = {});

// CSV table: pump_power_w,eta,signal_at_splitter,background_generated,background_at_splitter,sbr,
// r_s1,r_s2,r_b1,r_b2,ss,sb,bb,total,ss_err,sb_err,bb_err.
std::string budget_table_csv(const std::vector<RateBudget>& rows);

}  // namespace g2sim
