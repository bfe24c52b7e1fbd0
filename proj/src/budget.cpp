#include "g2sim/budget.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "g2sim/errors.hpp"

namespace g2sim {

double optics_transmission(const PipelineConfig& cfg) {
    return cfg.conversion.device_slope / (cfg.conversion.eta_slope * cfg.filter.peak_transmission);
}

namespace {

RateBudget budget_at(const PipelineConfig& cfg, double power) {
    RateBudget b;
    b.pump_power = power;
    const double optics = optics_transmission(cfg);
    const double filter_t = cfg.filter_enabled ? cfg.filter.peak_transmission : 1.0;
    if (cfg.conversion_enabled) {
        b.eta = efficiency(cfg.conversion, power, cfg.input_wavelength(), cfg.crystal_temperature());
        b.signal_keep = (1.0 - cfg.coupler_loss) * b.eta * optics * filter_t;
        b.background_generated = uspdc_rate(cfg.uspdc, power);
        const double suppression = cfg.filter_enabled ? cfg.filter.background_suppression : 1.0;
        b.background_at_splitter = b.background_generated * optics / suppression;
    } else {
        b.eta = 1.0;
        b.signal_keep = 1.0 - cfg.coupler_loss;
    }
    b.signal_at_splitter = cfg.has_source() ? cfg.source.rate * b.signal_keep : 0.0;
    if (b.background_at_splitter > 0.0) {
        b.sbr = b.signal_at_splitter / b.background_at_splitter;
    } else {
        b.sbr = b.signal_at_splitter > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }

    const auto& h = cfg.hbt;
    BudgetRates q;
    q.r_s1 = b.signal_at_splitter * h.split_ratio * h.det1.efficiency;
    q.r_s2 = b.signal_at_splitter * (1.0 - h.split_ratio) * h.det2.efficiency;
    q.r_b1 = b.background_at_splitter * h.split_ratio * h.det1.efficiency + h.det1.dark_rate;
    q.r_b2 = b.background_at_splitter * (1.0 - h.split_ratio) * h.det2.efficiency + h.det2.dark_rate;
    q.bin_width = static_cast<double>(cfg.correlation.bin_width);
    q.t = static_cast<double>(cfg.duration) / kPsPerSecond;
    b.coincidences = decompose_coincidences(q);
    return b;
}

}  // namespace

RateBudget rate_budget(const PipelineConfig& cfg, double pump_power) {
    if (!(pump_power >= 0.0)) throw InvalidArgument("pump power must be non-negative");
    RateBudget b = budget_at(cfg, pump_power);
    const double d = cfg.pump_power_rel_sigma;
    if (d > 0.0 && pump_power > 0.0) {
        const auto hi = budget_at(cfg, pump_power * (1.0 + d)).coincidences;
        const auto lo = budget_at(cfg, pump_power * (1.0 - d)).coincidences;
        b.coincidences.ss_err = 0.5 * std::fabs(hi.ss - lo.ss);
        b.coincidences.sb_err = 0.5 * std::fabs(hi.sb - lo.sb);
        b.coincidences.bb_err = 0.5 * std::fabs(hi.bb - lo.bb);
    }
    return b;
}

std::vector<RateBudget> rate_budget_sweep(const PipelineConfig& cfg, const std::vector<double>& powers) {
    const auto& grid = powers.empty() ? cfg.power_sweep : powers;
    if (grid.empty()) throw InvalidArgument("empty pump-power sweep");
    std::vector<RateBudget> rows;
    rows.reserve(grid.size());
    for (double p : grid) rows.push_back(rate_budget(cfg, p));
    return rows;
}

std::string budget_table_csv(const std::vector<RateBudget>& rows) {
    std::string out =
        "pump_power_w,eta,signal_at_splitter,background_generated,background_at_splitter,sbr,"
        "r_s1,r_s2,r_b1,r_b2,ss,sb,bb,total,ss_err,sb_err,bb_err\n";
    for (const auto& r : rows) {
        const auto& c = r.coincidences;
        const auto& q = c.rates;
        out += fmt::format("{},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g}\n",
                           r.pump_power, r.eta, r.signal_at_splitter, r.background_generated,
                           r.background_at_splitter, r.sbr, q.r_s1, q.r_s2, q.r_b1, q.r_b2, c.ss, c.sb, c.bb, c.total,
                           c.ss_err, c.sb_err, c.bb_err);
    }
    return out;
}

}  // namespace g2sim
