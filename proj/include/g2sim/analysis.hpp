#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "g2sim/correlation.hpp"

namespace g2sim {

// Scaled complementary error function exp(x^2) erfc(x), for x >= 0.
double erfcx(double x);

// Antibunching dip convolved with a Gaussian instrument response of
// standard deviation sigma. sigma = 0 reduces to theoretical_g2.
double eval_convolved_g2(double a, double tau0, double t0, double sigma, double tau);

struct ConvolvedGradient {
    double value = 0.0;
    double d_a = 0.0;
    double d_tau0 = 0.0;
    double d_t0 = 0.0;
};
ConvolvedGradient convolved_g2_gradient(double a, double tau0, double t0, double sigma, double tau);

struct FitResult {
    std::string model;  // "eq1" (bare dip) or "eq2" (jitter-convolved dip)
    double a = 0.0;
    double tau0 = 0.0;  // ps
    double t0 = 0.0;    // ps
    double sigma = 0.0; // ps, 0 for the bare dip
    double g2_at_dip = 1.0;  // 1 - a
    double a_err = 0.0;
    double tau0_err = 0.0;
    double t0_err = 0.0;
    double sigma_err = 0.0;
    double chi2_reduced = 0.0;
    int n_points = 0;
    int n_free = 0;
    int iterations = 0;
    bool degenerate = false;  // flat input; a pinned to 0
};

// Samples to fit: delays (ps), normalized g2 values and their standard errors.
struct DipData {
    std::vector<double> tau;
    std::vector<double> g2;
    std::vector<double> err;
};

// Poisson errors sqrt(counts)/flat_level, zero counts treated as one.
DipData dip_data(const Histogram& h);

struct FitOptions {
    int max_iterations = 500;
};

// Weighted least squares of the bare dip with a, tau0 and t0 free.
FitResult fit_dip(const Histogram& h, const FitOptions& options = {});
FitResult fit_dip(const DipData& data, const FitOptions& options = {});

// Jitter-convolved dip with sigma and t0 held at calibrated values; a and tau0 free.
FitResult fit_convolved_dip(const Histogram& h, double sigma_fixed, double t0_fixed, const FitOptions& options = {});
FitResult fit_convolved_dip(const DipData& data, double sigma_fixed, double t0_fixed, const FitOptions& options = {});

// One-line summary "g2_dip=... ± ... tau0=... ps ± ...".
std::string summary_line(const FitResult& r);

// ---------------------------------------------------------------------------
// Coincidence budget: flat coincidences per bin from signal and background
// singles rates on each arm.

struct BudgetRates {
    double r_s1 = 0.0, r_s2 = 0.0;  // signal counts/s per arm
    double r_b1 = 0.0, r_b2 = 0.0;  // background counts/s per arm
    double bin_width = 200.0;       // ps
    double t = 0.0;                 // integration time, s
};

struct BackgroundBudget {
    BudgetRates rates;
    double ss = 0.0, sb = 0.0, bb = 0.0, total = 0.0;
    // Optional systematic uncertainties (e.g. from pump-power drift); zero when not propagated.
    double ss_err = 0.0, sb_err = 0.0, bb_err = 0.0;
};

BackgroundBudget decompose_coincidences(const BudgetRates& rates);

// (g2_raw * total - sb - bb) / ss.
double background_corrected_g2(double g2_raw_at_dip, const BackgroundBudget& budget);

// 1 - rho_s^2 (1 - g2_true_dip): dip depth after mixing with flat Poisson background.
double contrast_from_signal_fraction(double rho_s, double g2_true_dip);

// Expected noiseless normalized histogram of an emitter with dip contrast
// a_true, lifetime tau0 and delay t0, seen through a Gaussian pair response
// sigma and averaged over each bin.
DipData expected_dip_data(double a_true, double tau0, double t0, double sigma, const CorrelationConfig& cfg,
                          double flat_counts);

// Source background fraction for which fit_dip on the expected histogram
// returns contrast `target_a`. Throws InvalidArgument if unreachable.
double tune_background_fraction(double target_a, double tau0, double t0, double sigma, const CorrelationConfig& cfg,
                                double flat_counts = 1e4);

}  // namespace g2sim
