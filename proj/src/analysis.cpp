#include "g2sim/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>
#include <fmt/format.h>

#include "g2sim/errors.hpp"
#include "g2sim/photon_source.hpp"
#include "optimize.hpp"

namespace g2sim {

double erfcx(double x) {
    if (x < 0.0) return std::exp(x * x) * std::erfc(x);
    if (x < 26.0) return std::exp(x * x) * std::erfc(x);
    // Asymptotic series; at x >= 26 the first omitted term is below 1e-13 relative.
    const double inv2 = 1.0 / (x * x);
    const double series = 1.0 - 0.5 * inv2 * (1.0 - 1.5 * inv2 * (1.0 - 2.5 * inv2 * (1.0 - 3.5 * inv2)));
    return series / (x * std::sqrt(std::numbers::pi));
}

namespace {

// exp(s^2/(2 tau0^2) - v/tau0) * erfc(s/(sqrt2 tau0) - v/(sqrt2 s)), evaluated
// through erfcx where the plain product would overflow or cancel.
double branch_term(double v, double tau0, double sigma) {
    const double x = sigma / (std::numbers::sqrt2 * tau0) - v / (std::numbers::sqrt2 * sigma);
    if (x >= 0.0) return std::exp(-v * v / (2.0 * sigma * sigma)) * erfcx(x);
    return std::exp(sigma * sigma / (2.0 * tau0 * tau0) - v / tau0) * std::erfc(x);
}

}  // namespace

double eval_convolved_g2(double a, double tau0, double t0, double sigma, double tau) {
    const double u = tau - t0;
    if (sigma == 0.0) return theoretical_g2(a, tau0, t0, tau);
    return 1.0 - 0.5 * a * (branch_term(u, tau0, sigma) + branch_term(-u, tau0, sigma));
}

ConvolvedGradient convolved_g2_gradient(double a, double tau0, double t0, double sigma, double tau) {
    ConvolvedGradient g;
    const double u = tau - t0;
    if (sigma == 0.0) {
        const double e = std::exp(-std::fabs(u) / tau0);
        g.value = 1.0 - a * e;
        g.d_a = -e;
        g.d_tau0 = -a * e * std::fabs(u) / (tau0 * tau0);
        g.d_t0 = u == 0.0 ? 0.0 : -a * e * (u > 0.0 ? 1.0 : -1.0) / tau0;
        return g;
    }
    const double t1 = branch_term(u, tau0, sigma);
    const double t2 = branch_term(-u, tau0, sigma);
    const double gauss = std::exp(-u * u / (2.0 * sigma * sigma));
    const double k = (2.0 / std::sqrt(std::numbers::pi)) * sigma / (std::numbers::sqrt2 * tau0 * tau0) * gauss;
    const double s2 = sigma * sigma / (tau0 * tau0 * tau0);
    const double dt1 = t1 * (u / (tau0 * tau0) - s2) + k;
    const double dt2 = t2 * (-u / (tau0 * tau0) - s2) + k;
    g.value = 1.0 - 0.5 * a * (t1 + t2);
    g.d_a = -0.5 * (t1 + t2);
    g.d_tau0 = -0.5 * a * (dt1 + dt2);
    g.d_t0 = 0.5 * a * (t2 - t1) / tau0;
    return g;
}

DipData dip_data(const Histogram& h) {
    if (!h.is_normalized()) throw InvalidArgument("histogram must be normalized before fitting");
    DipData d;
    d.tau = h.bin_centers();
    d.g2 = h.normalized;
    d.err.resize(h.size());
    for (std::size_t k = 0; k < h.size(); ++k) {
        d.err[k] = std::sqrt(std::max<double>(static_cast<double>(h.counts[k]), 1.0)) / h.flat_level;
    }
    return d;
}

namespace {

struct Guess {
    double a, tau0, t0;
};

Guess initial_guess(const DipData& d) {
    const std::size_t n = d.g2.size();
    std::vector<double> smooth(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo = k == 0 ? 0 : k - 1;
        const std::size_t hi = std::min(n - 1, k + 1);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += d.g2[j];
        smooth[k] = s / static_cast<double>(hi - lo + 1);
    }
    const auto kmin = static_cast<std::size_t>(std::min_element(smooth.begin(), smooth.end()) - smooth.begin());
    const double a0 = std::clamp(1.0 - *std::min_element(d.g2.begin(), d.g2.end()), 0.02, 1.0);
    const double level = 1.0 - 0.5 * a0;
    std::size_t left = kmin, right = kmin;
    while (left > 0 && smooth[left] < level) --left;
    while (right + 1 < n && smooth[right] < level) ++right;
    const double spacing = n > 1 ? std::fabs(d.tau[1] - d.tau[0]) : 1.0;
    const double half_width = std::max(0.5 * (d.tau[right] - d.tau[left]), 0.5 * spacing);
    return {a0, half_width, d.tau[kmin]};
}

bool is_flat(const DipData& d) {
    const auto [lo, hi] = std::minmax_element(d.g2.begin(), d.g2.end());
    return *hi - *lo <= 1e-12 * std::max(1.0, std::fabs(*hi));
}

FitResult degenerate_result(const DipData& d, const char* model, int n_free) {
    FitResult r;
    r.model = model;
    r.degenerate = true;
    r.a = 0.0;
    r.g2_at_dip = 1.0;
    r.tau0 = d.tau.size() > 1 ? std::fabs(d.tau[1] - d.tau[0]) : 1.0;
    r.n_points = static_cast<int>(d.g2.size());
    r.n_free = n_free;
    double chi2 = 0.0;
    for (std::size_t k = 0; k < d.g2.size(); ++k) chi2 += std::pow((d.g2[k] - 1.0) / d.err[k], 2);
    r.chi2_reduced = chi2 / std::max(1, r.n_points - n_free);
    return r;
}

void check_data(const DipData& d, int n_free) {
    if (d.tau.size() != d.g2.size() || d.tau.size() != d.err.size()) throw InvalidArgument("dip data size mismatch");
    if (d.tau.size() < static_cast<std::size_t>(4 * n_free)) {
        throw InvalidArgument("need at least " + std::to_string(4 * n_free) + " points to fit");
    }
    for (double e : d.err) {
        if (!(e > 0.0) || !std::isfinite(e)) throw InvalidArgument("dip data errors must be positive");
    }
}

// Shared driver: coarse grid, simplex refinement, Gauss-Newton polish.
// `eval` maps parameters to (value, gradient) at tau.
template <typename Eval>
detail::LsqResult run_fit(const DipData& d, const std::vector<std::vector<double>>& grid_axes, const detail::Box& box,
                          const std::vector<double>& nm_step, Eval eval, int max_iterations) {
    const std::size_t np = grid_axes.size();
    const std::size_t n = d.g2.size();
    auto chi2_of = [&](std::span<const double> p) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double m = eval(p, d.tau[k]).value;
            const double r = (d.g2[k] - m) / d.err[k];
            s += r * r;
        }
        return s;
    };

    std::vector<double> best(np), cur(np);
    double best_chi2 = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(np, 0);
    for (;;) {
        for (std::size_t i = 0; i < np; ++i) cur[i] = grid_axes[i][idx[i]];
        box.clamp(cur);
        const double c = chi2_of(cur);
        if (c < best_chi2) {
            best_chi2 = c;
            best = cur;
        }
        std::size_t i = 0;
        while (i < np && ++idx[i] == grid_axes[i].size()) idx[i++] = 0;
        if (i == np) break;
    }

    detail::nelder_mead(chi2_of, best, nm_step, box, 400 * static_cast<int>(np), 1e-10);

    const auto residuals = [&](std::span<const double> p, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
        r.resize(static_cast<Eigen::Index>(n));
        jac.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(np));
        for (std::size_t k = 0; k < n; ++k) {
            const auto g = eval(p, d.tau[k]);
            const auto row = static_cast<Eigen::Index>(k);
            r(row) = (d.g2[k] - g.value) / d.err[k];
            const auto grads = g.grads();
            for (std::size_t j = 0; j < np; ++j) jac(row, static_cast<Eigen::Index>(j)) = -grads[j] / d.err[k];
        }
    };
    auto res = detail::gauss_newton(residuals, best, box, max_iterations);
    if (!res.converged) {
        throw FitError("fit did not converge within " + std::to_string(max_iterations) + " iterations");
    }
    return res;
}

template <std::size_t N>
struct Sample {
    double value;
    std::array<double, N> g;
    const std::array<double, N>& grads() const { return g; }
};

std::vector<double> scaled(double x, std::initializer_list<double> factors, double lo, double hi) {
    std::vector<double> v;
    for (double f : factors) v.push_back(std::clamp(x * f, lo, hi));
    return v;
}

double safe_sqrt(double v) { return v >= 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

FitResult fit_dip(const DipData& d, const FitOptions& options) {
    check_data(d, 3);
    if (is_flat(d)) return degenerate_result(d, "eq1", 3);
    const Guess g0 = initial_guess(d);
    const double spacing = std::fabs(d.tau[1] - d.tau[0]);
    const double span_tau = std::fabs(d.tau.back() - d.tau.front()) + spacing;
    detail::Box box{{0.0, 1e-3 * spacing, d.tau.front()}, {1.0, 100.0 * span_tau, d.tau.back()}};

    auto eval = [](std::span<const double> p, double tau) {
        const auto g = convolved_g2_gradient(p[0], p[1], p[2], 0.0, tau);
        return Sample<3>{g.value, {g.d_a, g.d_tau0, g.d_t0}};
    };
    const std::vector<std::vector<double>> axes{
        scaled(g0.a, {0.6, 0.8, 1.0, 1.2}, 0.0, 1.0),
        scaled(g0.tau0, {0.5, 1.0, 2.0}, box.lo[1], box.hi[1]),
        {g0.t0 - spacing, g0.t0, g0.t0 + spacing},
    };
    const auto res = run_fit(d, axes, box, {0.1 * g0.a, 0.3 * g0.tau0, 0.5 * spacing}, eval, options.max_iterations);

    FitResult r;
    r.model = "eq1";
    r.a = res.p[0];
    r.tau0 = res.p[1];
    r.t0 = res.p[2];
    r.sigma = 0.0;
    r.g2_at_dip = 1.0 - r.a;
    r.a_err = safe_sqrt(res.covariance(0, 0));
    r.tau0_err = safe_sqrt(res.covariance(1, 1));
    r.t0_err = safe_sqrt(res.covariance(2, 2));
    r.n_points = static_cast<int>(d.g2.size());
    r.n_free = 3;
    r.chi2_reduced = res.chi2 / (r.n_points - r.n_free);
    r.iterations = res.iterations;
    return r;
}

FitResult fit_dip(const Histogram& h, const FitOptions& options) { return fit_dip(dip_data(h), options); }

FitResult fit_convolved_dip(const DipData& d, double sigma_fixed, double t0_fixed, const FitOptions& options) {
    if (!(sigma_fixed > 0.0)) throw InvalidArgument("sigma_fixed must be positive");
    check_data(d, 2);
    if (is_flat(d)) {
        auto r = degenerate_result(d, "eq2", 2);
        r.sigma = sigma_fixed;
        r.t0 = t0_fixed;
        return r;
    }
    const Guess g0 = initial_guess(d);
    const double spacing = std::fabs(d.tau[1] - d.tau[0]);
    const double span_tau = std::fabs(d.tau.back() - d.tau.front()) + spacing;
    detail::Box box{{0.0, 1e-3 * spacing}, {1.0, 100.0 * span_tau}};

    auto eval = [&](std::span<const double> p, double tau) {
        const auto g = convolved_g2_gradient(p[0], p[1], t0_fixed, sigma_fixed, tau);
        return Sample<2>{g.value, {g.d_a, g.d_tau0}};
    };
    const std::vector<std::vector<double>> axes{
        scaled(g0.a, {0.6, 1.0, 1.4, 1.8}, 0.0, 1.0),
        scaled(std::max(g0.tau0, sigma_fixed), {0.25, 0.5, 1.0, 2.0}, box.lo[1], box.hi[1]),
    };
    const auto res = run_fit(d, axes, box, {0.1 * g0.a, 0.3 * g0.tau0}, eval, options.max_iterations);

    FitResult r;
    r.model = "eq2";
    r.a = res.p[0];
    r.tau0 = res.p[1];
    r.t0 = t0_fixed;
    r.sigma = sigma_fixed;
    r.g2_at_dip = 1.0 - r.a;
    r.a_err = safe_sqrt(res.covariance(0, 0));
    r.tau0_err = safe_sqrt(res.covariance(1, 1));
    r.n_points = static_cast<int>(d.g2.size());
    r.n_free = 2;
    r.chi2_reduced = res.chi2 / (r.n_points - r.n_free);
    r.iterations = res.iterations;
    return r;
}

FitResult fit_convolved_dip(const Histogram& h, double sigma_fixed, double t0_fixed, const FitOptions& options) {
    return fit_convolved_dip(dip_data(h), sigma_fixed, t0_fixed, options);
}

std::string summary_line(const FitResult& r) {
    return fmt::format("g2_dip={:.4f} ± {:.4f} tau0={:.1f} ps ± {:.1f}", r.g2_at_dip, r.a_err, r.tau0, r.tau0_err);
}

// ---------------------------------------------------------------------------

BackgroundBudget decompose_coincidences(const BudgetRates& q) {
    if (q.r_s1 < 0 || q.r_s2 < 0 || q.r_b1 < 0 || q.r_b2 < 0 || q.bin_width < 0 || q.t < 0) {
        throw InvalidArgument("budget rates must be non-negative");
    }
    const double scale = q.bin_width / kPsPerSecond * q.t;
    BackgroundBudget b;
    b.rates = q;
    b.ss = q.r_s1 * q.r_s2 * scale;
    b.sb = (q.r_s1 * q.r_b2 + q.r_b1 * q.r_s2) * scale;
    b.bb = q.r_b1 * q.r_b2 * scale;
    b.total = b.ss + b.sb + b.bb;
    return b;
}

double background_corrected_g2(double g2_raw_at_dip, const BackgroundBudget& b) {
    if (!(b.ss > 0.0)) throw InvalidArgument("signal/signal coincidences must be positive for the correction");
    return (g2_raw_at_dip * b.total - b.sb - b.bb) / b.ss;
}

double contrast_from_signal_fraction(double rho_s, double g2_true_dip) {
    if (!(rho_s >= 0.0 && rho_s <= 1.0)) throw InvalidArgument("signal fraction must lie in [0, 1]");
    return 1.0 - rho_s * rho_s * (1.0 - g2_true_dip);
}

DipData expected_dip_data(double a_true, double tau0, double t0, double sigma, const CorrelationConfig& cfg,
                          double flat_counts) {
    validate_correlation(cfg);
    if (!(flat_counts > 0.0)) throw InvalidArgument("flat_counts must be positive");
    DipData d;
    const std::size_t n = cfg.num_bins();
    const double w = static_cast<double>(cfg.bin_width);
    auto f = [&](double x) { return eval_convolved_g2(a_true, tau0, t0, sigma, x); };
    using Gauss = boost::math::quadrature::gauss<double, 20>;
    for (std::size_t k = 0; k < n; ++k) {
        const double lo = static_cast<double>(cfg.tau_min) + static_cast<double>(k) * w;
        const double hi = lo + w;
        double integral;
        if (t0 > lo && t0 < hi) {
            integral = Gauss::integrate(f, lo, t0) + Gauss::integrate(f, t0, hi);
        } else {
            integral = Gauss::integrate(f, lo, hi);
        }
        const double y = integral / w;
        d.tau.push_back(cfg.bin_center(k));
        d.g2.push_back(y);
        d.err.push_back(std::sqrt(std::max(flat_counts * y, 1.0)) / flat_counts);
    }
    return d;
}

double tune_background_fraction(double target_a, double tau0, double t0, double sigma, const CorrelationConfig& cfg,
                                double flat_counts) {
    if (!(target_a > 0.0 && target_a < 1.0)) throw InvalidArgument("target contrast must lie in (0, 1)");
    auto fitted = [&](double rho) {
        const double s = 1.0 - rho;
        return fit_dip(expected_dip_data(s * s, tau0, t0, sigma, cfg, flat_counts)).a;
    };
    double lo = 0.0, hi = 0.9;
    if (fitted(lo) < target_a) {
        throw InvalidArgument(fmt::format("contrast {} unreachable: a background-free source fits to {:.5f}", target_a,
                                          fitted(lo)));
    }
    for (int i = 0; i < 60 && hi - lo > 1e-12; ++i) {
        const double mid = 0.5 * (lo + hi);
        (fitted(mid) > target_a ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace g2sim
