#include "optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace g2sim::detail {

bool Box::contains(std::span<const double> p) const {
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] >= lo[i] && p[i] <= hi[i])) return false;
    }
    return true;
}

void Box::clamp(std::span<double> p) const {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(p[i], lo[i], hi[i]);
}

double nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double>& x,
                   const std::vector<double>& step, const Box& box, int max_evals, double ftol) {
    const std::size_t n = x.size();
    const double inf = std::numeric_limits<double>::infinity();
    auto eval = [&](std::vector<double>& p) {
        box.clamp(p);
        const double v = f(p);
        return std::isfinite(v) ? v : inf;
    };

    std::vector<std::vector<double>> simplex(n + 1, x);
    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        simplex[i + 1][i] += step[i];
        if (!box.contains(simplex[i + 1])) simplex[i + 1][i] -= 2.0 * step[i];
    }
    int evals = 0;
    for (std::size_t i = 0; i <= n; ++i) {
        fv[i] = eval(simplex[i]);
        ++evals;
    }

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), trial(n), trial2(n);
    while (evals < max_evals) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
        if (std::fabs(fv[worst] - fv[best]) <= ftol * (std::fabs(fv[best]) + 1e-30)) break;

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[i][d] / static_cast<double>(n);
        }
        for (std::size_t d = 0; d < n; ++d) trial[d] = centroid[d] + (centroid[d] - simplex[worst][d]);
        const double fr = eval(trial);
        ++evals;
        if (fr < fv[best]) {
            for (std::size_t d = 0; d < n; ++d) trial2[d] = centroid[d] + 2.0 * (centroid[d] - simplex[worst][d]);
            const double fe = eval(trial2);
            ++evals;
            if (fe < fr) {
                simplex[worst] = trial2;
                fv[worst] = fe;
            } else {
                simplex[worst] = trial;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second]) {
            simplex[worst] = trial;
            fv[worst] = fr;
            continue;
        }
        const bool outside = fr < fv[worst];
        for (std::size_t d = 0; d < n; ++d) {
            trial2[d] = outside ? centroid[d] + 0.5 * (trial[d] - centroid[d])
                                : centroid[d] + 0.5 * (simplex[worst][d] - centroid[d]);
        }
        const double fc = eval(trial2);
        ++evals;
        if (fc < std::min(fr, fv[worst])) {
            simplex[worst] = trial2;
            fv[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            for (std::size_t d = 0; d < n; ++d) simplex[i][d] = simplex[best][d] + 0.5 * (simplex[i][d] - simplex[best][d]);
            fv[i] = eval(simplex[i]);
            ++evals;
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
    x = simplex[best];
    return fv[best];
}

namespace {

Eigen::MatrixXd covariance_from(const Eigen::MatrixXd& jac) {
    const Eigen::Index n = jac.cols();
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    if (lu.isInvertible() && lu.rcond() > 1e-14) return lu.inverse();
    // Some direction is unconstrained (e.g. tau0 when a = 0): report it as infinite.
    Eigen::MatrixXd cov = jtj.completeOrthogonalDecomposition().pseudoInverse();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (jac.col(i).norm() < 1e-12 * (jac.norm() + 1e-300)) cov(i, i) = std::numeric_limits<double>::infinity();
    }
    return cov;
}

}  // namespace

LsqResult gauss_newton(const ResidualFn& fn, std::vector<double> p0, const Box& box, int max_iterations) {
    const auto n = static_cast<Eigen::Index>(p0.size());
    LsqResult res;
    box.clamp(p0);
    res.p = p0;

    Eigen::VectorXd r, r_new;
    Eigen::MatrixXd jac, jac_new;
    fn(res.p, r, jac);
    double chi2 = r.squaredNorm();
    double lambda = 1e-3;
    std::vector<double> trial(p0.size());

    for (int it = 0; it < max_iterations; ++it) {
        res.iterations = it + 1;
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        Eigen::VectorXd g = jac.transpose() * r;
        Eigen::MatrixXd lhs = jtj;
        for (Eigen::Index i = 0; i < n; ++i) lhs(i, i) += lambda * std::max(jtj(i, i), 1e-30);
        // Parameters pinned on a bound and pushed outward are held fixed this step.
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool at_lo = res.p[i] <= box.lo[i] && g(i) > 0.0;
            const bool at_hi = res.p[i] >= box.hi[i] && g(i) < 0.0;
            if (!at_lo && !at_hi) continue;
            lhs.row(i).setZero();
            lhs.col(i).setZero();
            lhs(i, i) = 1.0;
            g(i) = 0.0;
        }
        const Eigen::VectorXd delta = -lhs.ldlt().solve(g);
        if (!delta.allFinite()) {
            lambda *= 10.0;
            if (lambda > 1e16) break;
            continue;
        }
        for (Eigen::Index i = 0; i < n; ++i) trial[i] = res.p[i] + delta(i);
        box.clamp(trial);
        fn(trial, r_new, jac_new);
        const double chi2_new = r_new.allFinite() ? r_new.squaredNorm() : std::numeric_limits<double>::infinity();
        if (chi2_new <= chi2) {
            double max_rel_step = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                max_rel_step = std::max(max_rel_step, std::fabs(trial[i] - res.p[i]) / (std::fabs(res.p[i]) + 1e-9));
            }
            const double drop = chi2 - chi2_new;
            res.p = trial;
            r = r_new;
            jac = jac_new;
            chi2 = chi2_new;
            lambda = std::max(lambda * 0.3, 1e-12);
            if (drop <= 1e-10 * chi2 + 1e-300 || max_rel_step < 1e-10) {
                res.converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e16) {
                // No downhill step exists at machine precision: stationary point.
                res.converged = true;
                break;
            }
        }
    }
    res.chi2 = chi2;
    res.covariance = covariance_from(jac);
    return res;
}

}  // namespace g2sim::detail
