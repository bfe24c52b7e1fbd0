#pragma once

// Small dense optimizers used by the fitting code. Not part of the public API.

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace g2sim::detail {

struct Box {
    std::vector<double> lo, hi;
    bool contains(std::span<const double> p) const;
    void clamp(std::span<double> p) const;
};

// Downhill simplex on f within the box (f is treated as +inf outside).
// Returns the best point; `x` is updated in place.
double nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double>& x,
                   const std::vector<double>& step, const Box& box, int max_evals, double ftol);

// Residual vector r(p) and its Jacobian (rows = residuals).
using ResidualFn = std::function<void(std::span<const double> p, Eigen::VectorXd& r, Eigen::MatrixXd& jac)>;

struct LsqResult {
    std::vector<double> p;
    double chi2 = 0.0;
    Eigen::MatrixXd covariance;  // (J^T J)^-1 at the optimum
    int iterations = 0;
    bool converged = false;
};

// Gauss-Newton with Levenberg damping and box projection.
LsqResult gauss_newton(const ResidualFn& fn, std::vector<double> p0, const Box& box, int max_iterations);

}  // namespace g2sim::detail
