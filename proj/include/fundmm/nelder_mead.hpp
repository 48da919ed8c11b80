#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace fundmm {

struct SimplexOptions {
    std::size_t max_evaluations = 20000;
    double f_tolerance = 1e-12;   // spread of simplex values, relative to max(1, |best|)
    double x_tolerance = 1e-10;   // max vertex distance from best, per coordinate
    double initial_step = 0.1;
};

struct SimplexResult {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    std::size_t evaluations = 0;
    bool converged = false;
};

// Minimizes `objective` with the adaptive Nelder-Mead simplex (Gao & Han
// coefficients). Non-finite objective values are treated as +inf so the
// simplex retreats from infeasible regions.
template <typename Objective>
SimplexResult nelder_mead(Objective&& objective, std::vector<double> start,
                          const SimplexOptions& opts = {}) {
    const std::size_t n = start.size();
    const double dim = static_cast<double>(n);
    const double alpha = 1.0;
    const double gamma = 1.0 + 2.0 / dim;
    const double rho = 0.75 - 1.0 / (2.0 * dim);
    const double shrink = 1.0 - 1.0 / dim;

    SimplexResult result;
    auto eval = [&](const std::vector<double>& x) {
        ++result.evaluations;
        const double v = objective(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    std::vector<std::vector<double>> pts(n + 1, start);
    for (std::size_t i = 0; i < n; ++i) {
        const double h = start[i] != 0.0 ? opts.initial_step * std::max(1.0, std::abs(start[i]))
                                         : opts.initial_step;
        pts[i + 1][i] += h;
    }
    std::vector<double> vals(n + 1);
    for (std::size_t i = 0; i <= n; ++i) vals[i] = eval(pts[i]);

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), trial(n), trial2(n);

    while (result.evaluations < opts.max_evaluations) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[n - 1];

        double xspread = 0.0;
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t d = 0; d < n; ++d)
                xspread = std::max(xspread, std::abs(pts[i][d] - pts[best][d]));
        const double ftol = opts.f_tolerance * std::max(1.0, std::abs(vals[best]));
        if (std::isfinite(vals[worst]) && vals[worst] - vals[best] <= ftol && xspread <= opts.x_tolerance) {
            result.converged = true;
            break;
        }

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t d = 0; d < n; ++d) centroid[d] += pts[i][d] / dim;
        }

        for (std::size_t d = 0; d < n; ++d)
            trial[d] = centroid[d] + alpha * (centroid[d] - pts[worst][d]);
        const double fr = eval(trial);

        if (fr < vals[best]) {
            for (std::size_t d = 0; d < n; ++d)
                trial2[d] = centroid[d] + gamma * (trial[d] - centroid[d]);
            const double fe = eval(trial2);
            if (fe < fr) {
                pts[worst] = trial2;
                vals[worst] = fe;
            } else {
                pts[worst] = trial;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = trial;
            vals[worst] = fr;
            continue;
        }

        const bool outside = fr < vals[worst];
        for (std::size_t d = 0; d < n; ++d) {
            trial2[d] = outside ? centroid[d] + rho * (trial[d] - centroid[d])
                                : centroid[d] - rho * (centroid[d] - pts[worst][d]);
        }
        const double fc = eval(trial2);
        if (fc < std::min(fr, vals[worst])) {
            pts[worst] = trial2;
            vals[worst] = fc;
            continue;
        }

        for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            for (std::size_t d = 0; d < n; ++d)
                pts[i][d] = pts[best][d] + shrink * (pts[i][d] - pts[best][d]);
            vals[i] = eval(pts[i]);
        }
    }

    const auto it = std::min_element(vals.begin(), vals.end());
    result.value = *it;
    result.x = pts[static_cast<std::size_t>(it - vals.begin())];
    return result;
}

// Golden-section maximization of a unimodal function on [lo, hi].
template <typename Fn>
double golden_section_max(Fn&& fn, double lo, double hi, double tol = 1e-12,
                          std::size_t max_iter = 500) {
    constexpr double inv_phi = 0.6180339887498948482;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = fn(c), fd = fn(d);
    for (std::size_t it = 0; it < max_iter && (b - a) > tol; ++it) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = fn(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace fundmm
