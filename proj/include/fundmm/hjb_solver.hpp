#pragma once

// Reduced inventory-funding HJB on a (time x inventory x funding) tensor grid.
//
// theta(t, q, f) is the continuation value after removing cash and
// mark-to-market inventory. The backward sweep is the explicit scheme
//
//   theta_i = theta_{i+1} + dt * (L_f theta_{i+1} - q f - phi q^2 + H^a + H^b)
//
// with L_f an upwind birth-death chain on the funding grid and H^{a,b} the
// exponential-intensity Hamiltonians. The inventory side that would breach a
// limit is dropped from the Hamiltonian.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fundmm/errors.hpp"
#include "fundmm/fill_calib.hpp"
#include "fundmm/funding_calib.hpp"

namespace fundmm {

struct GridSpec {
    double horizon = 1.0;      // hours
    std::int64_t n_time = 1;   // time steps
    double q_min = -1.0;
    double q_max = 1.0;
    double dq = 1.0;           // contracts per quote
    double f_min = -1.0;       // cash funding, quote currency per contract per hour
    double f_max = 1.0;
    std::int64_t n_f = 3;      // 1 = funding state collapsed to the single value f_min == f_max

    std::int64_t n_q() const { return static_cast<std::int64_t>(std::llround((q_max - q_min) / dq)) + 1; }
    double dt() const { return horizon / static_cast<double>(n_time); }
    double df() const { return n_f > 1 ? (f_max - f_min) / static_cast<double>(n_f - 1) : 0.0; }
    double t(std::int64_t i) const { return horizon * static_cast<double>(i) / static_cast<double>(n_time); }
    double q(std::int64_t j) const { return q_min + static_cast<double>(j) * dq; }
    double f(std::int64_t l) const {
        return n_f > 1 ? f_min + (f_max - f_min) * static_cast<double>(l) / static_cast<double>(n_f - 1) : f_min;
    }

    void validate() const {
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidInput("grid: horizon must be > 0");
        if (n_time < 1) throw InvalidInput("grid: n_time must be >= 1");
        if (!(dq > 0.0)) throw InvalidInput("grid: dq must be > 0");
        if (!(q_max > q_min)) throw InvalidInput("grid: q_max must exceed q_min");
        const double steps = (q_max - q_min) / dq;
        if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps) || std::round(steps) < 2)
            throw InvalidInput("grid: (q_max - q_min)/dq must be an integer >= 2");
        const double zero_idx = -q_min / dq;
        if (q_min > 0.0 || q_max < 0.0 ||
            std::abs(zero_idx - std::round(zero_idx)) > 1e-9 * std::max(1.0, zero_idx))
            throw InvalidInput("grid: inventory grid must contain 0");
        if (n_f == 1) {
            if (f_min != f_max) throw InvalidInput("grid: a collapsed funding grid needs f_min == f_max");
        } else {
            if (n_f < 3) throw InvalidInput("grid: n_f must be >= 3 (or 1 for a collapsed grid)");
            if (!(f_min < f_max)) throw InvalidInput("grid: f_min must be < f_max");
        }
    }
};

struct HJBParams {
    OUParams ou_cash;  // cash-scaled funding dynamics
    FillCurve fill;
    double alpha = 0.0;  // terminal inventory penalty
    double phi = 0.0;    // running inventory penalty per hour

    void validate() const {
        if (!(ou_cash.kappa >= 0.0) || !(ou_cash.sigma >= 0.0) || !std::isfinite(ou_cash.theta))
            throw InvalidInput("HJB params: funding dynamics need kappa >= 0, sigma >= 0");
        fill.validate();
        if (!(fill.k > 0.0)) throw InvalidInput("HJB params: fill decay k must be > 0");
        if (!(alpha >= 0.0) || !(phi >= 0.0)) throw InvalidInput("HJB params: penalties must be >= 0");
    }
};

struct BirthDeathRates {
    std::vector<double> up;
    std::vector<double> down;

    double max_total() const {
        double m = 0.0;
        for (std::size_t l = 0; l < up.size(); ++l) m = std::max(m, up[l] + down[l]);
        return m;
    }
};

class SolverNaN : public RuntimeFailure {
public:
    SolverNaN(std::int64_t i, std::int64_t j, std::int64_t l)
        : RuntimeFailure("HJB solve produced a non-finite value at (i=" + std::to_string(i) +
                         ", j=" + std::to_string(j) + ", l=" + std::to_string(l) + ")"),
          i(i), j(j), l(l) {}
    std::int64_t i, j, l;
};

// Upwind rates with drift b(f) = kappa (fbar - f); moves off the grid are suppressed.
inline BirthDeathRates build_rates(const GridSpec& grid, const OUParams& ou_cash) {
    grid.validate();
    const auto n = static_cast<std::size_t>(grid.n_f);
    BirthDeathRates r{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    if (grid.n_f == 1) return r;
    const double df = grid.df();
    const double diffusion = ou_cash.sigma * ou_cash.sigma / (2.0 * df * df);
    for (std::size_t l = 0; l < n; ++l) {
        const double b = ou_cash.kappa * (ou_cash.theta - grid.f(static_cast<std::int64_t>(l)));
        r.up[l] = diffusion + std::max(b, 0.0) / df;
        r.down[l] = diffusion + std::max(-b, 0.0) / df;
    }
    r.up[n - 1] = 0.0;
    r.down[0] = 0.0;
    return r;
}

inline double cfl_max_dt(const BirthDeathRates& rates, const FillCurve& fill) {
    const double denom = rates.max_total() + 2.0 * fill.max_intensity();
    return denom > 0.0 ? 1.0 / denom : std::numeric_limits<double>::infinity();
}

// Maximizer of exp(-k d) (d + value_diff) over d >= delta_min.
inline double optimal_offset(double value_diff, const FillCurve& fill) {
    return std::max(fill.delta_min, 1.0 / fill.k - value_diff);
}

// sup_{d >= delta_min} Lambda exp(-k d) (d + value_diff), per quote unit.
inline double hamiltonian(double value_diff, const FillCurve& fill) {
    const double d = optimal_offset(value_diff, fill);
    return fill.intensity(d) * (d + value_diff);
}

struct HJBTable {
    GridSpec grid;
    HJBParams params;
    std::vector<double> theta;  // [(i * n_q + j) * n_f + l]

    std::size_t slice_size() const { return static_cast<std::size_t>(grid.n_q() * grid.n_f); }
    std::size_t index(std::int64_t i, std::int64_t j, std::int64_t l) const {
        return static_cast<std::size_t>((i * grid.n_q() + j) * grid.n_f + l);
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t l) const { return theta[index(i, j, l)]; }
    std::span<const double> slice(std::int64_t i) const {
        return {theta.data() + index(i, 0, 0), slice_size()};
    }
};

inline std::vector<double> terminal_slice(const GridSpec& grid, double alpha) {
    const auto nq = grid.n_q(), nf = grid.n_f;
    std::vector<double> out(static_cast<std::size_t>(nq * nf));
    for (std::int64_t j = 0; j < nq; ++j) {
        const double q = grid.q(j);
        for (std::int64_t l = 0; l < nf; ++l) out[static_cast<std::size_t>(j * nf + l)] = -alpha * q * q;
    }
    return out;
}

// One explicit backward step from `next` (time i+1) into `out` (time i).
// Returns the flat (j * n_f + l) index of the first non-finite output, or -1.
inline std::int64_t step_backward(const GridSpec& grid, const HJBParams& params,
                                  const BirthDeathRates& rates, std::span<const double> next,
                                  std::span<double> out, double dt) {
    const auto nq = grid.n_q(), nf = grid.n_f;
    const double dq = grid.dq;
    for (std::int64_t j = 0; j < nq; ++j) {
        const double q = grid.q(j);
        const double* row = next.data() + j * nf;
        for (std::int64_t l = 0; l < nf; ++l) {
            const double th = row[l];
            double gen = 0.0;
            const auto ul = static_cast<std::size_t>(l);
            if (l + 1 < nf) gen += rates.up[ul] * (row[l + 1] - th);
            if (l > 0) gen += rates.down[ul] * (row[l - 1] - th);
            double rate = gen - q * grid.f(l) - params.phi * q * q;
            if (j > 0) rate += dq * hamiltonian((next[static_cast<std::size_t>((j - 1) * nf + l)] - th) / dq, params.fill);
            if (j + 1 < nq) rate += dq * hamiltonian((next[static_cast<std::size_t>((j + 1) * nf + l)] - th) / dq, params.fill);
            const double v = th + dt * rate;
            out[static_cast<std::size_t>(j * nf + l)] = v;
            if (!std::isfinite(v)) return j * nf + l;
        }
    }
    return -1;
}

struct SolveOptions {
    bool enforce_cfl = true;
};

inline HJBTable solve(const GridSpec& grid, const HJBParams& params, const SolveOptions& opts = {}) {
    grid.validate();
    params.validate();
    const auto rates = build_rates(grid, params.ou_cash);
    const double dt = grid.dt();
    const double bound = cfl_max_dt(rates, params.fill);
    if (opts.enforce_cfl && dt > bound) throw CflViolation(dt, bound);

    HJBTable table{grid, params, {}};
    const std::size_t ss = table.slice_size();
    table.theta.resize(ss * static_cast<std::size_t>(grid.n_time + 1));
    const auto term = terminal_slice(grid, params.alpha);
    std::copy(term.begin(), term.end(), table.theta.begin() + static_cast<std::ptrdiff_t>(ss * grid.n_time));
    for (std::int64_t i = grid.n_time - 1; i >= 0; --i) {
        std::span<const double> next{table.theta.data() + ss * static_cast<std::size_t>(i + 1), ss};
        std::span<double> cur{table.theta.data() + ss * static_cast<std::size_t>(i), ss};
        const auto bad = step_backward(grid, params, rates, next, cur, dt);
        if (bad >= 0) throw SolverNaN(i, bad / grid.n_f, bad % grid.n_f);
    }
    return table;
}

struct QuoteLookup {
    double bid_offset = 0.0;
    double ask_offset = 0.0;
    bool bid_blocked = false;
    bool ask_blocked = false;
};

// Inventory grid index of q, or throws if q is off-grid.
inline std::int64_t inventory_index(const GridSpec& grid, double q) {
    const double x = (q - grid.q_min) / grid.dq;
    const double r = std::round(x);
    if (std::abs(x - r) > 1e-9 || r < 0.0 || r > static_cast<double>(grid.n_q() - 1))
        throw InvalidInput("quote_lookup: inventory " + std::to_string(q) + " is not on the grid");
    return static_cast<std::int64_t>(r);
}

// Bilinear interpolation of theta in (t, f) at inventory row j. f is clamped
// into [f_min, f_max].
namespace detail {

// Fractional grid coordinate, snapped onto a node when within rounding noise.
inline double grid_coordinate(double x, double hi) {
    x = std::clamp(x, 0.0, hi);
    const double r = std::round(x);
    return std::abs(x - r) <= 1e-9 * std::max(1.0, r) ? r : x;
}

}  // namespace detail

inline double interpolate_theta(const HJBTable& table, double t, std::int64_t j, double f) {
    const auto& g = table.grid;
    const double s = detail::grid_coordinate(t / g.dt(), static_cast<double>(g.n_time));
    const auto i0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(s)), g.n_time - 1);
    const double wt = s - static_cast<double>(i0);
    std::int64_t l0 = 0;
    double wf = 0.0;
    if (g.n_f > 1) {
        const double u = detail::grid_coordinate((f - g.f_min) / g.df(), static_cast<double>(g.n_f - 1));
        l0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(u)), g.n_f - 2);
        wf = u - static_cast<double>(l0);
    }
    auto at_time = [&](std::int64_t i) {
        const double a = table.at(i, j, l0);
        if (g.n_f == 1) return a;
        return (1.0 - wf) * a + wf * table.at(i, j, l0 + 1);
    };
    return (1.0 - wt) * at_time(i0) + wt * at_time(i0 + 1);
}

inline QuoteLookup quote_lookup(const HJBTable& table, double t, double q, double f_cash) {
    const auto& g = table.grid;
    if (!(t >= -1e-12 && t <= g.horizon * (1.0 + 1e-12)))
        throw InvalidInput("quote_lookup: t outside [0, horizon]");
    const auto j = inventory_index(g, q);
    const double here = interpolate_theta(table, t, j, f_cash);
    QuoteLookup out;
    out.ask_blocked = (j == 0);
    out.bid_blocked = (j == g.n_q() - 1);
    const auto& fill = table.params.fill;
    if (!out.ask_blocked) out.ask_offset = optimal_offset((interpolate_theta(table, t, j - 1, f_cash) - here) / g.dq, fill);
    if (!out.bid_blocked) out.bid_offset = optimal_offset((interpolate_theta(table, t, j + 1, f_cash) - here) / g.dq, fill);
    return out;
}

// Default funding truncation: fbar +/- `width` stationary standard deviations.
inline std::pair<double, double> default_funding_bounds(const OUParams& ou_cash, double width = 5.0) {
    const double sd = ou_cash.kappa > 0.0 ? ou_cash.stationary_sd() : 0.0;
    return {ou_cash.theta - width * sd, ou_cash.theta + width * sd};
}

}  // namespace fundmm
