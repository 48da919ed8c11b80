#pragma once

// Stress-window selection over a replay panel: sliding windows at a fixed
// stride, scored by mean funding, realized minute volatility, and a calm score.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fundmm/errors.hpp"
#include "fundmm/simulator.hpp"

namespace fundmm {

struct StressWindow {
    std::string label;  // high_funding, low_funding, high_volatility, calm
    std::int64_t start_ts = 0;
    std::int64_t end_ts = 0;  // exclusive
    double mean_funding = 0.0;
    double volatility = 0.0;
    double calm_score = 0.0;
};

struct WindowStats {
    std::int64_t start_ts;
    double mean_funding;
    double volatility;
};

// Statistics for every candidate window [start, start + window) with start on
// the stride lattice anchored at the first minute.
inline std::vector<WindowStats> window_statistics(const MarketPanel& panel, double window_hours,
                                                  double stride_hours = 1.0) {
    if (panel.minute_ts.empty()) throw InvalidInput("stress windows: empty panel");
    const auto window = static_cast<std::int64_t>(std::llround(window_hours * 3600.0));
    const auto stride = static_cast<std::int64_t>(std::llround(stride_hours * 3600.0));
    if (window <= 0 || stride <= 0) throw InvalidInput("stress windows: window and stride must be positive");
    const std::int64_t first = panel.minute_ts.front();
    const std::int64_t coverage_end = panel.minute_ts.back() + 60;
    if (coverage_end - first < window) throw InvalidInput("stress windows: panel shorter than the window");

    std::vector<WindowStats> out;
    std::size_t m_lo = 0, f_lo = 0;
    for (std::int64_t start = first; start + window <= coverage_end; start += stride) {
        const std::int64_t end = start + window;
        while (m_lo < panel.size() && panel.minute_ts[m_lo] < start) ++m_lo;
        while (f_lo < panel.funding_ts.size() && panel.funding_ts[f_lo] < start) ++f_lo;

        // funding: observations in the window, else the last known value
        double fsum = 0.0;
        std::size_t fcount = 0;
        for (std::size_t i = f_lo; i < panel.funding_ts.size() && panel.funding_ts[i] < end; ++i) {
            fsum += panel.funding[i];
            ++fcount;
        }
        double mean_f;
        if (fcount > 0) {
            mean_f = fsum / static_cast<double>(fcount);
        } else {
            mean_f = f_lo > 0 ? panel.funding[f_lo - 1] : panel.initial_funding;
        }

        std::vector<double> rets;
        for (std::size_t m = m_lo + 1; m < panel.size() && panel.minute_ts[m] < end; ++m)
            rets.push_back(std::log(panel.mid[m] / panel.mid[m - 1]));
        double vol = 0.0;
        if (rets.size() >= 2) {
            double mean = 0.0;
            for (double r : rets) mean += r;
            mean /= static_cast<double>(rets.size());
            double ss = 0.0;
            for (double r : rets) ss += (r - mean) * (r - mean);
            vol = std::sqrt(ss / static_cast<double>(rets.size() - 1));
        }
        out.push_back({start, mean_f, vol});
    }
    return out;
}

// Ties resolve to the earliest window.
inline std::array<StressWindow, 4> select_stress_windows(const MarketPanel& panel, double window_days = 3.0,
                                                         double stride_hours = 1.0) {
    const double window_hours = window_days * 24.0;
    const auto stats = window_statistics(panel, window_hours, stride_hours);
    const auto window = static_cast<std::int64_t>(std::llround(window_hours * 3600.0));

    double fa_min = std::numeric_limits<double>::infinity(), fa_max = -fa_min;
    double v_min = fa_min, v_max = -fa_min;
    for (const auto& s : stats) {
        fa_min = std::min(fa_min, std::abs(s.mean_funding));
        fa_max = std::max(fa_max, std::abs(s.mean_funding));
        v_min = std::min(v_min, s.volatility);
        v_max = std::max(v_max, s.volatility);
    }
    auto normalize = [](double x, double lo, double hi) { return hi > lo ? (x - lo) / (hi - lo) : 0.0; };
    auto calm = [&](const WindowStats& s) {
        return normalize(std::abs(s.mean_funding), fa_min, fa_max) + normalize(s.volatility, v_min, v_max);
    };

    std::size_t hi_f = 0, lo_f = 0, hi_v = 0, calm_i = 0;
    for (std::size_t i = 1; i < stats.size(); ++i) {
        if (stats[i].mean_funding > stats[hi_f].mean_funding) hi_f = i;
        if (stats[i].mean_funding < stats[lo_f].mean_funding) lo_f = i;
        if (stats[i].volatility > stats[hi_v].volatility) hi_v = i;
        if (calm(stats[i]) < calm(stats[calm_i])) calm_i = i;
    }
    auto make = [&](const char* label, std::size_t i) {
        const auto& s = stats[i];
        return StressWindow{label, s.start_ts, s.start_ts + window, s.mean_funding, s.volatility, calm(s)};
    };
    return {make("high_funding", hi_f), make("low_funding", lo_f), make("high_volatility", hi_v),
            make("calm", calm_i)};
}

}  // namespace fundmm
