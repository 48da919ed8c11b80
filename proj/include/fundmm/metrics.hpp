#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fundmm/errors.hpp"
#include "fundmm/simulator.hpp"

namespace fundmm {

struct MetricsRow {
    std::string policy;
    std::size_t n_seeds = 0;
    double mean_final_equity = 0.0;
    double ci95 = 0.0;               // 1.96 * sample SD / sqrt(n)
    double delta_vs_baseline = 0.0;  // mean paired difference of final equity
    double win_rate = 0.0;           // strict: result > baseline
    double inventory_rms = 0.0;      // mean over seeds of per-path RMS
    double max_drawdown = 0.0;       // mean over seeds of per-path drawdown
    double fill_rate = 0.0;          // total fills / total active quoted sides
    double mean_inventory = 0.0;
    double mean_funding_paid = 0.0;
};

inline double mean_of(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

// Sample standard error of the mean; 0 for fewer than two values.
inline double standard_error(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean_of(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1)) / std::sqrt(static_cast<double>(x.size()));
}

inline MetricsRow compute_metrics(std::span<const PathResult> results, std::span<const PathResult> baseline) {
    if (results.size() != baseline.size())
        throw InvalidInput("compute_metrics: result and baseline seed sets differ in size");
    if (results.empty()) throw InvalidInput("compute_metrics: no results");
    for (std::size_t i = 0; i < results.size(); ++i)
        if (results[i].seed != baseline[i].seed)
            throw InvalidInput("compute_metrics: seed mismatch at position " + std::to_string(i));

    MetricsRow row;
    row.policy = results.front().policy;
    row.n_seeds = results.size();
    std::vector<double> finals, deltas;
    double wins = 0.0, rms = 0.0, dd = 0.0, inv = 0.0, fpaid = 0.0;
    std::int64_t fills = 0, quotes = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        const double fin = r.final_equity();
        const double base = baseline[i].final_equity();
        finals.push_back(fin);
        deltas.push_back(fin - base);
        if (fin > base) wins += 1.0;
        rms += r.inventory_rms();
        dd += r.max_drawdown();
        inv += r.mean_inventory();
        fpaid += r.funding_paid;
        fills += r.n_fills();
        quotes += r.n_quotes;
    }
    const double n = static_cast<double>(results.size());
    row.mean_final_equity = mean_of(finals);
    row.ci95 = 1.96 * standard_error(finals);
    row.delta_vs_baseline = mean_of(deltas);
    row.win_rate = wins / n;
    row.inventory_rms = rms / n;
    row.max_drawdown = dd / n;
    row.mean_inventory = inv / n;
    row.mean_funding_paid = fpaid / n;
    row.fill_rate = quotes > 0 ? static_cast<double>(fills) / static_cast<double>(quotes) : 0.0;
    return row;
}

}  // namespace fundmm
