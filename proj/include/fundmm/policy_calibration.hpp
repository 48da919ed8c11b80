#pragma once

// Grid-search calibration of the two benchmark policies that are tuned against
// simulated inventory risk: the scaled AS diagnostic and the linear
// funding-aware risk rule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fundmm/errors.hpp"
#include "fundmm/metrics.hpp"
#include "fundmm/policies.hpp"
#include "fundmm/simulator.hpp"

namespace fundmm {

inline std::vector<double> default_scale_grid() {
    std::vector<double> g;
    for (int i = 2; i <= 40; ++i) g.push_back(static_cast<double>(i) / 20.0);  // 0.10 .. 2.00
    return g;
}

struct ScaledAsInputs {
    const MarketPanel* panel = nullptr;
    FillCurve fill;
    PolicyConfig base;  // a pure_as policy
    SimConfig sim;
    std::vector<std::uint64_t> calibration_seeds;
    std::vector<std::uint64_t> reporting_seeds;  // must not overlap calibration seeds
    double target_rms = 0.0;
    std::vector<double> scales = default_scale_grid();
};

struct ScaledAsCalibration {
    double scale = 1.0;
    double achieved_rms = 0.0;
    std::vector<std::pair<double, double>> response;  // (scale, mean inventory RMS)
    std::string warning;
};

namespace detail {

inline void check_seed_sets(std::span<const std::uint64_t> calib, std::span<const std::uint64_t> report) {
    if (calib.empty()) throw ConfigError("calibration seed set is empty");
    for (auto s : calib)
        if (std::find(report.begin(), report.end(), s) != report.end())
            throw ConfigError("calibration seed " + std::to_string(s) + " also appears in the reporting seeds");
}

inline double mean_rms(std::span<const PathResult> rs) {
    double s = 0.0;
    for (const auto& r : rs) s += r.inventory_rms();
    return s / static_cast<double>(rs.size());
}

}  // namespace detail

inline ScaledAsCalibration calibrate_scaled_as(const ScaledAsInputs& in) {
    if (!in.panel) throw ConfigError("calibrate_scaled_as: no panel");
    if (!(in.target_rms > 0.0)) throw ConfigError("calibrate_scaled_as: target RMS must be > 0");
    if (in.base.kind != PolicyKind::pure_as && in.base.kind != PolicyKind::pure_as_scaled)
        throw ConfigError("calibrate_scaled_as: base policy must be pure_as");
    detail::check_seed_sets(in.calibration_seeds, in.reporting_seeds);
    auto scales = in.scales;
    std::sort(scales.begin(), scales.end());
    if (scales.empty()) throw ConfigError("calibrate_scaled_as: empty scale grid");

    ScaledAsCalibration out;
    double best_err = std::numeric_limits<double>::infinity();
    for (double s : scales) {
        PolicyConfig p = in.base;
        p.kind = PolicyKind::pure_as_scaled;
        p.scale = s;
        const auto rs = run_seeds(*in.panel, p, in.fill, in.calibration_seeds, in.sim);
        const double rms = detail::mean_rms(rs);
        out.response.emplace_back(s, rms);
        const double err = std::abs(rms - in.target_rms);
        if (err < best_err) {  // strict: ties keep the smaller scale
            best_err = err;
            out.scale = s;
            out.achieved_rms = rms;
        }
    }
    bool monotone = true;
    for (std::size_t i = 1; i < out.response.size(); ++i)
        if (out.response[i].second < out.response[i - 1].second) monotone = false;
    const double span = out.response.back().second - out.response.front().second;
    if (!(span > 0.0))
        out.warning = "inventory RMS does not respond to scale";
    else if (!monotone)
        out.warning = "inventory RMS is not monotone in scale";
    return out;
}

struct RiskRuleInputs {
    const MarketPanel* panel = nullptr;
    FillCurve fill;
    InventoryLimits limits;
    SimConfig sim;
    std::vector<std::uint64_t> calibration_seeds;
    std::vector<std::uint64_t> reporting_seeds;
    double target_rms = 0.0;
    double rms_tolerance = 0.10;  // relative band around the target
    std::vector<double> beta_q_grid{0.0, 0.01, 0.02, 0.05, 0.1, 0.2};
    std::vector<double> beta_f_grid{0.0, 1.0, 2.0, 5.0, 10.0, 20.0};
};

struct RiskRuleCandidate {
    double beta_q = 0.0;
    double beta_f = 0.0;
    double mean_equity = 0.0;
    double ci95 = 0.0;
    double rms = 0.0;
    double mean_inventory = 0.0;
    bool admissible = false;
};

struct RiskRuleCalibration {
    double beta_q = 0.0;
    double beta_f = 0.0;
    RiskRuleCandidate selected;
    std::vector<RiskRuleCandidate> grid;
};

inline PolicyConfig make_risk_policy(const FillCurve& fill, const InventoryLimits& limits, double beta_q,
                                     double beta_f) {
    PolicyConfig p;
    p.kind = PolicyKind::risk_calibrated;
    p.fill = fill;
    p.limits = limits;
    p.beta_q = beta_q;
    p.beta_f = beta_f;
    return p;
}

// Among grid points whose mean inventory RMS lies within the tolerance band
// (the all-zero point is always admissible), pick the highest mean final
// equity; ties go to the smaller beta_f, then the smaller beta_q.
inline RiskRuleCalibration calibrate_risk_rule(const RiskRuleInputs& in) {
    if (!in.panel) throw ConfigError("calibrate_risk_rule: no panel");
    if (!(in.target_rms > 0.0)) throw ConfigError("calibrate_risk_rule: target RMS must be > 0");
    detail::check_seed_sets(in.calibration_seeds, in.reporting_seeds);
    auto bq = in.beta_q_grid, bf = in.beta_f_grid;
    std::sort(bq.begin(), bq.end());
    std::sort(bf.begin(), bf.end());
    if (std::find(bq.begin(), bq.end(), 0.0) == bq.end() || std::find(bf.begin(), bf.end(), 0.0) == bf.end())
        throw ConfigError("calibrate_risk_rule: both beta grids must contain 0");

    RiskRuleCalibration out;
    bool have = false;
    for (double f : bf) {
        for (double q : bq) {
            const auto p = make_risk_policy(in.fill, in.limits, q, f);
            const auto rs = run_seeds(*in.panel, p, in.fill, in.calibration_seeds, in.sim);
            std::vector<double> finals;
            double inv = 0.0;
            for (const auto& r : rs) {
                finals.push_back(r.final_equity());
                inv += r.mean_inventory();
            }
            RiskRuleCandidate c;
            c.beta_q = q;
            c.beta_f = f;
            c.mean_equity = mean_of(finals);
            c.ci95 = 1.96 * standard_error(finals);
            c.rms = detail::mean_rms(rs);
            c.mean_inventory = inv / static_cast<double>(rs.size());
            c.admissible = (q == 0.0 && f == 0.0) || std::abs(c.rms - in.target_rms) <= in.rms_tolerance * in.target_rms;
            out.grid.push_back(c);
            if (c.admissible && (!have || c.mean_equity > out.selected.mean_equity)) {
                out.selected = c;
                have = true;
            }
        }
    }
    out.beta_q = out.selected.beta_q;
    out.beta_f = out.selected.beta_f;
    return out;
}

}  // namespace fundmm
