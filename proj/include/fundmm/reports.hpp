#pragma once

// JSON / CSV report builders. All output is a pure function of its inputs so
// reruns produce identical bytes; wall-clock data goes to log files only.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fundmm/fill_calib.hpp"
#include "fundmm/funding_calib.hpp"
#include "fundmm/io.hpp"
#include "fundmm/metrics.hpp"
#include "fundmm/simulator.hpp"
#include "fundmm/stress.hpp"

namespace fundmm {

namespace detail {

// JSON has no NaN/Inf; emit null instead.
inline nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace detail

struct FundingReport {
    std::string asset;
    OUParams ou;
    JumpParams jump;
    bool jump_fitted = false;
    double ll_ou = 0.0;
    double ll_jump = 0.0;
    double ll_gain = 0.0;
    ResidualDiagnostics diagnostics;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::optional<double> ll_ou_test;
    std::optional<double> price_correlation;
    std::size_t clamped_variances = 0;
};

inline nlohmann::json to_json(const FundingReport& r) {
    using detail::num;
    nlohmann::json j{{"asset", r.asset},
                     {"kappa", num(r.ou.kappa)},
                     {"theta", num(r.ou.theta)},
                     {"sigma", num(r.ou.sigma)},
                     {"half_life_hours", num(half_life(r.ou.kappa))},
                     {"jump_lambda", r.jump_fitted ? num(r.jump.lambda_j) : nlohmann::json(nullptr)},
                     {"jump_mu", r.jump_fitted ? num(r.jump.mu_j) : nlohmann::json(nullptr)},
                     {"jump_sigma", r.jump_fitted ? num(r.jump.sigma_j) : nlohmann::json(nullptr)},
                     {"jump_probability_per_hour", r.jump_fitted ? num(r.jump.step_probability(1.0)) : nlohmann::json(nullptr)},
                     {"ll_ou", num(r.ll_ou)},
                     {"ll_jump", r.jump_fitted ? num(r.ll_jump) : nlohmann::json(nullptr)},
                     {"ll_gain", r.jump_fitted ? num(r.ll_gain) : nlohmann::json(nullptr)},
                     {"skewness", num(r.diagnostics.skewness)},
                     {"excess_kurtosis", num(r.diagnostics.excess_kurtosis)},
                     {"n_train", r.n_train},
                     {"n_test", r.n_test},
                     {"ll_ou_test", r.ll_ou_test ? num(*r.ll_ou_test) : nlohmann::json(nullptr)},
                     {"funding_price_correlation", r.price_correlation ? num(*r.price_correlation) : nlohmann::json(nullptr)},
                     {"clamped_variances", r.clamped_variances}};
    return j;
}

struct FillReport {
    std::string asset;
    HitMode mode = HitMode::volume_minute;
    double quote_size = 1.0;
    std::int64_t minutes = 0;
    std::vector<double> thresholds;
    std::vector<std::int64_t> hits;
    FillFit fit;
};

inline nlohmann::json to_json(const FillReport& r) {
    nlohmann::json intensity = nlohmann::json::array();
    for (double x : r.fit.intensity_per_hour) intensity.push_back(detail::num(x));
    return {{"asset", r.asset},
            {"mode", std::string(to_string(r.mode))},
            {"lambda0_per_hour", detail::num(r.fit.curve.lambda0)},
            {"k_per_quote_unit", detail::num(r.fit.curve.k)},
            {"delta_min", detail::num(r.fit.curve.delta_min)},
            {"thresholds", r.thresholds},
            {"hit_rates", r.fit.hit_rates},
            {"hits", r.hits},
            {"minutes", r.minutes},
            {"quote_size", r.quote_size},
            {"intensity_per_hour", intensity}};
}

// Reads back the curve written by to_json(FillReport).
inline FillCurve fill_curve_from_json(const nlohmann::json& j, const std::string& name) {
    try {
        const FillCurve c{j.at("lambda0_per_hour").get<double>(), j.at("k_per_quote_unit").get<double>(),
                          j.at("delta_min").get<double>()};
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(name + ": not a fill calibration report (" + e.what() + ")");
    }
}

inline OUParams ou_from_json(const nlohmann::json& j, const std::string& name) {
    try {
        OUParams p{j.at("kappa").get<double>(), j.at("theta").get<double>(), j.at("sigma").get<double>()};
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(name + ": not a funding calibration report (" + e.what() + ")");
    }
}

inline std::string seeds_csv(const std::vector<std::vector<PathResult>>& by_policy) {
    std::string out = "seed,policy,final_equity,inventory_rms,max_drawdown,n_fills,funding_paid\n";
    for (const auto& rs : by_policy)
        for (const auto& r : rs)
            out += std::to_string(r.seed) + "," + r.policy + "," + format_double(r.final_equity()) + "," +
                   format_double(r.inventory_rms()) + "," + format_double(r.max_drawdown()) + "," +
                   std::to_string(r.n_fills()) + "," + format_double(r.funding_paid) + "\n";
    return out;
}

inline nlohmann::json to_json(const MetricsRow& m) {
    using detail::num;
    return {{"policy", m.policy},
            {"n_seeds", m.n_seeds},
            {"final_equity", num(m.mean_final_equity)},
            {"ci95", num(m.ci95)},
            {"delta_vs_pure_as", num(m.delta_vs_baseline)},
            {"win_rate", num(m.win_rate)},
            {"inventory_rms", num(m.inventory_rms)},
            {"max_drawdown", num(m.max_drawdown)},
            {"fill_rate", num(m.fill_rate)},
            {"mean_inventory", num(m.mean_inventory)},
            {"mean_funding_paid", num(m.mean_funding_paid)}};
}

struct StressRow {
    std::string policy;
    double delta = 0.0;
    double win_rate = 0.0;
    double inventory_rms_ratio = 0.0;  // policy RMS / pure_as RMS
    MetricsRow metrics;
};

struct StressResult {
    StressWindow window;
    std::vector<StressRow> rows;
};

inline nlohmann::json to_json(const std::vector<StressResult>& res, const std::string& asset) {
    using detail::num;
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& r : res) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& s : r.rows)
            rows.push_back({{"policy", s.policy},
                            {"delta", num(s.delta)},
                            {"win_rate", num(s.win_rate)},
                            {"inventory_rms_ratio", num(s.inventory_rms_ratio)},
                            {"final_equity", num(s.metrics.mean_final_equity)},
                            {"ci95", num(s.metrics.ci95)},
                            {"inventory_rms", num(s.metrics.inventory_rms)}});
        windows.push_back({{"label", r.window.label},
                           {"start", format_timestamp(r.window.start_ts)},
                           {"end", format_timestamp(r.window.end_ts)},
                           {"mean_funding", num(r.window.mean_funding)},
                           {"volatility", num(r.window.volatility)},
                           {"rows", rows}});
    }
    return {{"asset", asset}, {"windows", windows}};
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace fundmm
