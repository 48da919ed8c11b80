#pragma once

// Synthetic market data with known ground truth: a minute mid path (lognormal
// steps with optional volatility spikes), an hourly OU(+jump) funding series
// with optional additive shifts, and a minute crossing tape generated from an
// exponential fill curve.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fundmm/errors.hpp"
#include "fundmm/fill_calib.hpp"
#include "fundmm/funding_calib.hpp"
#include "fundmm/simulator.hpp"

namespace fundmm {

struct HourRange {
    double start_hour = 0.0;  // offset from the series start
    double end_hour = 0.0;    // exclusive
    double value = 0.0;       // vol multiplier or funding offset

    bool contains(double h) const { return h >= start_hour && h < end_hour; }
};

struct SyntheticSpec {
    std::uint64_t seed = 1;
    std::int64_t start_ts = 1704067200;  // 2024-01-01T00:00:00Z
    double days = 30.0;

    double mid0 = 3000.0;
    double minute_vol = 0.0005;  // SD of minute log returns
    std::vector<HourRange> vol_spikes;

    OUParams funding{0.1247, 1e-5, 2e-5};  // fractional per hour
    double funding0 = 1e-5;
    JumpParams jumps{0.0, 0.0, 0.0};
    std::vector<HourRange> funding_shifts;  // added to the observed rate

    bool tape = true;
    FillCurve fill{120.0, 0.5, 0.0};  // ground truth for the volume_minute rule
    double quote_size = 1.0;
    double touch_probability = 0.3;    // small-volume print deeper than the qualifying depth
    double shallow_probability = 0.5;  // extra print inside the qualifying depth

    void validate() const {
        if (!(days > 0.0)) throw ConfigError("synthetic: days must be > 0");
        if (!(mid0 > 0.0)) throw ConfigError("synthetic: mid0 must be > 0");
        if (!(minute_vol >= 0.0)) throw ConfigError("synthetic: minute_vol must be >= 0");
        if (!(funding.kappa >= 0.0) || !(funding.sigma >= 0.0))
            throw ConfigError("synthetic: funding kappa and sigma must be >= 0");
        if (!(jumps.lambda_j >= 0.0) || !(jumps.sigma_j >= 0.0))
            throw ConfigError("synthetic: jump intensity and size must be >= 0");
        fill.validate();
        if (tape && fill.lambda0 > 0.0 && !(fill.k > 0.0)) throw ConfigError("synthetic: fill k must be > 0");
        if (!(quote_size > 0.0)) throw ConfigError("synthetic: quote_size must be > 0");
        for (double p : {touch_probability, shallow_probability})
            if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synthetic: probabilities must lie in [0, 1]");
        for (const auto& r : vol_spikes)
            if (!(r.value >= 0.0)) throw ConfigError("synthetic: vol spike multiplier must be >= 0");
    }
};

struct SyntheticData {
    MarketPanel panel;
    FundingSeries funding;  // timestamps in epoch hours
    std::vector<MinuteTrades> tape;
    std::int64_t minutes = 0;
};

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const auto n_min = static_cast<std::int64_t>(std::llround(spec.days * 1440.0));
    const auto n_hours = static_cast<std::int64_t>(std::ceil(spec.days * 24.0 - 1e-9));
    if (n_min < 2) throw ConfigError("synthetic: fewer than two minutes");

    // Independent streams so that, e.g., switching the tape off leaves prices unchanged.
    std::mt19937_64 price_gen(spec.seed * 3 + 0), funding_gen(spec.seed * 3 + 1), tape_gen(spec.seed * 3 + 2);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    SyntheticData out;
    out.minutes = n_min;
    auto& panel = out.panel;
    double s = spec.mid0;
    for (std::int64_t m = 0; m < n_min; ++m) {
        panel.minute_ts.push_back(spec.start_ts + 60 * m);
        panel.mid.push_back(s);
        double vol = spec.minute_vol;
        const double hour = static_cast<double>(m) / 60.0;
        for (const auto& r : spec.vol_spikes)
            if (r.contains(hour)) vol *= r.value;
        const double shock = z(price_gen);
        if (vol > 0.0) s *= std::exp(vol * shock - 0.5 * vol * vol);
    }

    const auto& p = spec.funding;
    const double decay = std::exp(-p.kappa);
    const double sd = p.kappa > 0.0 ? p.sigma * std::sqrt((1.0 - decay * decay) / (2.0 * p.kappa)) : p.sigma;
    const double pj = spec.jumps.step_probability(1.0);
    double x = spec.funding0;
    for (std::int64_t h = 0; h < n_hours; ++h) {
        double shift = 0.0;
        for (const auto& r : spec.funding_shifts)
            if (r.contains(static_cast<double>(h))) shift += r.value;
        const double obs = x + shift;
        const std::int64_t ts = spec.start_ts + 3600 * h;
        panel.funding_ts.push_back(ts);
        panel.funding.push_back(obs);
        out.funding.timestamps.push_back(static_cast<double>(ts) / 3600.0);
        out.funding.values.push_back(obs);
        double next = p.theta + (x - p.theta) * decay + sd * z(funding_gen);
        const double uj = u(funding_gen), jz = z(funding_gen);
        if (uj < pj) next += spec.jumps.mu_j + spec.jumps.sigma_j * jz;
        x = next;
    }
    panel.initial_funding = panel.funding.empty() ? spec.funding0 : panel.funding.front();

    if (!spec.tape || spec.fill.lambda0 <= 0.0) return out;
    // Qualifying depth D solves P(D >= delta) = 1 - exp(-lambda(delta)/60): with
    // E ~ Exp(1), D = ln(Lambda / (60 E)) / k.
    const double k = spec.fill.k;
    const double qs = spec.quote_size;
    for (std::int64_t m = 0; m < n_min; ++m) {
        const double e = std::max(-std::log1p(-u(tape_gen)), 1e-300);
        const double depth = std::log(spec.fill.lambda0 / (60.0 * e)) / k;
        const double a = u(tape_gen), b = u(tape_gen), c = u(tape_gen), d = u(tape_gen);
        const double g = u(tape_gen), r = u(tape_gen);
        MinuteTrades mt{panel.minute_ts[static_cast<std::size_t>(m)], {}};
        if (depth >= 0.0) {
            if (b < spec.shallow_probability) mt.crossings.push_back({depth * c, qs * (0.1 + d)});
            mt.crossings.push_back({depth, qs * (1.0 + a)});
        }
        if (g < spec.touch_probability) {
            const double base = depth >= 0.0 ? depth : 0.0;
            const double extra = -std::log1p(-r) / k;
            mt.crossings.push_back({base + extra, qs * 0.5 * d});  // always below quote_size
        }
        if (!mt.crossings.empty()) out.tape.push_back(std::move(mt));
    }
    return out;
}

}  // namespace fundmm
