#pragma once

// Effective fill-intensity calibration. Minute-level crossing records are
// bucketed into hit counts per quote distance under one of two counting rules,
// then lambda(delta) = Lambda * exp(-k * delta) is fitted to the implied
// per-threshold intensities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fundmm/errors.hpp"

namespace fundmm {

enum class HitMode { volume_minute, minute_hit };

inline std::string_view to_string(HitMode m) {
    return m == HitMode::volume_minute ? "volume_minute" : "minute_hit";
}

inline HitMode parse_hit_mode(std::string_view s) {
    if (s == "volume_minute") return HitMode::volume_minute;
    if (s == "minute_hit") return HitMode::minute_hit;
    throw ConfigError("unknown fill mode '" + std::string(s) + "' (expected volume_minute or minute_hit)");
}

struct Crossing {
    double distance = 0.0;  // quote currency from mid
    double volume = 0.0;    // contracts crossed at that distance
};

struct MinuteTrades {
    std::int64_t minute_ts = 0;  // epoch seconds
    std::vector<Crossing> crossings;
};

struct HitPanel {
    std::int64_t minutes = 0;
    std::vector<double> thresholds;  // ascending
    std::vector<std::int64_t> hits;
    HitMode mode = HitMode::volume_minute;
    double quote_size = 1.0;

    void validate() const {
        if (thresholds.size() != hits.size()) throw InvalidInput("hit panel: thresholds/hits size mismatch");
        if (minutes <= 0) throw InvalidInput("hit panel: minutes must be positive");
        for (std::size_t i = 0; i < hits.size(); ++i) {
            if (hits[i] < 0 || hits[i] > minutes) throw InvalidInput("hit panel: hits outside [0, minutes]");
            if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
                throw InvalidInput("hit panel: thresholds must be strictly ascending");
            if (i > 0 && hits[i] > hits[i - 1]) throw InvalidInput("hit panel: hits increase with distance");
        }
    }
};

struct FillCurve {
    double lambda0 = 0.0;    // fills per hour at the touch
    double k = 1.0;          // 1 / quote currency
    double delta_min = 0.0;  // quote floor

    void validate() const {
        if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) throw InvalidInput("fill curve: lambda0 must be >= 0");
        if (!(k >= 0.0) || !std::isfinite(k)) throw InvalidInput("fill curve: k must be >= 0");
        if (!(delta_min >= 0.0) || !std::isfinite(delta_min))
            throw InvalidInput("fill curve: delta_min must be >= 0");
    }

    double intensity(double delta) const { return lambda0 * std::exp(-k * delta); }
    double max_intensity() const { return intensity(delta_min); }
};

class UninformativePanel : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class NonDecayingFills : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

// `n` log-spaced distances between lo_bps and hi_bps basis points of `mid`.
inline std::vector<double> default_thresholds(double mid, std::size_t n = 8, double lo_bps = 0.5,
                                              double hi_bps = 50.0) {
    if (!(mid > 0.0) || n < 2 || !(lo_bps > 0.0) || !(hi_bps > lo_bps))
        throw InvalidInput("default_thresholds: invalid arguments");
    std::vector<double> out(n);
    const double a = std::log(lo_bps), b = std::log(hi_bps);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = mid * 1e-4 * std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    return out;
}

// Deepest distance at which a minute counts as a hit under `mode`; a minute
// is a hit at delta iff delta <= this depth. Returns -1 when nothing qualifies.
inline double qualifying_depth(const MinuteTrades& m, HitMode mode, double quote_size) {
    double depth = -1.0;
    if (mode == HitMode::minute_hit) {
        for (const auto& c : m.crossings) depth = std::max(depth, c.distance);
        return depth;
    }
    std::vector<Crossing> sorted = m.crossings;
    std::sort(sorted.begin(), sorted.end(),
              [](const Crossing& a, const Crossing& b) { return a.distance > b.distance; });
    double cum = 0.0;
    for (const auto& c : sorted) {
        cum += c.volume;
        if (cum >= quote_size) return c.distance;
    }
    return depth;
}

// Counts qualifying minutes per threshold. `observed_minutes` is the number of
// minutes in the sample; minutes absent from `trades` had no crossings. Zero
// means "use trades.size()".
inline HitPanel bucket_hits(std::span<const MinuteTrades> trades, std::span<const double> thresholds,
                            HitMode mode, double quote_size, std::int64_t observed_minutes = 0) {
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (!(thresholds[i] > thresholds[i - 1]))
            throw InvalidInput("bucket_hits: thresholds must be strictly ascending");
    if (thresholds.empty()) throw InvalidInput("bucket_hits: no thresholds");
    if (mode == HitMode::volume_minute && !(quote_size > 0.0))
        throw InvalidInput("bucket_hits: quote_size must be > 0 for volume_minute");
    const auto n_trades = static_cast<std::int64_t>(trades.size());
    if (observed_minutes != 0 && observed_minutes < n_trades)
        throw InvalidInput("bucket_hits: observed minutes fewer than minutes with trades");

    HitPanel panel;
    panel.minutes = observed_minutes != 0 ? observed_minutes : n_trades;
    panel.thresholds.assign(thresholds.begin(), thresholds.end());
    panel.hits.assign(thresholds.size(), 0);
    panel.mode = mode;
    panel.quote_size = quote_size;
    for (const auto& m : trades) {
        const double depth = qualifying_depth(m, mode, quote_size);
        // thresholds ascending: hits are a prefix
        for (std::size_t i = 0; i < thresholds.size() && thresholds[i] <= depth; ++i) ++panel.hits[i];
    }
    return panel;
}

struct FillFit {
    FillCurve curve;
    std::vector<double> hit_rates;             // hits / minutes per threshold
    std::vector<double> intensity_per_hour;    // -60 ln(1 - hit rate); NaN where unusable
    std::size_t used_thresholds = 0;
};

// Weighted least squares of ln(lambda_hat) on delta, weights hits*(1 - hits/minutes).
inline FillFit fit_fill_curve(const HitPanel& panel, double delta_min) {
    panel.validate();
    if (!(delta_min >= 0.0)) throw InvalidInput("fit_fill_curve: delta_min must be >= 0");
    FillFit fit;
    const double minutes = static_cast<double>(panel.minutes);
    double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < panel.hits.size(); ++i) {
        const double h = static_cast<double>(panel.hits[i]);
        const double p = h / minutes;
        fit.hit_rates.push_back(p);
        if (panel.hits[i] == 0 || panel.hits[i] == panel.minutes) {
            fit.intensity_per_hour.push_back(std::nan(""));
            continue;
        }
        const double lam = -60.0 * std::log1p(-p);
        fit.intensity_per_hour.push_back(lam);
        const double w = h * (1.0 - p);
        const double x = panel.thresholds[i], y = std::log(lam);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
        ++fit.used_thresholds;
    }
    if (fit.used_thresholds < 2)
        throw UninformativePanel("fit_fill_curve: uninformative panel (need >= 2 thresholds with 0 < hits < minutes)");
    const double xm = sx / sw, ym = sy / sw;
    const double var = sxx / sw - xm * xm;
    if (!(var > 0.0)) throw UninformativePanel("fit_fill_curve: uninformative panel (no threshold spread)");
    const double slope = (sxy / sw - xm * ym) / var;
    const double intercept = ym - slope * xm;
    if (!(-slope > 0.0))
        throw NonDecayingFills("fit_fill_curve: non-decaying fills (fitted k <= 0)");
    fit.curve = FillCurve{std::exp(intercept), -slope, delta_min};
    return fit;
}

}  // namespace fundmm
