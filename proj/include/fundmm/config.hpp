#pragma once

// Run configuration: one JSON document per asset and experiment. Every field
// is checked (type, range, unknown keys) when the file is loaded, before any
// data is read or any compute starts.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fundmm/errors.hpp"
#include "fundmm/fill_calib.hpp"
#include "fundmm/funding_calib.hpp"
#include "fundmm/io.hpp"
#include "fundmm/policies.hpp"
#include "fundmm/simulator.hpp"
#include "fundmm/synthetic.hpp"

namespace fundmm {

using json = nlohmann::json;

struct SeedRange {
    std::uint64_t first = 1;
    std::uint64_t last = 100;

    std::vector<std::uint64_t> list() const {
        std::vector<std::uint64_t> v;
        for (auto s = first; s <= last; ++s) v.push_back(s);
        return v;
    }
    bool overlaps(const SeedRange& o) const { return first <= o.last && o.first <= last; }
};

// Parses "a-b", "a:b" or a single seed.
inline SeedRange parse_seed_range(const std::string& s) {
    const auto sep = s.find_first_of("-:");
    std::int64_t a = 0, b = 0;
    const bool ok = sep == std::string::npos
                        ? detail::parse_int(s, a) && (b = a, true)
                        : detail::parse_int(std::string_view(s).substr(0, sep), a) &&
                              detail::parse_int(std::string_view(s).substr(sep + 1), b);
    if (!ok || a < 1 || b < a) throw ConfigError("invalid seed range '" + s + "' (expected FIRST-LAST with 1 <= FIRST <= LAST)");
    return {static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b)};
}

struct PolicySpec {
    std::string name;
    PolicyKind kind = PolicyKind::pure_as;
    double scale = 1.0;
    bool calibrate_scale = false;  // pure_as_scaled: match the hjb_fd inventory RMS
    double beta_q = 0.0;
    double beta_f = 0.0;
    bool calibrate_betas = false;  // risk_calibrated: grid search against the hjb_fd RMS
    std::vector<double> beta_q_grid;
    std::vector<double> beta_f_grid;

    std::string label() const { return name.empty() ? std::string(to_string(kind)) : name; }
};

struct FillSettings {
    enum class Source { calibrate, inline_curve };
    Source source = Source::calibrate;
    HitMode mode = HitMode::volume_minute;
    double quote_size = 1.0;  // contracts per quote; also the inventory step
    double delta_min = 0.0;
    std::vector<double> thresholds;  // empty: log-spaced in bps of the mean mid
    std::size_t n_thresholds = 8;
    double lo_bps = 0.5;
    double hi_bps = 50.0;
    FillCurve curve;  // inline source
};

struct FundingSettings {
    enum class Source { calibration, inline_params };
    Source source = Source::calibration;
    OUParams params;  // fractional units, inline source
    double train_fraction = 0.8;
    bool fit_jumps = true;
};

struct HJBSettings {
    double alpha = 0.0;
    double phi = 0.0;
    double horizon_hours = 1.0;
    std::int64_t n_time = 2048;
    double q_max = 10.0;  // inventory grid is [-q_max, q_max] in steps of the quote size
    std::int64_t n_f = 61;
    double width_sd = 5.0;
    std::optional<double> f_min, f_max;  // cash units; default theta +/- width_sd stationary SDs
    std::optional<double> price_ref;     // cash scaling price; default mean calibration mid
    HorizonMode horizon_mode = HorizonMode::rolling;
};

struct RunConfig {
    std::string asset;
    std::filesystem::path config_dir;
    std::filesystem::path data_dir;
    std::string mid_file = "mid.csv";
    std::string funding_file = "funding.csv";
    std::string tape_file;  // optional unless the fill source is calibrate
    std::filesystem::path output_dir;

    FundingSettings funding;
    FillSettings fill;
    HJBSettings hjb;
    std::vector<PolicySpec> policies;
    SeedRange seeds{1, 100};
    SeedRange calibration_seeds{1001, 1020};
    std::optional<std::int64_t> holdout_start, holdout_end;

    SimConfig sim;
    double max_gap_minutes = 10.0;
    unsigned workers = 0;
    double stress_window_days = 3.0;
    double stress_stride_hours = 1.0;

    std::string mid_path() const { return (data_dir / mid_file).string(); }
    std::string funding_path() const { return (data_dir / funding_file).string(); }
    std::string tape_path() const { return tape_file.empty() ? std::string() : (data_dir / tape_file).string(); }
    std::string output(const std::string& name) const { return (output_dir / name).string(); }

    bool has_policy(PolicyKind k) const {
        for (const auto& p : policies)
            if (p.kind == k) return true;
        return false;
    }

    void validate() const;
};

namespace detail {

// Typed accessor over a JSON object that remembers which keys were read so
// leftovers can be reported as unknown.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError(where(key) + ": required field is missing");
        return j_.at(key);
    }

    double number(const std::string& key) {
        const auto& v = raw(key);
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(where(key) + ": expected a finite number");
        return x;
    }
    double number(const std::string& key, double def) { return has(key) ? number(key) : def; }

    std::int64_t integer(const std::string& key) {
        const auto& v = raw(key);
        if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
        return v.get<std::int64_t>();
    }
    std::int64_t integer(const std::string& key, std::int64_t def) { return has(key) ? integer(key) : def; }

    std::string string(const std::string& key) {
        const auto& v = raw(key);
        if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
        return v.get<std::string>();
    }
    std::string string(const std::string& key, const std::string& def) { return has(key) ? string(key) : def; }

    bool boolean(const std::string& key, bool def) {
        if (!has(key)) return def;
        const auto& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
        return v.get<bool>();
    }

    std::vector<double> numbers(const std::string& key) {
        const auto& v = raw(key);
        if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of numbers");
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number()) throw ConfigError(where(key) + ": expected an array of numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }

    Fields object(const std::string& key) { return Fields(raw(key), where(key)); }

    std::string where(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline json parse_json(const std::string& text, const std::string& name) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(name + ": malformed JSON: " + e.what());
    }
}

inline std::int64_t config_timestamp(Fields& f, const std::string& key) {
    const auto s = f.string(key);
    std::int64_t ts = 0;
    if (!try_parse_timestamp(s, ts)) throw ConfigError(f.where(key) + ": invalid timestamp '" + s + "'");
    return ts;
}

inline SeedRange seed_range(Fields& parent, const std::string& key, SeedRange def) {
    if (!parent.has(key)) return def;
    auto f = parent.object(key);
    const auto a = f.integer("first"), b = f.integer("last");
    f.finish();
    if (a < 1 || b < a) throw ConfigError(parent.where(key) + ": need 1 <= first <= last");
    return {static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b)};
}

inline void require(bool ok, const std::string& where, const std::string& what) {
    if (!ok) throw ConfigError(where + ": " + what);
}

}  // namespace detail

inline void RunConfig::validate() const {
    if (asset.empty()) throw ConfigError("config.asset: must be non-empty");
    if (policies.empty()) throw ConfigError("config.policies: at least one policy is required");
    std::set<std::string> labels;
    for (const auto& p : policies)
        if (!labels.insert(p.label()).second) throw ConfigError("config.policies: duplicate label '" + p.label() + "'");
    if (seeds.overlaps(calibration_seeds))
        throw ConfigError("config.calibration_seeds: must not overlap the reporting seeds");
    if (holdout_start && holdout_end && !(*holdout_start < *holdout_end))
        throw ConfigError("config.holdout: start must precede end");
    if (fill.source == FillSettings::Source::calibrate && tape_file.empty())
        throw ConfigError("config.data.tape: required when fill.source is \"calibrate\"");
}

// Data paths resolve against data.dir, which itself resolves against the
// directory holding the config file.
inline RunConfig parse_run_config(const json& j, const std::filesystem::path& config_dir = {}) {
    using detail::require;
    RunConfig c;
    c.config_dir = config_dir;
    detail::Fields root(j, "config");
    c.asset = root.string("asset");

    {
        auto d = root.object("data");
        c.data_dir = config_dir / d.string("dir", ".");
        c.mid_file = d.string("mid", c.mid_file);
        c.funding_file = d.string("funding", c.funding_file);
        c.tape_file = d.string("tape", "");
        d.finish();
    }
    c.output_dir = config_dir / root.string("output_dir", "out/" + c.asset);

    if (root.has("funding")) {
        auto f = root.object("funding");
        const auto src = f.string("source", "calibration");
        if (src == "calibration") {
            c.funding.source = FundingSettings::Source::calibration;
        } else if (src == "inline") {
            c.funding.source = FundingSettings::Source::inline_params;
            c.funding.params = {f.number("kappa"), f.number("theta"), f.number("sigma")};
            require(c.funding.params.kappa >= 0.0 && c.funding.params.sigma >= 0.0, f.where("kappa"),
                    "kappa and sigma must be >= 0");
        } else {
            throw ConfigError(f.where("source") + ": expected \"calibration\" or \"inline\"");
        }
        c.funding.train_fraction = f.number("train_fraction", 0.8);
        require(c.funding.train_fraction > 0.0 && c.funding.train_fraction <= 1.0, f.where("train_fraction"),
                "must lie in (0, 1]");
        c.funding.fit_jumps = f.boolean("fit_jumps", true);
        f.finish();
    }

    {
        auto f = root.object("fill");
        const auto src = f.string("source", "calibrate");
        try {
            c.fill.mode = parse_hit_mode(f.string("mode", "volume_minute"));
        } catch (const InvalidInput&) {
            throw ConfigError(f.where("mode") + ": expected \"volume_minute\" or \"minute_hit\"");
        }
        c.fill.quote_size = f.number("quote_size", 1.0);
        require(c.fill.quote_size > 0.0, f.where("quote_size"), "must be > 0");
        c.fill.delta_min = f.number("delta_min", 0.0);
        require(c.fill.delta_min >= 0.0, f.where("delta_min"), "must be >= 0");
        if (src == "calibrate") {
            c.fill.source = FillSettings::Source::calibrate;
        } else if (src == "inline") {
            c.fill.source = FillSettings::Source::inline_curve;
            c.fill.curve = {f.number("lambda0_per_hour"), f.number("k"), c.fill.delta_min};
            require(c.fill.curve.lambda0 >= 0.0, f.where("lambda0_per_hour"), "must be >= 0");
            require(c.fill.curve.k > 0.0, f.where("k"), "must be > 0");
        } else {
            throw ConfigError(f.where("source") + ": expected \"calibrate\" or \"inline\"");
        }
        if (f.has("thresholds")) {
            c.fill.thresholds = f.numbers("thresholds");
            require(c.fill.thresholds.size() >= 2, f.where("thresholds"), "need at least 2 thresholds");
            for (std::size_t i = 0; i < c.fill.thresholds.size(); ++i)
                require(c.fill.thresholds[i] > 0.0 && (i == 0 || c.fill.thresholds[i] > c.fill.thresholds[i - 1]),
                        f.where("thresholds"), "must be positive and strictly ascending");
        }
        const auto n = f.integer("n_thresholds", 8);
        require(n >= 2, f.where("n_thresholds"), "must be >= 2");
        c.fill.n_thresholds = static_cast<std::size_t>(n);
        c.fill.lo_bps = f.number("lo_bps", 0.5);
        c.fill.hi_bps = f.number("hi_bps", 50.0);
        require(c.fill.lo_bps > 0.0 && c.fill.hi_bps > c.fill.lo_bps, f.where("lo_bps"), "need 0 < lo_bps < hi_bps");
        f.finish();
    }

    {
        auto h = root.object("hjb");
        c.hjb.alpha = h.number("alpha");
        c.hjb.phi = h.number("phi");
        require(c.hjb.alpha >= 0.0 && c.hjb.phi >= 0.0, h.where("alpha"), "penalties must be >= 0");
        c.hjb.horizon_hours = h.number("horizon_hours", 1.0);
        require(c.hjb.horizon_hours > 0.0, h.where("horizon_hours"), "must be > 0");
        c.hjb.n_time = h.integer("n_time", 2048);
        require(c.hjb.n_time >= 1, h.where("n_time"), "must be >= 1");
        c.hjb.q_max = h.number("q_max", 10.0);
        const double steps = c.hjb.q_max / c.fill.quote_size;
        require(c.hjb.q_max > 0.0 && std::abs(steps - std::round(steps)) < 1e-9, h.where("q_max"),
                "must be a positive multiple of fill.quote_size");
        c.hjb.n_f = h.integer("n_f", 61);
        require(c.hjb.n_f >= 3, h.where("n_f"), "must be >= 3");
        c.hjb.width_sd = h.number("width_sd", 5.0);
        require(c.hjb.width_sd > 0.0, h.where("width_sd"), "must be > 0");
        if (h.has("f_min") || h.has("f_max")) {
            c.hjb.f_min = h.number("f_min");
            c.hjb.f_max = h.number("f_max");
            require(*c.hjb.f_min < *c.hjb.f_max, h.where("f_min"), "must be < f_max");
        }
        if (h.has("price_ref")) {
            c.hjb.price_ref = h.number("price_ref");
            require(*c.hjb.price_ref > 0.0, h.where("price_ref"), "must be > 0");
        }
        try {
            c.hjb.horizon_mode = parse_horizon_mode(h.string("horizon_mode", "rolling"));
        } catch (const ConfigError&) {
            throw ConfigError(h.where("horizon_mode") + ": expected \"rolling\" or \"start_slice\"");
        }
        h.finish();
    }

    {
        const auto& arr = root.raw("policies");
        if (!arr.is_array()) throw ConfigError("config.policies: expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            detail::Fields p(arr[i], "config.policies[" + std::to_string(i) + "]");
            PolicySpec s;
            try {
                s.kind = parse_policy_kind(p.string("kind"));
            } catch (const ConfigError& e) {
                throw ConfigError(p.where("kind") + ": " + e.what());
            }
            s.name = p.string("name", "");
            if (p.has("scale")) {
                const auto& v = p.raw("scale");
                if (v.is_string() && v.get<std::string>() == "calibrate") {
                    s.calibrate_scale = true;
                } else {
                    s.scale = p.number("scale");
                    require(s.scale > 0.0, p.where("scale"), "must be > 0 or \"calibrate\"");
                }
            }
            s.beta_q = p.number("beta_q", 0.0);
            s.beta_f = p.number("beta_f", 0.0);
            s.calibrate_betas = p.boolean("calibrate", false);
            if (p.has("beta_q_grid")) s.beta_q_grid = p.numbers("beta_q_grid");
            if (p.has("beta_f_grid")) s.beta_f_grid = p.numbers("beta_f_grid");
            p.finish();
            c.policies.push_back(std::move(s));
        }
    }

    c.seeds = detail::seed_range(root, "seeds", c.seeds);
    c.calibration_seeds = detail::seed_range(root, "calibration_seeds", c.calibration_seeds);
    if (root.has("holdout")) {
        auto h = root.object("holdout");
        if (h.has("start")) c.holdout_start = detail::config_timestamp(h, "start");
        if (h.has("end")) c.holdout_end = detail::config_timestamp(h, "end");
        h.finish();
    }

    if (root.has("simulation")) {
        auto s = root.object("simulation");
        const auto gs = s.integer("global_seed", 0);
        require(gs >= 0, s.where("global_seed"), "must be >= 0");
        c.sim.global_seed = static_cast<std::uint64_t>(gs);
        c.sim.initial_cash = s.number("initial_cash", 0.0);
        c.sim.funding_dtau = s.number("funding_dtau_hours", 1.0);
        require(c.sim.funding_dtau > 0.0, s.where("funding_dtau_hours"), "must be > 0");
        c.sim.settle_next_minute = s.boolean("settle_next_minute", false);
        c.max_gap_minutes = s.number("max_gap_minutes", 10.0);
        require(c.max_gap_minutes > 0.0, s.where("max_gap_minutes"), "must be > 0");
        const auto w = s.integer("workers", 0);
        require(w >= 0, s.where("workers"), "must be >= 0");
        c.workers = static_cast<unsigned>(w);
        s.finish();
    }

    if (root.has("stress")) {
        auto s = root.object("stress");
        c.stress_window_days = s.number("window_days", 3.0);
        c.stress_stride_hours = s.number("stride_hours", 1.0);
        require(c.stress_window_days > 0.0 && c.stress_stride_hours > 0.0, s.where("window_days"),
                "window and stride must be > 0");
        s.finish();
    }
    root.finish();
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    const auto text = read_text(path);
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_run_config(detail::parse_json(text, path), dir.empty() ? std::filesystem::path(".") : dir);
}

// Synthetic data spec. Hour ranges are [start_hour, end_hour) offsets from the
// series start.
inline SyntheticSpec parse_synthetic_spec(const json& j) {
    using detail::require;
    SyntheticSpec s;
    detail::Fields f(j, "spec");
    const auto seed = f.integer("seed", 1);
    require(seed >= 0, f.where("seed"), "must be >= 0");
    s.seed = static_cast<std::uint64_t>(seed);
    if (f.has("start")) s.start_ts = detail::config_timestamp(f, "start");
    require(s.start_ts % 60 == 0, f.where("start"), "must lie on a minute boundary");
    s.days = f.number("days", s.days);
    s.mid0 = f.number("mid0", s.mid0);
    s.minute_vol = f.number("minute_vol", s.minute_vol);

    auto ranges = [&](const std::string& key) {
        std::vector<HourRange> out;
        if (!f.has(key)) return out;
        const auto& arr = f.raw(key);
        if (!arr.is_array()) throw ConfigError(f.where(key) + ": expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            detail::Fields r(arr[i], f.where(key) + "[" + std::to_string(i) + "]");
            HourRange h{r.number("start_hour"), r.number("end_hour"), r.number("value")};
            r.finish();
            require(h.end_hour > h.start_hour, f.where(key), "end_hour must exceed start_hour");
            out.push_back(h);
        }
        return out;
    };
    s.vol_spikes = ranges("vol_spikes");
    s.funding_shifts = ranges("funding_shifts");

    if (f.has("funding")) {
        auto o = f.object("funding");
        s.funding = {o.number("kappa", s.funding.kappa), o.number("theta", s.funding.theta),
                     o.number("sigma", s.funding.sigma)};
        s.funding0 = o.number("initial", s.funding.theta);
        o.finish();
    }
    if (f.has("jumps")) {
        auto o = f.object("jumps");
        s.jumps = {o.number("lambda_per_hour", 0.0), o.number("mu", 0.0), o.number("sigma", 0.0)};
        o.finish();
    }
    if (f.has("fill")) {
        auto o = f.object("fill");
        s.tape = o.boolean("tape", true);
        s.fill = {o.number("lambda0_per_hour", s.fill.lambda0), o.number("k", s.fill.k), 0.0};
        s.quote_size = o.number("quote_size", s.quote_size);
        s.touch_probability = o.number("touch_probability", s.touch_probability);
        s.shallow_probability = o.number("shallow_probability", s.shallow_probability);
        o.finish();
    }
    f.finish();
    s.validate();
    return s;
}

inline SyntheticSpec load_synthetic_spec(const std::string& path) {
    return parse_synthetic_spec(detail::parse_json(read_text(path), path));
}

inline json synthetic_spec_json(const SyntheticSpec& s) {
    auto ranges = [](const std::vector<HourRange>& v) {
        json a = json::array();
        for (const auto& r : v) a.push_back({{"start_hour", r.start_hour}, {"end_hour", r.end_hour}, {"value", r.value}});
        return a;
    };
    return {{"seed", s.seed},
            {"start", format_timestamp(s.start_ts)},
            {"days", s.days},
            {"mid0", s.mid0},
            {"minute_vol", s.minute_vol},
            {"vol_spikes", ranges(s.vol_spikes)},
            {"funding_shifts", ranges(s.funding_shifts)},
            {"funding", {{"kappa", s.funding.kappa}, {"theta", s.funding.theta}, {"sigma", s.funding.sigma},
                         {"initial", s.funding0}}},
            {"jumps", {{"lambda_per_hour", s.jumps.lambda_j}, {"mu", s.jumps.mu_j}, {"sigma", s.jumps.sigma_j}}},
            {"fill", {{"tape", s.tape}, {"lambda0_per_hour", s.fill.lambda0}, {"k", s.fill.k},
                      {"quote_size", s.quote_size}, {"touch_probability", s.touch_probability},
                      {"shallow_probability", s.shallow_probability}}}};
}

}  // namespace fundmm
