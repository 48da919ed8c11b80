#pragma once

// Subcommand implementations behind the CLI. Each command validates its whole
// configuration and input data before computing anything, writes results into
// the configured output directory, and throws InvalidInput (exit 2) or
// RuntimeFailure (exit 1) on error.
//
// Output files (under output_dir):
//   calibrate  funding_calibration.json, fill_calibration_<mode>.json
//   solve      hjb_fd.table, pure_as.table, solve_summary.json, solve.log
//   backtest   backtest_seeds.csv, backtest_summary.json [, stress_report.json]
//   stress     stress_report.json

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fundmm/config.hpp"
#include "fundmm/errors.hpp"
#include "fundmm/fill_calib.hpp"
#include "fundmm/funding_calib.hpp"
#include "fundmm/hjb_solver.hpp"
#include "fundmm/io.hpp"
#include "fundmm/metrics.hpp"
#include "fundmm/policies.hpp"
#include "fundmm/policy_calibration.hpp"
#include "fundmm/reports.hpp"
#include "fundmm/simulator.hpp"
#include "fundmm/stress.hpp"
#include "fundmm/synthetic.hpp"
#include "fundmm/table_io.hpp"

namespace fundmm {

struct MarketData {
    MarketPanel panel;
    TimeSeries mid;
    TimeSeries funding;
};

inline MarketData load_market(const RunConfig& cfg) {
    MarketData d;
    d.mid = read_mid_csv(cfg.mid_path());
    d.funding = read_funding_csv(cfg.funding_path());
    d.panel = build_panel(d.mid, d.funding);
    d.panel.validate(cfg.max_gap_minutes);
    const auto first = d.panel.minute_ts.front(), end = d.panel.minute_ts.back() + 60;
    if (cfg.holdout_start && (*cfg.holdout_start < first || *cfg.holdout_start >= end))
        throw InvalidInput("holdout start " + format_timestamp(*cfg.holdout_start) + " is outside the panel [" +
                           format_timestamp(first) + ", " + format_timestamp(end) + ")");
    if (cfg.holdout_end && (*cfg.holdout_end <= first || *cfg.holdout_end > end))
        throw InvalidInput("holdout end " + format_timestamp(*cfg.holdout_end) + " is outside the panel [" +
                           format_timestamp(first) + ", " + format_timestamp(end) + ")");
    return d;
}

// Data strictly before the holdout start (everything when no holdout is set).
inline std::int64_t calibration_end(const RunConfig& cfg) {
    return cfg.holdout_start ? *cfg.holdout_start : std::numeric_limits<std::int64_t>::max();
}

inline MarketPanel holdout_panel(const RunConfig& cfg, const MarketPanel& p) {
    const auto start = cfg.holdout_start.value_or(p.minute_ts.front());
    const auto end = cfg.holdout_end.value_or(p.minute_ts.back() + 60);
    auto out = p.slice(start, end);
    if (out.minute_ts.size() < 2) throw InvalidInput("holdout window contains fewer than two minutes");
    return out;
}

inline double mean_mid_before(const TimeSeries& mid, std::int64_t end) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mid.size() && mid.ts[i] < end; ++i, ++n) s += mid.values[i];
    if (n == 0) throw InvalidInput("no mid prices before the holdout window");
    return s / static_cast<double>(n);
}

inline std::string fill_report_name(HitMode m) { return "fill_calibration_" + std::string(to_string(m)) + ".json"; }

// ---------------------------------------------------------------- calibrate

struct CalibrationResult {
    FundingReport funding;
    std::optional<FillReport> fill;
};

inline FundingReport calibrate_funding(const RunConfig& cfg, const MarketData& d) {
    const auto end = calibration_end(cfg);
    TimeSeries f;
    for (std::size_t i = 0; i < d.funding.size() && d.funding.ts[i] < end; ++i) {
        f.ts.push_back(d.funding.ts[i]);
        f.values.push_back(d.funding.values[i]);
    }
    const auto series = to_funding_series(f);
    auto [train, test] = split_chronological(series, cfg.funding.train_fraction);
    if (train.size() < 10)
        throw DegenerateSeries("funding calibration needs at least 10 training observations, found " +
                               std::to_string(train.size()));

    FundingReport r;
    r.asset = cfg.asset;
    r.n_train = train.size();
    r.n_test = test.size();
    const auto ou = fit_ou(train);
    r.ou = ou.params;
    r.ll_ou = ou.loglik;
    r.clamped_variances = ou.clamped_variances;
    if (cfg.funding.fit_jumps) {
        const auto jf = fit_ou_jump(train, ou.params);
        r.jump_fitted = true;
        r.jump = jf.jump;
        r.ll_jump = jf.loglik;
        r.ll_gain = jf.ll_gain;
    }
    r.diagnostics = residual_diagnostics(train, r.ou);
    if (test.size() >= 2) r.ll_ou_test = ou_loglik(test, r.ou);

    // innovation / price-return correlation on the training sample
    std::vector<double> rets;
    bool aligned = true;
    double prev = 0.0;
    for (std::size_t i = 0; i < train.size() && aligned; ++i) {
        const auto ts = f.ts[i];
        const auto it = std::upper_bound(d.mid.ts.begin(), d.mid.ts.end(), ts);
        if (it == d.mid.ts.begin()) {
            aligned = false;
            break;
        }
        const double s = d.mid.values[static_cast<std::size_t>(it - d.mid.ts.begin()) - 1];
        if (i > 0) rets.push_back(std::log(s / prev));
        prev = s;
    }
    if (aligned && rets.size() >= 3) r.price_correlation = innovation_price_correlation(train, r.ou, rets);
    return r;
}

// Tape minutes before the holdout window; every one must be a panel minute.
inline std::vector<MinuteTrades> load_calibration_tape(const RunConfig& cfg, const MarketData& d) {
    const auto end = calibration_end(cfg);
    std::vector<MinuteTrades> tape;
    for (auto& m : read_tape_csv(cfg.tape_path())) {
        if (m.minute_ts >= end) break;
        if (!std::binary_search(d.panel.minute_ts.begin(), d.panel.minute_ts.end(), m.minute_ts))
            throw InvalidInput(cfg.tape_path() + ": tape minute " + format_timestamp(m.minute_ts) +
                               " is not a panel minute");
        tape.push_back(std::move(m));
    }
    return tape;
}

inline FillReport calibrate_fill(const RunConfig& cfg, const MarketData& d, std::span<const MinuteTrades> tape) {
    const auto end = calibration_end(cfg);
    std::int64_t minutes = 0;
    for (auto ts : d.panel.minute_ts) minutes += ts < end;
    if (minutes == 0) throw InvalidInput("no panel minutes before the holdout window");
    FillReport r;
    r.asset = cfg.asset;
    r.mode = cfg.fill.mode;
    r.quote_size = cfg.fill.quote_size;
    r.minutes = minutes;
    r.thresholds = cfg.fill.thresholds.empty()
                       ? default_thresholds(mean_mid_before(d.mid, end), cfg.fill.n_thresholds, cfg.fill.lo_bps,
                                            cfg.fill.hi_bps)
                       : cfg.fill.thresholds;
    const auto panel = bucket_hits(tape, r.thresholds, cfg.fill.mode, cfg.fill.quote_size, minutes);
    r.hits = panel.hits;
    r.fit = fit_fill_curve(panel, cfg.fill.delta_min);
    return r;
}

inline CalibrationResult cmd_calibrate(const RunConfig& cfg, std::ostream& log) {
    const auto d = load_market(cfg);
    const bool fit_fill = cfg.fill.source == FillSettings::Source::calibrate;
    const auto tape = fit_fill ? load_calibration_tape(cfg, d) : std::vector<MinuteTrades>{};
    CalibrationResult out;
    out.funding = calibrate_funding(cfg, d);
    if (fit_fill) out.fill = calibrate_fill(cfg, d, tape);

    write_text(cfg.output("funding_calibration.json"), dump(to_json(out.funding)));
    const auto& f = out.funding;
    log << cfg.asset << " funding: kappa=" << f.ou.kappa << "/h theta=" << f.ou.theta << " sigma=" << f.ou.sigma
        << " half_life=" << half_life(f.ou.kappa) << "h";
    if (f.jump_fitted) log << " ll_gain=" << f.ll_gain << " jump_p/h=" << f.jump.step_probability(1.0);
    log << " (n_train=" << f.n_train << ", n_test=" << f.n_test << ")\n";
    if (out.fill) {
        write_text(cfg.output(fill_report_name(out.fill->mode)), dump(to_json(*out.fill)));
        log << cfg.asset << " fill [" << to_string(out.fill->mode) << "]: lambda0=" << out.fill->fit.curve.lambda0
            << "/h k=" << out.fill->fit.curve.k << " over " << out.fill->minutes << " minutes\n";
    }
    return out;
}

// -------------------------------------------------------------------- solve

struct SolveInputs {
    FillCurve fill;
    OUParams ou_fractional;
    double price_ref = 0.0;
    OUParams ou_cash;
    GridSpec grid;            // funding-aware grid
    GridSpec collapsed;       // pure_as grid
    HJBParams params;
};

inline FillCurve resolve_fill_curve(const RunConfig& cfg) {
    if (cfg.fill.source == FillSettings::Source::inline_curve) return cfg.fill.curve;
    const auto path = cfg.output(fill_report_name(cfg.fill.mode));
    if (!std::filesystem::exists(path))
        throw InvalidInput(path + " not found; run `calibrate` first (or use an inline fill curve)");
    return fill_curve_from_json(detail::parse_json(read_text(path), path), path);
}

inline OUParams resolve_funding(const RunConfig& cfg) {
    if (cfg.funding.source == FundingSettings::Source::inline_params) return cfg.funding.params;
    const auto path = cfg.output("funding_calibration.json");
    if (!std::filesystem::exists(path))
        throw InvalidInput(path + " not found; run `calibrate` first (or use inline funding parameters)");
    return ou_from_json(detail::parse_json(read_text(path), path), path);
}

inline SolveInputs resolve_solve_inputs(const RunConfig& cfg) {
    SolveInputs s;
    s.fill = resolve_fill_curve(cfg);
    s.ou_fractional = resolve_funding(cfg);
    s.price_ref = cfg.hjb.price_ref ? *cfg.hjb.price_ref
                                    : mean_mid_before(read_mid_csv(cfg.mid_path()), calibration_end(cfg));
    s.ou_cash = to_cash_units(s.ou_fractional, s.price_ref);

    GridSpec g;
    g.horizon = cfg.hjb.horizon_hours;
    g.n_time = cfg.hjb.n_time;
    g.q_min = -cfg.hjb.q_max;
    g.q_max = cfg.hjb.q_max;
    g.dq = cfg.fill.quote_size;
    if (cfg.hjb.f_min) {
        g.f_min = *cfg.hjb.f_min;
        g.f_max = *cfg.hjb.f_max;
        g.n_f = cfg.hjb.n_f;
    } else {
        const auto [lo, hi] = default_funding_bounds(s.ou_cash, cfg.hjb.width_sd);
        if (hi > lo) {
            g.f_min = lo;
            g.f_max = hi;
            g.n_f = cfg.hjb.n_f;
        } else {  // deterministic funding: a single node at the level
            g.f_min = g.f_max = s.ou_cash.theta;
            g.n_f = 1;
        }
    }
    s.grid = g;
    s.collapsed = collapsed_grid(g);
    s.params.ou_cash = s.ou_cash;
    s.params.fill = s.fill;
    s.params.alpha = cfg.hjb.alpha;
    s.params.phi = cfg.hjb.phi;
    s.grid.validate();
    s.params.validate();
    return s;
}

struct AsLimitCheck {
    std::string table;
    double max_rel_error = 0.0;
    std::int64_t worst_i = -1, worst_j = -1, worst_l = -1;
    std::int64_t nodes = 0;
    std::int64_t failures = 0;
    // nodes whose offsets the inventory-limit rows have not reached yet
    double max_rel_error_outside_limit_cone = 0.0;
    std::int64_t nodes_outside_limit_cone = 0;

    bool passed(double tol) const { return max_rel_error <= tol; }
};

// Offsets at every (t_i, q_j, f_l) against 1/k; blocked sides are skipped.
inline AsLimitCheck check_as_limit(const HJBTable& t, const std::string& name, double tol = 1e-10) {
    AsLimitCheck c;
    c.table = name;
    const auto& g = t.grid;
    const double target = 1.0 / t.params.fill.k;
    const auto nq = g.n_q();
    for (std::int64_t i = 0; i <= g.n_time; ++i)
        for (std::int64_t j = 0; j < nq; ++j)
            for (std::int64_t l = 0; l < g.n_f; ++l) {
                const auto lk = quote_lookup(t, g.t(i), g.q(j), g.f(l));
                const bool outside = g.n_time - i < std::min(j, nq - 1 - j);
                for (auto [active, off] : {std::pair{!lk.bid_blocked, lk.bid_offset}, std::pair{!lk.ask_blocked, lk.ask_offset}}) {
                    if (!active) continue;
                    const double err = std::abs(off - target) / target;
                    ++c.nodes;
                    if (err > tol) ++c.failures;
                    if (c.worst_i < 0 || err > c.max_rel_error) {
                        c.max_rel_error = err;
                        c.worst_i = i;
                        c.worst_j = j;
                        c.worst_l = l;
                    }
                    if (outside) {
                        ++c.nodes_outside_limit_cone;
                        c.max_rel_error_outside_limit_cone = std::max(c.max_rel_error_outside_limit_cone, err);
                    }
                }
            }
    return c;
}

struct SolveResult {
    SolveInputs inputs;
    double cfl_bound = 0.0;
    double cfl_bound_collapsed = 0.0;
    std::uint32_t checksum_fd = 0;
    std::uint32_t checksum_as = 0;
    std::vector<AsLimitCheck> as_checks;
};

inline nlohmann::json grid_json(const GridSpec& g) {
    return {{"horizon_hours", g.horizon}, {"n_time", g.n_time}, {"dt_hours", g.dt()}, {"q_min", g.q_min},
            {"q_max", g.q_max},           {"dq", g.dq},         {"f_min", g.f_min},   {"f_max", g.f_max},
            {"n_f", g.n_f}};
}

inline SolveResult cmd_solve(const RunConfig& cfg, bool verify_as_limit, std::ostream& log) {
    SolveResult r;
    r.inputs = resolve_solve_inputs(cfg);
    const auto& in = r.inputs;
    if (verify_as_limit && !(cfg.hjb.alpha == 0.0 && cfg.hjb.phi == 0.0))
        throw ConfigError("--verify-as-limit needs a config with hjb.alpha = hjb.phi = 0");
    const bool zero_funding = in.ou_cash.theta == 0.0 && in.ou_cash.sigma == 0.0 &&
                              in.grid.f_min == 0.0 && in.grid.f_max == 0.0;

    r.cfl_bound = cfl_max_dt(build_rates(in.grid, in.ou_cash), in.fill);
    r.cfl_bound_collapsed = cfl_max_dt(build_rates(in.collapsed, {}), in.fill);
    log << cfg.asset << " grid: T=" << in.grid.horizon << "h n_time=" << in.grid.n_time << " dt=" << in.grid.dt()
        << "h q=[" << in.grid.q_min << "," << in.grid.q_max << "]/" << in.grid.dq << " f=[" << in.grid.f_min << ","
        << in.grid.f_max << "] n_f=" << in.grid.n_f << " cfl_max_dt=" << r.cfl_bound << "h\n";

    const auto t0 = std::chrono::steady_clock::now();
    const auto fd = solve(in.grid, in.params);
    const auto as = solve(in.collapsed, collapsed_params(in.params));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const auto fd_bytes = serialize_table(fd), as_bytes = serialize_table(as);
    r.checksum_fd = table_checksum(fd_bytes);
    r.checksum_as = table_checksum(as_bytes);
    std::filesystem::create_directories(cfg.output_dir);
    write_table(fd, cfg.output("hjb_fd.table"));
    write_table(as, cfg.output("pure_as.table"));

    nlohmann::json summary{{"asset", cfg.asset},
                           {"grid", grid_json(in.grid)},
                           {"price_ref", in.price_ref},
                           {"funding_fractional", {{"kappa", in.ou_fractional.kappa}, {"theta", in.ou_fractional.theta}, {"sigma", in.ou_fractional.sigma}}},
                           {"funding_cash", {{"kappa", in.ou_cash.kappa}, {"theta", in.ou_cash.theta}, {"sigma", in.ou_cash.sigma}}},
                           {"fill", {{"lambda0_per_hour", in.fill.lambda0}, {"k", in.fill.k}, {"delta_min", in.fill.delta_min}, {"mode", std::string(to_string(cfg.fill.mode))}}},
                           {"alpha", in.params.alpha},
                           {"phi", in.params.phi},
                           {"cfl_max_dt_hours", r.cfl_bound},
                           {"cfl_max_dt_hours_pure_as", r.cfl_bound_collapsed},
                           {"tables", {{"hjb_fd", {{"file", "hjb_fd.table"}, {"crc32", r.checksum_fd}}},
                                       {"pure_as", {{"file", "pure_as.table"}, {"crc32", r.checksum_as}}}}}};

    if (verify_as_limit) {
        r.as_checks.push_back(check_as_limit(as, "pure_as"));
        if (zero_funding) r.as_checks.push_back(check_as_limit(fd, "hjb_fd"));
        nlohmann::json checks = nlohmann::json::array();
        for (const auto& c : r.as_checks) {
            checks.push_back({{"table", c.table},
                              {"target_offset", 1.0 / in.fill.k},
                              {"max_rel_error", c.max_rel_error},
                              {"worst_node", {c.worst_i, c.worst_j, c.worst_l}},
                              {"offsets_checked", c.nodes},
                              {"offsets_failing", c.failures},
                              {"max_rel_error_outside_limit_cone", c.max_rel_error_outside_limit_cone},
                              {"offsets_outside_limit_cone", c.nodes_outside_limit_cone},
                              {"passed", c.passed(1e-10)}});
            log << "as-limit [" << c.table << "]: max rel error " << c.max_rel_error << " over " << c.nodes
                << " offsets (" << c.failures << " above 1e-10; worst at i=" << c.worst_i << " q=" << in.grid.q(c.worst_j)
                << "); outside the inventory-limit cone: " << c.max_rel_error_outside_limit_cone << " over "
                << c.nodes_outside_limit_cone << " offsets\n";
        }
        summary["as_limit_checks"] = checks;
    }
    write_text(cfg.output("solve_summary.json"), dump(summary));

    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "asset=%s n_time=%lld n_q=%lld n_f=%lld dt=%.17g cfl_max_dt=%.17g crc32_hjb_fd=%08x "
                  "crc32_pure_as=%08x wall_seconds=%.3f\n",
                  cfg.asset.c_str(), static_cast<long long>(in.grid.n_time), static_cast<long long>(in.grid.n_q()),
                  static_cast<long long>(in.grid.n_f), in.grid.dt(), r.cfl_bound, r.checksum_fd, r.checksum_as, wall);
    write_text(cfg.output("solve.log"), buf);
    log << buf;

    for (const auto& c : r.as_checks)
        if (!c.passed(1e-10))
            throw RuntimeFailure("AS-limit verification failed for " + c.table + ": max relative offset error " +
                                 format_double(c.max_rel_error) + " exceeds 1e-10");
    return r;
}

// ----------------------------------------------------------------- backtest

struct PreparedPolicies {
    std::vector<PolicyConfig> policies;  // config order
    std::size_t baseline = 0;            // index of the pure_as baseline
    FillCurve fill;
    nlohmann::json calibration = nlohmann::json::object();
};

inline std::shared_ptr<const HJBTable> load_table_checked(const RunConfig& cfg, const std::string& file,
                                                          const FillCurve& fill) {
    const auto path = cfg.output(file);
    if (!std::filesystem::exists(path)) throw InvalidInput(path + " not found; run `solve` first");
    auto t = std::make_shared<const HJBTable>(read_table(path));
    if (t->params.fill.lambda0 != fill.lambda0 || t->params.fill.k != fill.k ||
        t->params.fill.delta_min != fill.delta_min)
        throw InvalidInput(path + " was solved with a different fill curve; re-run `solve`");
    if (t->grid.dq != cfg.fill.quote_size || t->grid.q_max != cfg.hjb.q_max)
        throw InvalidInput(path + " inventory grid does not match the config; re-run `solve`");
    return t;
}

inline SimConfig sim_config(const RunConfig& cfg) { return cfg.sim; }

// Builds the configured policies; scale and beta calibrations target the
// hjb_fd inventory RMS on the calibration seeds.
inline PreparedPolicies prepare_policies(const RunConfig& cfg, const MarketPanel& panel, std::ostream& log) {
    if (!cfg.has_policy(PolicyKind::pure_as))
        throw ConfigError("config.policies: a pure_as policy is required as the pairing baseline");
    PreparedPolicies out;
    out.fill = resolve_fill_curve(cfg);
    const InventoryLimits limits{-cfg.hjb.q_max, cfg.hjb.q_max, cfg.fill.quote_size};
    std::shared_ptr<const HJBTable> as_table, fd_table;
    as_table = load_table_checked(cfg, "pure_as.table", out.fill);
    const bool need_fd = cfg.has_policy(PolicyKind::hjb_fd) ||
                         std::any_of(cfg.policies.begin(), cfg.policies.end(),
                                     [](const PolicySpec& p) { return p.calibrate_scale || p.calibrate_betas; });
    if (need_fd) fd_table = load_table_checked(cfg, "hjb_fd.table", out.fill);

    auto base = [&](const PolicySpec& s) {
        PolicyConfig p;
        p.name = s.label();
        p.kind = s.kind;
        p.fill = out.fill;
        p.limits = limits;
        p.horizon_mode = cfg.hjb.horizon_mode;
        p.scale = s.scale;
        p.beta_q = s.beta_q;
        p.beta_f = s.beta_f;
        if (s.kind == PolicyKind::hjb_fd) p.table = fd_table;
        else if (s.kind != PolicyKind::risk_calibrated) p.table = as_table;
        return p;
    };

    auto named = [](PolicyKind k) {
        PolicySpec s;
        s.kind = k;
        return s;
    };
    std::optional<double> target;
    auto target_rms = [&]() {
        if (!target) {
            PolicyConfig fd = base(named(PolicyKind::hjb_fd));
            const auto seeds = cfg.calibration_seeds.list();
            const auto rs = run_seeds(panel, fd, out.fill, seeds, sim_config(cfg), cfg.workers);
            target = detail::mean_rms(rs);
            out.calibration["target_inventory_rms"] = *target;
        }
        return *target;
    };

    bool have_baseline = false;
    for (const auto& s : cfg.policies) {
        PolicyConfig p = base(s);
        if (s.kind == PolicyKind::pure_as && !have_baseline) {
            out.baseline = out.policies.size();
            have_baseline = true;
        }
        if (s.kind == PolicyKind::pure_as_scaled && s.calibrate_scale) {
            ScaledAsInputs in;
            in.panel = &panel;
            in.fill = out.fill;
            in.base = base(named(PolicyKind::pure_as));
            in.sim = sim_config(cfg);
            in.calibration_seeds = cfg.calibration_seeds.list();
            in.reporting_seeds = cfg.seeds.list();
            in.target_rms = target_rms();
            const auto cal = calibrate_scaled_as(in);
            p.scale = cal.scale;
            out.calibration[p.label()] = {{"scale", cal.scale}, {"achieved_inventory_rms", cal.achieved_rms},
                                          {"warning", cal.warning}};
            log << p.label() << ": scale " << cal.scale << " (rms " << cal.achieved_rms << " vs target "
                << in.target_rms << ")" << (cal.warning.empty() ? "" : "; warning: " + cal.warning) << "\n";
        }
        if (s.kind == PolicyKind::risk_calibrated && s.calibrate_betas) {
            RiskRuleInputs in;
            in.panel = &panel;
            in.fill = out.fill;
            in.limits = limits;
            in.sim = sim_config(cfg);
            in.calibration_seeds = cfg.calibration_seeds.list();
            in.reporting_seeds = cfg.seeds.list();
            in.target_rms = target_rms();
            if (!s.beta_q_grid.empty()) in.beta_q_grid = s.beta_q_grid;
            if (!s.beta_f_grid.empty()) in.beta_f_grid = s.beta_f_grid;
            const auto cal = calibrate_risk_rule(in);
            p.beta_q = cal.beta_q;
            p.beta_f = cal.beta_f;
            out.calibration[p.label()] = {{"beta_q", cal.beta_q}, {"beta_f", cal.beta_f},
                                          {"calibration_equity", cal.selected.mean_equity},
                                          {"calibration_inventory_rms", cal.selected.rms}};
            log << p.label() << ": beta_q " << cal.beta_q << " beta_f " << cal.beta_f << "\n";
        }
        p.validate();
        out.policies.push_back(std::move(p));
    }
    return out;
}

struct BacktestResult {
    std::vector<std::vector<PathResult>> runs;  // per policy, seed order
    std::vector<MetricsRow> metrics;
};

inline BacktestResult run_policies(const RunConfig& cfg, const PreparedPolicies& pp, const MarketPanel& panel) {
    BacktestResult r;
    const auto seeds = cfg.seeds.list();
    for (const auto& p : pp.policies) r.runs.push_back(run_seeds(panel, p, pp.fill, seeds, sim_config(cfg), cfg.workers));
    for (const auto& rs : r.runs) r.metrics.push_back(compute_metrics(rs, r.runs[pp.baseline]));
    return r;
}

inline std::vector<StressResult> run_stress(const RunConfig& cfg, const PreparedPolicies& pp,
                                            const MarketPanel& full, std::ostream& log) {
    const auto windows = select_stress_windows(full, cfg.stress_window_days, cfg.stress_stride_hours);
    std::vector<StressResult> out;
    for (const auto& w : windows) {
        const auto panel = full.slice(w.start_ts, w.end_ts);
        const auto r = run_policies(cfg, pp, panel);
        StressResult s{w, {}};
        const double base_rms = r.metrics[pp.baseline].inventory_rms;
        for (const auto& m : r.metrics)
            s.rows.push_back({m.policy, m.delta_vs_baseline, m.win_rate,
                              base_rms > 0.0 ? m.inventory_rms / base_rms : std::nan(""), m});
        log << "stress " << w.label << " [" << format_timestamp(w.start_ts) << ", " << format_timestamp(w.end_ts)
            << ") mean_funding=" << w.mean_funding << " vol=" << w.volatility << "\n";
        out.push_back(std::move(s));
    }
    return out;
}

inline void print_metrics(const std::vector<MetricsRow>& rows, std::ostream& log) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-18s %14s %12s %12s %8s %10s %10s %8s\n", "policy", "final_equity", "ci95",
                  "delta_vs_as", "win", "inv_rms", "max_dd", "fill");
    log << buf;
    for (const auto& m : rows) {
        std::snprintf(buf, sizeof(buf), "%-18s %14.4f %12.4f %12.4f %8.2f %10.4f %10.4f %8.4f\n", m.policy.c_str(),
                      m.mean_final_equity, m.ci95, m.delta_vs_baseline, m.win_rate, m.inventory_rms, m.max_drawdown,
                      m.fill_rate);
        log << buf;
    }
}

inline BacktestResult cmd_backtest(const RunConfig& cfg, bool stress, std::ostream& log) {
    const auto d = load_market(cfg);
    const auto panel = holdout_panel(cfg, d.panel);
    const auto pp = prepare_policies(cfg, panel, log);
    auto r = run_policies(cfg, pp, panel);

    write_text(cfg.output("backtest_seeds.csv"), seeds_csv(r.runs));
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& m : r.metrics) rows.push_back(to_json(m));
    nlohmann::json summary{{"asset", cfg.asset},
                           {"fill_mode", std::string(to_string(cfg.fill.mode))},
                           {"seeds", {cfg.seeds.first, cfg.seeds.last}},
                           {"holdout", {format_timestamp(panel.minute_ts.front()), format_timestamp(panel.minute_ts.back() + 60)}},
                           {"baseline", pp.policies[pp.baseline].label()},
                           {"policy_calibration", pp.calibration},
                           {"rows", rows}};
    write_text(cfg.output("backtest_summary.json"), dump(summary));
    print_metrics(r.metrics, log);

    if (stress) write_text(cfg.output("stress_report.json"), dump(to_json(run_stress(cfg, pp, d.panel, log), cfg.asset)));
    return r;
}

inline std::vector<StressResult> cmd_stress(const RunConfig& cfg, std::ostream& log) {
    const auto d = load_market(cfg);
    const auto pp = prepare_policies(cfg, holdout_panel(cfg, d.panel), log);
    auto res = run_stress(cfg, pp, d.panel, log);
    write_text(cfg.output("stress_report.json"), dump(to_json(res, cfg.asset)));
    return res;
}

// -------------------------------------------------------------------- synth

inline SyntheticData cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& out_dir, std::ostream& log) {
    const auto data = generate_synthetic(spec);
    const auto dir = out_dir.string();
    write_text((out_dir / "mid.csv").string(), series_csv(data.panel.minute_ts, data.panel.mid, "mid"));
    write_text((out_dir / "funding.csv").string(), series_csv(data.panel.funding_ts, data.panel.funding, "funding_rate"));
    if (spec.tape) write_text((out_dir / "tape.csv").string(), tape_csv(data.tape));
    nlohmann::json truth{{"spec", synthetic_spec_json(spec)},
                         {"minutes", data.minutes},
                         {"funding_observations", data.panel.funding.size()},
                         {"tape_minutes", data.tape.size()},
                         {"funding_half_life_hours", spec.funding.kappa > 0.0 ? detail::num(half_life(spec.funding.kappa)) : nlohmann::json(nullptr)},
                         {"jump_probability_per_hour", spec.jumps.step_probability(1.0)},
                         {"fill_truth_mode", "volume_minute"}};
    write_text((out_dir / "truth.json").string(), dump(truth));
    log << "wrote " << data.minutes << " minutes, " << data.panel.funding.size() << " funding observations, "
        << data.tape.size() << " tape minutes to " << dir << "\n";
    return data;
}

// ------------------------------------------------------------------- verify

// Parses and validates every input the config refers to, without computing.
inline nlohmann::json cmd_verify(const RunConfig& cfg, std::ostream& log) {
    const auto d = load_market(cfg);
    nlohmann::json out{{"asset", cfg.asset},
                       {"minutes", d.panel.size()},
                       {"funding_observations", d.funding.size()},
                       {"panel_start", format_timestamp(d.panel.minute_ts.front())},
                       {"panel_end", format_timestamp(d.panel.minute_ts.back() + 60)}};
    if (!cfg.tape_file.empty()) {
        const auto tape = read_tape_csv(cfg.tape_path());
        std::size_t rows = 0;
        for (const auto& m : tape) {
            rows += m.crossings.size();
            if (!std::binary_search(d.panel.minute_ts.begin(), d.panel.minute_ts.end(), m.minute_ts))
                throw InvalidInput(cfg.tape_path() + ": tape minute " + format_timestamp(m.minute_ts) +
                                   " is not a panel minute");
        }
        out["tape_minutes"] = tape.size();
        out["tape_rows"] = rows;
    }
    for (const char* name : {"hjb_fd.table", "pure_as.table"}) {
        const auto path = cfg.output(name);
        if (!std::filesystem::exists(path)) continue;
        const auto t = read_table(path);  // checks magic, version and checksum
        out["tables"][name] = {{"n_time", t.grid.n_time}, {"n_q", t.grid.n_q()}, {"n_f", t.grid.n_f}};
    }
    log << out.dump(2) << "\n";
    return out;
}

}  // namespace fundmm
