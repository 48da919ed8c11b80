#pragma once

// Minute-replay backtester.
//
// Per minute, in this order:
//   1. read inventory and the latest funding observation at or before the minute
//   2. ask the policy for quotes (sides that would breach a limit are inactive)
//   3. draw two uniforms and settle fills at S - delta_b / S + delta_a
//   4. debit q * S * F * dtau for every funding observation reached this minute
//   5. record equity X + q * S
//
// Inventory is tracked as an integer count of quote units so it stays exactly
// on the policy's inventory grid.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fundmm/errors.hpp"
#include "fundmm/fill_calib.hpp"
#include "fundmm/policies.hpp"
#include "fundmm/rng.hpp"

namespace fundmm {

struct MarketPanel {
    std::vector<std::int64_t> minute_ts;   // epoch seconds, ascending
    std::vector<double> mid;
    std::vector<std::int64_t> funding_ts;  // epoch seconds, within [minute_ts.front(), minute_ts.back()]
    std::vector<double> funding;           // fractional per hour
    double initial_funding = 0.0;          // last observation before the first minute

    std::size_t size() const { return minute_ts.size(); }

    void validate(double max_gap_minutes = 10.0, bool allow_gaps = false) const {
        if (minute_ts.empty()) throw InvalidInput("panel: no minutes");
        if (mid.size() != minute_ts.size()) throw InvalidInput("panel: mid/timestamp size mismatch");
        if (funding.size() != funding_ts.size()) throw InvalidInput("panel: funding size mismatch");
        for (std::size_t m = 0; m < minute_ts.size(); ++m) {
            if (!(mid[m] > 0.0) || !std::isfinite(mid[m]))
                throw InvalidInput("panel: mid must be positive at minute index " + std::to_string(m));
            if (m > 0) {
                const auto gap = minute_ts[m] - minute_ts[m - 1];
                if (gap <= 0) throw InvalidInput("panel: minute timestamps not increasing at index " + std::to_string(m));
                if (!allow_gaps && static_cast<double>(gap) > max_gap_minutes * 60.0)
                    throw InvalidInput("panel: gap of " + std::to_string(gap / 60) +
                                       " minutes at index " + std::to_string(m) + " exceeds the maximum");
            }
        }
        for (std::size_t i = 0; i < funding_ts.size(); ++i) {
            if (i > 0 && funding_ts[i] <= funding_ts[i - 1])
                throw InvalidInput("panel: funding timestamps not increasing at index " + std::to_string(i));
            if (funding_ts[i] < minute_ts.front() || funding_ts[i] > minute_ts.back())
                throw InvalidInput("panel: funding observation " + std::to_string(i) +
                                   " is not bracketed by panel minutes");
            if (!std::isfinite(funding[i])) throw InvalidInput("panel: non-finite funding value");
        }
    }

    // Minutes in [start, end); funding observations before `start` collapse
    // into initial_funding.
    MarketPanel slice(std::int64_t start, std::int64_t end) const {
        MarketPanel out;
        out.initial_funding = initial_funding;
        for (std::size_t m = 0; m < minute_ts.size(); ++m) {
            if (minute_ts[m] >= start && minute_ts[m] < end) {
                out.minute_ts.push_back(minute_ts[m]);
                out.mid.push_back(mid[m]);
            }
        }
        if (out.minute_ts.empty()) return out;
        for (std::size_t i = 0; i < funding_ts.size(); ++i) {
            if (funding_ts[i] < out.minute_ts.front()) {
                out.initial_funding = funding[i];
            } else if (funding_ts[i] <= out.minute_ts.back()) {
                out.funding_ts.push_back(funding_ts[i]);
                out.funding.push_back(funding[i]);
            }
        }
        return out;
    }
};

struct SimState {
    double cash = 0.0;
    double inventory = 0.0;
    double t = 0.0;
};

struct SimConfig {
    double initial_cash = 0.0;
    double initial_inventory = 0.0;
    double funding_dtau = 1.0;          // hours per funding observation
    std::uint64_t global_seed = 0;
    bool settle_next_minute = false;    // settle against the following minute's mid
    double first_step_minutes = 1.0;    // elapsed time credited to the first minute
};

struct PathResult {
    std::string policy;
    std::uint64_t seed = 0;
    std::vector<double> equity_path;
    std::vector<double> inventory_path;
    std::int64_t n_bid_fills = 0;
    std::int64_t n_ask_fills = 0;
    std::int64_t n_quotes = 0;  // active quoted sides
    double funding_paid = 0.0;
    double ask_proceeds = 0.0;
    double bid_payments = 0.0;
    double initial_cash = 0.0;
    double final_cash = 0.0;
    double final_inventory = 0.0;

    std::int64_t n_fills() const { return n_bid_fills + n_ask_fills; }
    double final_equity() const { return equity_path.empty() ? initial_cash : equity_path.back(); }

    double inventory_rms() const {
        if (inventory_path.empty()) return 0.0;
        double s = 0.0;
        for (double q : inventory_path) s += q * q;
        return std::sqrt(s / static_cast<double>(inventory_path.size()));
    }

    double mean_inventory() const {
        if (inventory_path.empty()) return 0.0;
        double s = 0.0;
        for (double q : inventory_path) s += q;
        return s / static_cast<double>(inventory_path.size());
    }

    double max_drawdown() const {
        double peak = -std::numeric_limits<double>::infinity(), dd = 0.0;
        for (double e : equity_path) {
            peak = std::max(peak, e);
            dd = std::max(dd, peak - e);
        }
        return dd;
    }

    bool operator==(const PathResult&) const = default;
};

struct FillDraw {
    bool bid = false;
    bool ask = false;
};

// Exactly two uniforms per call, active or not, so paired seeds stay aligned.
inline FillDraw sample_fills(const QuoteDecision& d, double dt, const FillCurve& fill, CounterRng& rng) {
    const double u_bid = rng.uniform();
    const double u_ask = rng.uniform();
    auto prob = [&](double offset) { return -std::expm1(-fill.intensity(offset) * dt); };
    FillDraw out;
    out.bid = d.bid_active && u_bid < prob(d.bid_offset);
    out.ask = d.ask_active && u_ask < prob(d.ask_offset);
    return out;
}

inline double funding_debit(double inventory, double price, double funding_rate, double dtau) {
    return inventory * price * funding_rate * dtau;
}

// Debits q * S * F * dtau from cash. Long inventory pays when F > 0.
inline SimState apply_funding(SimState s, double price, double funding_rate, double dtau = 1.0) {
    s.cash -= funding_debit(s.inventory, price, funding_rate, dtau);
    return s;
}

inline PathResult run_backtest(const MarketPanel& panel, const PolicyConfig& policy, const FillCurve& fill,
                               std::uint64_t seed, const SimConfig& cfg = {}) {
    if (seed < 1) throw ConfigError("run_backtest: seed must be >= 1");
    policy.validate();
    fill.validate();
    if (panel.minute_ts.empty()) throw InvalidInput("run_backtest: empty panel");
    if (panel.mid.size() != panel.minute_ts.size() || panel.funding.size() != panel.funding_ts.size())
        throw InvalidInput("run_backtest: inconsistent panel");
    const InventoryLimits lim = policy.effective_limits();
    const double steps0 = cfg.initial_inventory / lim.quote_size;
    if (std::abs(steps0 - std::round(steps0)) > 1e-9 || cfg.initial_inventory > lim.q_max + 1e-12 ||
        cfg.initial_inventory < lim.q_min - 1e-12)
        throw ConfigError("run_backtest: initial inventory must be a whole number of quotes within limits");
    if (!(cfg.funding_dtau > 0.0)) throw ConfigError("run_backtest: funding dtau must be > 0");

    const std::size_t n = panel.size();
    PathResult r;
    r.policy = policy.label();
    r.seed = seed;
    r.equity_path.reserve(n);
    r.inventory_path.reserve(n);
    r.initial_cash = cfg.initial_cash;

    CounterRng rng(cfg.global_seed, seed);
    std::int64_t q_steps = static_cast<std::int64_t>(std::llround(steps0));
    double cash = cfg.initial_cash;
    double latest_funding = panel.initial_funding;
    std::size_t next_funding = 0;
    while (next_funding < panel.funding_ts.size() && panel.funding_ts[next_funding] < panel.minute_ts.front())
        latest_funding = panel.funding[next_funding++];

    for (std::size_t m = 0; m < n; ++m) {
        const double S = panel.mid[m];
        const double elapsed = static_cast<double>(panel.minute_ts[m] - panel.minute_ts.front()) / 3600.0;
        // funding observations up to and including this minute
        std::size_t due_end = next_funding;
        while (due_end < panel.funding_ts.size() && panel.funding_ts[due_end] <= panel.minute_ts[m]) ++due_end;
        if (due_end > next_funding) latest_funding = panel.funding[due_end - 1];

        const double q = static_cast<double>(q_steps) * lim.quote_size;
        const QuoteDecision d = quote(policy, policy.table_time(elapsed), q, S, latest_funding);
        r.n_quotes += static_cast<std::int64_t>(d.bid_active) + static_cast<std::int64_t>(d.ask_active);

        const double dt = m == 0 ? cfg.first_step_minutes / 60.0
                                 : static_cast<double>(panel.minute_ts[m] - panel.minute_ts[m - 1]) / 3600.0;
        const FillDraw f = sample_fills(d, dt, fill, rng);
        const double settle = cfg.settle_next_minute && m + 1 < n ? panel.mid[m + 1] : S;
        if (f.bid) {
            const double pay = (settle - d.bid_offset) * d.quote_size;
            cash -= pay;
            r.bid_payments += pay;
            ++q_steps;
            ++r.n_bid_fills;
        }
        if (f.ask) {
            const double proceeds = (settle + d.ask_offset) * d.quote_size;
            cash += proceeds;
            r.ask_proceeds += proceeds;
            --q_steps;
            ++r.n_ask_fills;
        }

        const double q_after = static_cast<double>(q_steps) * lim.quote_size;
        for (; next_funding < due_end; ++next_funding) {
            const double debit = funding_debit(q_after, S, panel.funding[next_funding], cfg.funding_dtau);
            cash -= debit;
            r.funding_paid += debit;
        }

        r.inventory_path.push_back(q_after);
        r.equity_path.push_back(cash + q_after * S);
    }
    r.final_cash = cash;
    r.final_inventory = static_cast<double>(q_steps) * lim.quote_size;

    const double ledger = cfg.initial_cash + r.ask_proceeds - r.bid_payments - r.funding_paid;
    const double scale = 1.0 + std::abs(cfg.initial_cash) + std::abs(r.ask_proceeds) +
                         std::abs(r.bid_payments) + std::abs(r.funding_paid);
    if (std::abs(ledger - cash) > 1e-12 * scale)
        throw RuntimeFailure("cash ledger identity violated for seed " + std::to_string(seed));
    return r;
}

// Runs `seeds` in parallel; the output order follows `seeds`.
inline std::vector<PathResult> run_seeds(const MarketPanel& panel, const PolicyConfig& policy, const FillCurve& fill,
                                         std::span<const std::uint64_t> seeds, const SimConfig& cfg = {},
                                         unsigned workers = 0) {
    policy.validate();
    std::vector<PathResult> out(seeds.size());
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, seeds.size())));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](unsigned w) {
        try {
            for (std::size_t i = next++; i < seeds.size(); i = next++)
                out[i] = run_backtest(panel, policy, fill, seeds[i], cfg);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace fundmm
