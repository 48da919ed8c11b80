#pragma once

// The four quoting policies behind one `quote` entry point.
//
//   pure_as          funding-collapsed HJB table (the zero-funding AS limit)
//   pure_as_scaled   pure_as offsets with quote size and limits scaled by `scale`
//   hjb_fd           funding-aware HJB table, looked up at f = S * F
//   risk_calibrated  linear skew around 1/k in inventory and cash funding.
//                    This rule is a reconstruction: only its role as a
//                    practical funding-aware benchmark is known.

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <string_view>

#include "fundmm/errors.hpp"
#include "fundmm/hjb_solver.hpp"

namespace fundmm {

enum class PolicyKind { pure_as, pure_as_scaled, hjb_fd, risk_calibrated };

inline std::string_view to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::pure_as: return "pure_as";
        case PolicyKind::pure_as_scaled: return "pure_as_scaled";
        case PolicyKind::hjb_fd: return "hjb_fd";
        case PolicyKind::risk_calibrated: return "risk_calibrated";
    }
    return "?";
}

inline PolicyKind parse_policy_kind(std::string_view s) {
    if (s == "pure_as") return PolicyKind::pure_as;
    if (s == "pure_as_scaled") return PolicyKind::pure_as_scaled;
    if (s == "hjb_fd") return PolicyKind::hjb_fd;
    if (s == "risk_calibrated") return PolicyKind::risk_calibrated;
    throw ConfigError("unknown policy kind '" + std::string(s) + "'");
}

// How backtest elapsed time maps onto a finite-horizon table.
enum class HorizonMode {
    rolling,     // t mod horizon: the table restarts every horizon
    start_slice  // always the t = 0 slice (longest remaining horizon)
};

inline HorizonMode parse_horizon_mode(std::string_view s) {
    if (s == "rolling") return HorizonMode::rolling;
    if (s == "start_slice") return HorizonMode::start_slice;
    throw ConfigError("unknown horizon mode '" + std::string(s) + "'");
}

struct InventoryLimits {
    double q_min = -10.0;
    double q_max = 10.0;
    double quote_size = 1.0;

    void validate() const {
        if (!(quote_size > 0.0)) throw ConfigError("limits: quote_size must be > 0");
        if (!(q_min <= 0.0 && q_max >= 0.0 && q_max > q_min))
            throw ConfigError("limits: need q_min <= 0 <= q_max and q_min < q_max");
    }

    InventoryLimits scaled(double s) const { return {q_min * s, q_max * s, quote_size * s}; }
};

struct QuoteDecision {
    double bid_offset = std::numeric_limits<double>::infinity();
    double ask_offset = std::numeric_limits<double>::infinity();
    bool bid_active = false;
    bool ask_active = false;
    double quote_size = 1.0;
};

struct PolicyConfig {
    std::string name;  // report label; defaults to the kind
    PolicyKind kind = PolicyKind::pure_as;
    std::shared_ptr<const HJBTable> table;  // pure_as / pure_as_scaled / hjb_fd
    double scale = 1.0;                     // pure_as_scaled only
    double beta_q = 0.0;                    // quote currency per contract
    double beta_f = 0.0;                    // hours
    FillCurve fill;                         // 1/k and delta_min for risk_calibrated
    InventoryLimits limits;                 // base limits (before scaling)
    HorizonMode horizon_mode = HorizonMode::rolling;

    std::string label() const { return name.empty() ? std::string(to_string(kind)) : name; }

    bool uses_table() const { return kind != PolicyKind::risk_calibrated; }

    InventoryLimits effective_limits() const {
        return kind == PolicyKind::pure_as_scaled ? limits.scaled(scale) : limits;
    }

    void validate() const {
        limits.validate();
        if (!(scale > 0.0)) throw ConfigError("policy " + label() + ": scale must be > 0");
        if (uses_table()) {
            if (!table) throw ConfigError("policy " + label() + ": missing HJB table");
            const auto& g = table->grid;
            if (std::abs(g.q_min - limits.q_min) > 1e-12 || std::abs(g.q_max - limits.q_max) > 1e-12 ||
                std::abs(g.dq - limits.quote_size) > 1e-12)
                throw ConfigError("policy " + label() + ": table inventory grid does not match limits");
            if ((kind == PolicyKind::pure_as || kind == PolicyKind::pure_as_scaled) &&
                !(g.n_f == 1 && g.f_min == 0.0))
                throw ConfigError("policy " + label() + ": pure_as needs a funding-collapsed table");
        } else {
            if (!(fill.k > 0.0)) throw ConfigError("policy " + label() + ": risk rule needs fill k > 0");
            if (!std::isfinite(beta_q) || !std::isfinite(beta_f))
                throw ConfigError("policy " + label() + ": betas must be finite");
        }
    }

    // Table time for backtest elapsed hours.
    double table_time(double elapsed_hours) const {
        if (!table) return 0.0;
        const double T = table->grid.horizon;
        if (horizon_mode == HorizonMode::start_slice) return 0.0;
        const double r = std::fmod(std::max(elapsed_hours, 0.0), T);
        return r;
    }
};

// Grid for the funding-unaware baseline: same inventory axis, funding collapsed to {0}.
inline GridSpec collapsed_grid(GridSpec g) {
    g.f_min = g.f_max = 0.0;
    g.n_f = 1;
    return g;
}

inline HJBParams collapsed_params(HJBParams p) {
    p.ou_cash = OUParams{0.0, 0.0, 0.0};
    return p;
}

inline QuoteDecision quote(const PolicyConfig& policy, double t, double q, double price, double funding_rate) {
    QuoteDecision d;
    const InventoryLimits lim = policy.effective_limits();
    d.quote_size = lim.quote_size;
    const double tol = 1e-9 * lim.quote_size;
    const bool bid_room = q + lim.quote_size <= lim.q_max + tol;
    const bool ask_room = q - lim.quote_size >= lim.q_min - tol;

    switch (policy.kind) {
        case PolicyKind::pure_as:
        case PolicyKind::pure_as_scaled:
        case PolicyKind::hjb_fd: {
            if (!policy.table) throw ConfigError("policy " + policy.label() + ": missing HJB table");
            const double q_table = policy.kind == PolicyKind::pure_as_scaled ? q / policy.scale : q;
            const double f = policy.kind == PolicyKind::hjb_fd ? cash_scale(funding_rate, price) : 0.0;
            const auto r = quote_lookup(*policy.table, t, q_table, f);
            d.bid_active = !r.bid_blocked && bid_room;
            d.ask_active = !r.ask_blocked && ask_room;
            if (d.bid_active) d.bid_offset = r.bid_offset;
            if (d.ask_active) d.ask_offset = r.ask_offset;
            break;
        }
        case PolicyKind::risk_calibrated: {
            const double base = 1.0 / policy.fill.k;
            const double skew = policy.beta_q * q + policy.beta_f * cash_scale(funding_rate, price);
            d.bid_active = bid_room;
            d.ask_active = ask_room;
            if (d.bid_active) d.bid_offset = std::max(policy.fill.delta_min, base + skew);
            if (d.ask_active) d.ask_offset = std::max(policy.fill.delta_min, base - skew);
            break;
        }
    }
    return d;
}

}  // namespace fundmm
