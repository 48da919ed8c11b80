#pragma once

// Funding-rate model calibration: exact-transition Gaussian OU likelihood,
// OU-plus-jump Bernoulli-normal mixture likelihood, maximum-likelihood fits and
// standardized-residual diagnostics.
//
// All likelihoods run on the fractional hourly series F_t. Conversion to the
// cash-scaled state f = S*F happens only when building HJB inputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fundmm/errors.hpp"
#include "fundmm/nelder_mead.hpp"

namespace fundmm {

inline constexpr double kVarianceFloor = 1e-18;

// Sentinel returned by likelihoods when sigma == 0 and a residual is nonzero.
inline constexpr double kDegenerateLoglik = -std::numeric_limits<double>::infinity();

struct FundingSeries {
    std::vector<double> timestamps;  // hours since epoch, strictly increasing
    std::vector<double> values;      // fractional funding rate per hour

    std::size_t size() const noexcept { return values.size(); }

    void validate(std::size_t min_obs = 3) const {
        if (timestamps.size() != values.size())
            throw InvalidInput("funding series: timestamps and values differ in length");
        if (values.size() < min_obs)
            throw InvalidInput("funding series: need at least " + std::to_string(min_obs) +
                               " observations, got " + std::to_string(values.size()));
        for (std::size_t i = 1; i < timestamps.size(); ++i) {
            if (!(timestamps[i] > timestamps[i - 1]))
                throw InvalidInput("funding series: timestamps not strictly increasing at index " +
                                   std::to_string(i));
        }
        for (double v : values)
            if (!std::isfinite(v)) throw InvalidInput("funding series: non-finite value");
    }

    FundingSeries slice(std::size_t begin, std::size_t end) const {
        FundingSeries out;
        out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                              timestamps.begin() + static_cast<std::ptrdiff_t>(end));
        out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin),
                          values.begin() + static_cast<std::ptrdiff_t>(end));
        return out;
    }
};

struct OUParams {
    double kappa = 1.0;  // 1/hour
    double theta = 0.0;  // long-run level
    double sigma = 0.0;  // per sqrt(hour)

    void validate() const {
        if (!(kappa > 0.0) || !std::isfinite(kappa)) throw InvalidInput("OU kappa must be > 0");
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidInput("OU sigma must be >= 0");
        if (!std::isfinite(theta)) throw InvalidInput("OU theta must be finite");
    }

    double stationary_sd() const { return sigma / std::sqrt(2.0 * kappa); }
};

struct JumpParams {
    double lambda_j = 0.0;  // arrivals per hour
    double mu_j = 0.0;
    double sigma_j = 1.0;

    void validate() const {
        if (!(lambda_j >= 0.0) || !std::isfinite(lambda_j))
            throw InvalidInput("jump lambda must be >= 0");
        if (!(sigma_j > 0.0) || !std::isfinite(sigma_j)) throw InvalidInput("jump sigma must be > 0");
        if (!std::isfinite(mu_j)) throw InvalidInput("jump mu must be finite");
    }

    double step_probability(double dt) const { return -std::expm1(-lambda_j * dt); }
};

struct ResidualDiagnostics {
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    std::size_t n = 0;
};

struct TransitionMoments {
    double mean;
    double var;
};

inline double half_life(double kappa) {
    if (!(kappa > 0.0)) throw InvalidInput("half_life: kappa must be > 0");
    return std::numbers::ln2 / kappa;
}

inline double cash_scale(double funding_rate, double price) {
    if (!(price > 0.0)) throw InvalidInput("cash_scale: price must be > 0");
    return price * funding_rate;
}

// OU parameters of f = S*F when F follows `fractional`; kappa is unit-free in price.
inline OUParams to_cash_units(const OUParams& fractional, double price) {
    if (!(price > 0.0)) throw InvalidInput("to_cash_units: price must be > 0");
    return {fractional.kappa, fractional.theta * price, fractional.sigma * price};
}

inline TransitionMoments ou_moments(double f_prev, double dt, const OUParams& p) {
    if (!(dt > 0.0)) throw InvalidInput("ou_moments: dt must be > 0");
    p.validate();
    const double decay = std::exp(-p.kappa * dt);
    const double mean = p.theta + (f_prev - p.theta) * decay;
    const double var = p.sigma * p.sigma * (-std::expm1(-2.0 * p.kappa * dt)) / (2.0 * p.kappa);
    return {mean, var};
}

struct LoglikResult {
    double value = 0.0;
    std::size_t clamped_variances = 0;
};

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454836;

inline double normal_logpdf(double x, double mean, double var) {
    const double z = x - mean;
    return -0.5 * (kLog2Pi + std::log(var) + z * z / var);
}

inline double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double sample_mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double sample_sd(std::span<const double> x) {
    const double m = sample_mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

}  // namespace detail

inline LoglikResult ou_loglik_detail(const FundingSeries& s, const OUParams& p) {
    s.validate(2);
    p.validate();
    LoglikResult out;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const double dt = s.timestamps[i + 1] - s.timestamps[i];
        auto [mean, var] = ou_moments(s.values[i], dt, p);
        if (p.sigma == 0.0) {
            if (s.values[i + 1] != mean) return {kDegenerateLoglik, out.clamped_variances};
        }
        if (var < kVarianceFloor) {
            var = kVarianceFloor;
            ++out.clamped_variances;
        }
        out.value += detail::normal_logpdf(s.values[i + 1], mean, var);
    }
    return out;
}

inline double ou_loglik(const FundingSeries& s, const OUParams& p) {
    return ou_loglik_detail(s, p).value;
}

inline LoglikResult jump_mixture_loglik_detail(const FundingSeries& s, const OUParams& ou,
                                               const JumpParams& jp) {
    s.validate(2);
    ou.validate();
    jp.validate();
    LoglikResult out;
    const double sj2 = jp.sigma_j * jp.sigma_j;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const double dt = s.timestamps[i + 1] - s.timestamps[i];
        auto [mean, var] = ou_moments(s.values[i], dt, ou);
        if (ou.sigma == 0.0 && jp.lambda_j == 0.0 && s.values[i + 1] != mean)
            return {kDegenerateLoglik, out.clamped_variances};
        if (var < kVarianceFloor) {
            var = kVarianceFloor;
            ++out.clamped_variances;
        }
        const double x = s.values[i + 1];
        const double log_no_jump = -jp.lambda_j * dt;
        const double log_jump = jp.lambda_j > 0.0 ? std::log(-std::expm1(-jp.lambda_j * dt))
                                                  : -std::numeric_limits<double>::infinity();
        out.value += detail::log_sum_exp(log_no_jump + detail::normal_logpdf(x, mean, var),
                                         log_jump + detail::normal_logpdf(x, mean + jp.mu_j, var + sj2));
    }
    return out;
}

inline double jump_mixture_loglik(const FundingSeries& s, const OUParams& ou, const JumpParams& jp) {
    return jump_mixture_loglik_detail(s, ou, jp).value;
}

struct OUFit {
    OUParams params;
    double loglik = 0.0;
    std::size_t evaluations = 0;
    std::size_t clamped_variances = 0;
};

struct JumpFit {
    OUParams ou;
    JumpParams jump;
    double loglik = 0.0;     // mixture log-likelihood at the optimum
    double ll_gain = 0.0;    // loglik minus the Gaussian OU optimum, always >= 0
    bool at_boundary = false;  // lambda_J = 0 won the search
    std::size_t evaluations = 0;
};

class FitConvergenceError : public RuntimeFailure {
public:
    FitConvergenceError(const std::string& what, OUParams best_ou, JumpParams best_jump,
                        double best_loglik)
        : RuntimeFailure(what), best_ou(best_ou), best_jump(best_jump), best_loglik(best_loglik) {}

    OUParams best_ou;
    JumpParams best_jump;
    double best_loglik;
};

namespace detail {

struct ProfilePoint {
    double theta;
    double sigma2;
    double loglik;
};

// For fixed kappa the OU mean is linear in theta and the variance is sigma^2
// times a known weight, so theta and sigma have closed-form maximizers.
inline ProfilePoint ou_profile(const FundingSeries& s, double kappa) {
    const std::size_t n = s.size() - 1;
    double num = 0.0, den = 0.0, log_w = 0.0;
    std::vector<double> a(n), y(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = s.timestamps[i + 1] - s.timestamps[i];
        const double decay = std::exp(-kappa * dt);
        a[i] = -std::expm1(-kappa * dt);
        y[i] = s.values[i + 1] - s.values[i] * decay;
        w[i] = -std::expm1(-2.0 * kappa * dt) / (2.0 * kappa);
        num += a[i] * y[i] / w[i];
        den += a[i] * a[i] / w[i];
        log_w += std::log(w[i]);
    }
    const double theta = num / den;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - theta * a[i];
        ss += r * r / w[i];
    }
    const double sigma2 = ss / static_cast<double>(n);
    const double nn = static_cast<double>(n);
    const double ll = sigma2 > 0.0 ? -0.5 * nn * (kLog2Pi + std::log(sigma2) + 1.0) - 0.5 * log_w
                                   : -std::numeric_limits<double>::infinity();
    return {theta, sigma2, ll};
}

inline double median_gap(const FundingSeries& s) {
    std::vector<double> gaps;
    gaps.reserve(s.size() - 1);
    for (std::size_t i = 0; i + 1 < s.size(); ++i) gaps.push_back(s.timestamps[i + 1] - s.timestamps[i]);
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
    return gaps[gaps.size() / 2];
}

}  // namespace detail

// Maximum-likelihood Gaussian OU fit. A profiled 1-D search over kappa gives
// the starting point; Nelder-Mead over (log kappa, scaled theta, log sigma)
// then refines from three deterministic seeds and the best optimum wins.
inline OUFit fit_ou(const FundingSeries& s, const SimplexOptions& opts = {}) {
    s.validate(10);
    const auto [mn, mx] = std::minmax_element(s.values.begin(), s.values.end());
    if (*mn == *mx) throw DegenerateSeries("fit_ou: degenerate series (constant values)");

    const double level = detail::sample_mean(s.values);
    const double scale = detail::sample_sd(s.values);
    const double gap = detail::median_gap(s);

    // Coarse log-kappa scan followed by golden-section refinement.
    const double lo = std::log(1e-5 / gap), hi = std::log(200.0 / gap);
    constexpr int kScan = 241;
    int best_i = 0;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < kScan; ++i) {
        const double lk = lo + (hi - lo) * i / (kScan - 1);
        const double ll = detail::ou_profile(s, std::exp(lk)).loglik;
        if (ll > best_ll) {
            best_ll = ll;
            best_i = i;
        }
    }
    const double step = (hi - lo) / (kScan - 1);
    const double a = lo + step * std::max(0, best_i - 1);
    const double b = lo + step * std::min(kScan - 1, best_i + 1);
    const double lk_star = golden_section_max(
        [&](double lk) { return detail::ou_profile(s, std::exp(lk)).loglik; }, a, b, 1e-11);

    auto unpack = [&](const std::vector<double>& x) {
        return OUParams{std::exp(x[0]), level + scale * x[1], std::exp(x[2])};
    };
    auto objective = [&](const std::vector<double>& x) {
        const OUParams p = unpack(x);
        if (!std::isfinite(p.kappa) || !std::isfinite(p.sigma) || p.kappa <= 0.0 || p.sigma <= 0.0)
            return std::numeric_limits<double>::infinity();
        return -ou_loglik(s, p);
    };

    OUFit fit;
    double best_value = std::numeric_limits<double>::infinity();
    bool any_converged = false;
    SimplexOptions local = opts;
    local.initial_step = 0.05;
    for (double shift : {0.0, std::log(2.0), -std::log(2.0)}) {
        const double lk = lk_star + shift;
        const auto prof = detail::ou_profile(s, std::exp(lk));
        if (!(prof.sigma2 > 0.0)) continue;
        std::vector<double> x0{lk, (prof.theta - level) / scale, 0.5 * std::log(prof.sigma2)};
        const auto res = nelder_mead(objective, x0, local);
        fit.evaluations += res.evaluations;
        any_converged = any_converged || res.converged;
        if (res.value < best_value) {
            best_value = res.value;
            fit.params = unpack(res.x);
        }
    }
    if (!std::isfinite(best_value))
        throw DegenerateSeries("fit_ou: degenerate series (no finite likelihood)");
    if (!any_converged)
        throw FitConvergenceError("fit_ou: optimizer did not converge", fit.params, JumpParams{},
                                  -best_value);
    const auto ll = ou_loglik_detail(s, fit.params);
    fit.loglik = ll.value;
    fit.clamped_variances = ll.clamped_variances;
    return fit;
}

struct JumpFitOptions {
    SimplexOptions simplex{40000, 1e-9, 1e-8, 0.1};
    // When set, sigma_J is held at this value and only (lambda_J, mu_J) plus the
    // OU parameters are searched.
    double fixed_sigma_j = 0.0;
};

// Joint maximum-likelihood fit of OU plus Bernoulli-normal jumps, started
// from the Gaussian OU optimum `init`. The lambda_J = 0 boundary (which is the
// OU optimum itself) is always a candidate, so ll_gain >= 0.
inline JumpFit fit_ou_jump(const FundingSeries& s, const OUParams& init,
                           const JumpFitOptions& opts = {}) {
    s.validate(10);
    init.validate();
    if (!(init.sigma > 0.0)) throw InvalidInput("fit_ou_jump: init sigma must be > 0");
    const bool fixed_sj = opts.fixed_sigma_j > 0.0;

    const double level = detail::sample_mean(s.values);
    const double scale = detail::sample_sd(s.values);
    const double ll_ou = ou_loglik(s, init);
    const double gap = detail::median_gap(s);

    // Residual scale for jump-size initialization.
    double resid_sd = 0.0;
    {
        std::vector<double> r;
        r.reserve(s.size() - 1);
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            const auto m = ou_moments(s.values[i], s.timestamps[i + 1] - s.timestamps[i], init);
            r.push_back(s.values[i + 1] - m.mean);
        }
        resid_sd = detail::sample_sd(r);
        if (!(resid_sd > 0.0)) resid_sd = scale;
    }

    auto unpack = [&](const std::vector<double>& x) {
        OUParams ou{std::exp(x[0]), level + scale * x[1], std::exp(x[2])};
        JumpParams jp{std::exp(x[3]), scale * x[4], fixed_sj ? opts.fixed_sigma_j : std::exp(x[5])};
        return std::pair{ou, jp};
    };
    auto objective = [&](const std::vector<double>& x) {
        const auto [ou, jp] = unpack(x);
        if (!(ou.kappa > 0.0) || !(ou.sigma > 0.0) || !(jp.sigma_j > 0.0) ||
            !std::isfinite(jp.lambda_j) || !std::isfinite(ou.kappa) || !std::isfinite(ou.sigma) ||
            !std::isfinite(jp.sigma_j))
            return std::numeric_limits<double>::infinity();
        return -jump_mixture_loglik(s, ou, jp);
    };

    // The reduced vector omits log(sigma_J) when it is held fixed.
    auto search_objective = [&](const std::vector<double>& x) {
        if (!fixed_sj) return objective(x);
        auto full = x;
        full.push_back(0.0);
        return objective(full);
    };

    JumpFit best;
    best.ou = init;
    best.jump = JumpParams{0.0, 0.0, fixed_sj ? opts.fixed_sigma_j : 3.0 * resid_sd};
    best.loglik = ll_ou;
    best.at_boundary = true;

    bool any_converged = false;
    double best_interior = std::numeric_limits<double>::infinity();
    std::vector<double> best_x;
    const std::array<double, 3> lambdas{0.005, 0.02, 0.1};
    const std::array<double, 2> size_mults{3.0, 10.0};
    for (double lam : lambdas) {
        for (double mult : size_mults) {
            if (fixed_sj && mult != size_mults.front()) continue;
            std::vector<double> x0{std::log(init.kappa), (init.theta - level) / scale,
                                   std::log(init.sigma), std::log(lam / gap), 0.0,
                                   std::log(mult * resid_sd)};
            if (fixed_sj) x0.pop_back();
            const auto res = nelder_mead(search_objective, x0, opts.simplex);
            best.evaluations += res.evaluations;
            any_converged = any_converged || res.converged;
            if (res.value < best_interior) {
                best_interior = res.value;
                best_x = res.x;
            }
        }
    }
    // One restart from the best interior point tightens the simplex.
    if (!best_x.empty()) {
        const auto res = nelder_mead(
            search_objective, best_x, SimplexOptions{opts.simplex.max_evaluations, opts.simplex.f_tolerance,
                                   opts.simplex.x_tolerance, 0.02});
        best.evaluations += res.evaluations;
        any_converged = any_converged || res.converged;
        if (res.value <= best_interior) {
            best_interior = res.value;
            best_x = res.x;
        }
    }

    if (!best_x.empty() && std::isfinite(best_interior)) {
        auto full = best_x;
        if (fixed_sj) full.push_back(0.0);
        const auto [ou, jp] = unpack(full);
        if (-best_interior > best.loglik) {
            best.ou = ou;
            best.jump = jp;
            best.loglik = -best_interior;
            best.at_boundary = false;
        }
    }
    if (!any_converged)
        throw FitConvergenceError("fit_ou_jump: optimizer did not converge", best.ou, best.jump,
                                  best.loglik);
    best.ll_gain = best.loglik - ll_ou;
    return best;
}

inline std::vector<double> standardized_residuals(const FundingSeries& s, const OUParams& p) {
    s.validate(2);
    p.validate();
    std::vector<double> z;
    z.reserve(s.size() - 1);
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const auto m = ou_moments(s.values[i], s.timestamps[i + 1] - s.timestamps[i], p);
        if (!(m.var > 0.0)) throw InvalidInput("standardized residuals: zero transition variance");
        z.push_back((s.values[i + 1] - m.mean) / std::sqrt(m.var));
    }
    return z;
}

inline ResidualDiagnostics residual_diagnostics(const FundingSeries& s, const OUParams& p) {
    s.validate(4);
    const auto z = standardized_residuals(s, p);
    const double n = static_cast<double>(z.size());
    const double mean = detail::sample_mean(z);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : z) {
        const double d = v - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (!(m2 > 0.0)) throw InvalidInput("residual diagnostics: residuals have zero variance");
    return {m3 / std::pow(m2, 1.5), m4 / (m2 * m2) - 3.0, z.size()};
}

// Sample correlation of OU transition innovations with the aligned log price
// returns (log_returns[i] covers the step from observation i to i+1).
inline double innovation_price_correlation(const FundingSeries& s, const OUParams& p,
                                           std::span<const double> log_returns) {
    if (log_returns.size() + 1 != s.size())
        throw InvalidInput("innovation correlation: need one return per funding step");
    std::vector<double> e;
    e.reserve(log_returns.size());
    for (std::size_t i = 0; i + 1 < s.size(); ++i)
        e.push_back(s.values[i + 1] - ou_moments(s.values[i], s.timestamps[i + 1] - s.timestamps[i], p).mean);
    const double me = detail::sample_mean(e), mr = detail::sample_mean(log_returns);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        sxy += (e[i] - me) * (log_returns[i] - mr);
        sxx += (e[i] - me) * (e[i] - me);
        syy += (log_returns[i] - mr) * (log_returns[i] - mr);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

// Chronological split; the first `train_fraction` of observations train.
inline std::pair<FundingSeries, FundingSeries> split_chronological(const FundingSeries& s,
                                                                    double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        throw InvalidInput("train fraction must lie in (0, 1]");
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(s.size())));
    return {s.slice(0, n_train), s.slice(n_train, s.size())};
}

}  // namespace fundmm
