#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fundmm/fill_calib.hpp"
#include "fundmm/synthetic.hpp"
#include "oracles.hpp"

using namespace fundmm;
using Catch::Approx;

namespace {

// Hit counts from exact per-minute probabilities on a very long sample, so
// integer rounding contributes < 1e-12 relative error.
HitPanel exact_panel(double lambda0, double k, const std::vector<double>& thresholds) {
    HitPanel p;
    p.minutes = 1'000'000'000'000LL;
    p.thresholds = thresholds;
    for (double d : thresholds) {
        const double prob = 1.0 - std::exp(-lambda0 * std::exp(-k * d) / 60.0);
        p.hits.push_back(std::llround(prob * static_cast<double>(p.minutes)));
    }
    return p;
}

std::vector<MinuteTrades> random_tape(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(0.0, 6.0), vol(0.0, 1.5);
    std::uniform_int_distribution<int> count(0, 4);
    std::vector<MinuteTrades> tape;
    for (std::size_t m = 0; m < n; ++m) {
        MinuteTrades mt{static_cast<std::int64_t>(60 * m), {}};
        const int c = count(gen);
        for (int i = 0; i < c; ++i) mt.crossings.push_back({dist(gen), vol(gen)});
        tape.push_back(mt);
    }
    return tape;
}

}  // namespace

TEST_CASE("single deep crossing with a full quote of volume", "[fill][bucket]") {
    const double d1 = 1.0;
    const std::vector<MinuteTrades> tape{{0, {{2.0 * d1, 1.0}}}};
    const std::vector<double> th{d1, 2.0 * d1};
    const auto vm = bucket_hits(tape, th, HitMode::volume_minute, 1.0);
    CHECK(vm.hits == std::vector<std::int64_t>{1, 1});
    const auto mh = bucket_hits(tape, th, HitMode::minute_hit, 1.0);
    CHECK(mh.hits == std::vector<std::int64_t>{1, 1});
}

TEST_CASE("half a quote of volume splits the two counting rules", "[fill][bucket]") {
    const std::vector<MinuteTrades> tape{{0, {{2.0, 0.5}}}};
    const std::vector<double> th{1.0, 2.0};
    CHECK(bucket_hits(tape, th, HitMode::minute_hit, 1.0).hits == std::vector<std::int64_t>{1, 1});
    CHECK(bucket_hits(tape, th, HitMode::volume_minute, 1.0).hits == std::vector<std::int64_t>{0, 0});
}

TEST_CASE("volume_minute accumulates deeper crossings", "[fill][bucket]") {
    // 0.6 at depth 3 and 0.5 at depth 1: cumulative volume reaches 1 only at depth 1.
    const std::vector<MinuteTrades> tape{{0, {{3.0, 0.6}, {1.0, 0.5}}}};
    const std::vector<double> th{0.5, 1.0, 2.0, 3.0};
    CHECK(bucket_hits(tape, th, HitMode::volume_minute, 1.0).hits == std::vector<std::int64_t>{1, 1, 0, 0});
    CHECK(bucket_hits(tape, th, HitMode::minute_hit, 1.0).hits == std::vector<std::int64_t>{1, 1, 1, 1});
}

TEST_CASE("bucket_hits matches an independent recount", "[fill][bucket][oracle]") {
    const auto tape = random_tape(1000, 17);
    const std::vector<double> th{0.25, 0.5, 1.0, 1.5, 2.5, 4.0, 5.5};
    for (auto mode : {HitMode::volume_minute, HitMode::minute_hit}) {
        for (double qs : {0.5, 1.0, 2.0}) {
            const auto panel = bucket_hits(tape, th, mode, qs);
            CHECK(panel.minutes == 1000);
            CHECK(panel.hits == oracle::recount_hits(tape, th, mode, qs));
            CHECK_NOTHROW(panel.validate());
        }
    }
}

TEST_CASE("bucket_hits error paths", "[fill][bucket]") {
    const std::vector<MinuteTrades> tape{{0, {{1.0, 1.0}}}};
    const std::vector<double> unsorted{2.0, 1.0};
    CHECK_THROWS_AS(bucket_hits(tape, unsorted, HitMode::minute_hit, 1.0), InvalidInput);
    const std::vector<double> ok{1.0};
    CHECK_THROWS_AS(bucket_hits(tape, ok, HitMode::volume_minute, 0.0), InvalidInput);
    const std::vector<MinuteTrades> two{{0, {{1.0, 1.0}}}, {60, {{1.0, 1.0}}}};
    CHECK_THROWS_AS(bucket_hits(two, ok, HitMode::minute_hit, 1.0, 1), InvalidInput);
}

TEST_CASE("observed minutes without trades count as misses", "[fill][bucket]") {
    const std::vector<MinuteTrades> tape{{0, {{1.0, 1.0}}}};
    const std::vector<double> th{0.5};
    const auto p = bucket_hits(tape, th, HitMode::minute_hit, 1.0, 10);
    CHECK(p.minutes == 10);
    CHECK(p.hits[0] == 1);
}

TEST_CASE("fit_fill_curve inverts an exact panel", "[fill][fit]") {
    const std::vector<double> th{10.0, 11.0, 12.5, 14.0, 16.0, 18.0, 20.0};
    const auto fit = fit_fill_curve(exact_panel(7200.0, 0.5, th), 0.01);
    CHECK(fit.curve.lambda0 == Approx(7200.0).epsilon(1e-6));
    CHECK(fit.curve.k == Approx(0.5).epsilon(1e-6));
    CHECK(fit.curve.delta_min == 0.01);
    CHECK(fit.used_thresholds == th.size());
}

TEST_CASE("fit_fill_curve is rate invariant", "[fill][fit]") {
    HitPanel p{1000, {0.5, 1.0, 2.0, 3.0}, {700, 450, 200, 60}, HitMode::volume_minute, 1.0};
    auto q = p;
    q.minutes *= 2;
    for (auto& h : q.hits) h *= 2;
    const auto a = fit_fill_curve(p, 0.0), b = fit_fill_curve(q, 0.0);
    CHECK(b.curve.lambda0 == Approx(a.curve.lambda0).epsilon(1e-12));
    CHECK(b.curve.k == Approx(a.curve.k).epsilon(1e-12));
}

TEST_CASE("fit_fill_curve is scale consistent in distance", "[fill][fit][property]") {
    HitPanel p{5000, {0.5, 1.0, 2.0, 3.0, 4.5}, {3100, 2300, 1100, 520, 170}, HitMode::minute_hit, 1.0};
    const auto base = fit_fill_curve(p, 0.0);
    for (double c : {0.01, 0.5, 3.0, 250.0}) {
        auto q = p;
        for (auto& t : q.thresholds) t *= c;
        const auto f = fit_fill_curve(q, 0.0);
        CHECK(f.curve.k == Approx(base.curve.k / c).epsilon(1e-9));
        CHECK(f.curve.lambda0 == Approx(base.curve.lambda0).epsilon(1e-9));
    }
}

TEST_CASE("empirical intensity is non-increasing and implied probabilities are proper", "[fill][fit][property]") {
    std::mt19937_64 gen(4);
    std::uniform_int_distribution<int> step(0, 300);
    for (int trial = 0; trial < 100; ++trial) {
        HitPanel p;
        p.minutes = 2000;
        std::int64_t h = 1999;
        for (int i = 0; i < 6; ++i) {
            p.thresholds.push_back(0.5 * (i + 1));
            h = std::max<std::int64_t>(1, h - step(gen));
            p.hits.push_back(h);
        }
        FillFit fit;
        try {
            fit = fit_fill_curve(p, 0.0);
        } catch (const NonDecayingFills&) {
            continue;
        }
        for (std::size_t i = 1; i < fit.intensity_per_hour.size(); ++i)
            CHECK(fit.intensity_per_hour[i] <= fit.intensity_per_hour[i - 1]);
        for (double d : p.thresholds) {
            const double prob = 1.0 - std::exp(-fit.curve.intensity(d) / 60.0);
            CHECK(prob > 0.0);
            CHECK(prob < 1.0);
        }
    }
}

TEST_CASE("fit_fill_curve error paths", "[fill][fit]") {
    HitPanel zeros{100, {1.0, 2.0, 3.0}, {0, 0, 0}, HitMode::volume_minute, 1.0};
    CHECK_THROWS_AS(fit_fill_curve(zeros, 0.0), UninformativePanel);
    HitPanel full{100, {1.0, 2.0, 3.0}, {100, 100, 100}, HitMode::volume_minute, 1.0};
    CHECK_THROWS_AS(fit_fill_curve(full, 0.0), UninformativePanel);
    HitPanel flat{100, {1.0, 2.0, 3.0}, {40, 40, 40}, HitMode::volume_minute, 1.0};
    CHECK_THROWS_AS(fit_fill_curve(flat, 0.0), NonDecayingFills);
    HitPanel rising{100, {1.0, 2.0}, {10, 20}, HitMode::volume_minute, 1.0};
    CHECK_THROWS_AS(fit_fill_curve(rising, 0.0), InvalidInput);
}

TEST_CASE("synthetic 30-day tape recovers the fill curve and orders the modes", "[fill][fit][synthetic]") {
    for (std::uint64_t seed : {1, 2, 3}) {
        SyntheticSpec spec;
        spec.seed = seed;
        spec.days = 30.0;
        spec.fill = {120.0, 0.5, 0.0};
        const auto data = generate_synthetic(spec);
        // 0.5 .. 8 quote units: lambda falls from ~93/h to ~2/h
        const auto grid = default_thresholds(1e4, 8, 0.5, 8.0);
        const auto vm = bucket_hits(data.tape, grid, HitMode::volume_minute, spec.quote_size, data.minutes);
        const auto mh = bucket_hits(data.tape, grid, HitMode::minute_hit, spec.quote_size, data.minutes);
        for (std::size_t i = 0; i < grid.size(); ++i) CHECK(mh.hits[i] >= vm.hits[i]);
        const auto fv = fit_fill_curve(vm, 0.0), fm = fit_fill_curve(mh, 0.0);
        CHECK(std::abs(fv.curve.lambda0 / 120.0 - 1.0) < 0.05);
        CHECK(std::abs(fv.curve.k / 0.5 - 1.0) < 0.05);
        CHECK(fm.curve.lambda0 >= fv.curve.lambda0);
    }
}

TEST_CASE("default thresholds", "[fill]") {
    const auto th = default_thresholds(3000.0);
    REQUIRE(th.size() == 8);
    CHECK(th.front() == Approx(0.15).epsilon(1e-12));
    CHECK(th.back() == Approx(15.0).epsilon(1e-12));
    for (std::size_t i = 2; i < th.size(); ++i)
        CHECK(th[i] / th[i - 1] == Approx(th[1] / th[0]).epsilon(1e-12));
}
