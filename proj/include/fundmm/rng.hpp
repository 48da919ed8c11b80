#pragma once

#include <cstdint>
#include <limits>

namespace fundmm {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

// Counter-based generator: draw n is a pure function of (key, n), so two paths
// keyed by the same (global_seed, path_seed) consume identical streams no matter
// how work is scheduled across threads.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t global_seed, std::uint64_t path_seed) noexcept
        : key_(detail::splitmix64(detail::splitmix64(global_seed) ^
                                  (path_seed * 0xd1b54a32d192ed03ULL))) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        ++counter_;
        return detail::splitmix64(key_ ^ detail::splitmix64(counter_));
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    std::uint64_t draws() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace fundmm
