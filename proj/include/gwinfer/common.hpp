#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace gwinfer {

/// Error with a stable machine-readable kind tag ("dimension-mismatch",
/// "not-positive-definite", ...) alongside the human-readable message.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

[[noreturn]] inline void fail(const std::string& kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool cond, const std::string& kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
} // namespace detail

/// One independent random substream. Streams derived from the same root seed
/// but different ids never share state, so per-chain / per-component work is
/// reproducible regardless of evaluation order.
class RngStream {
public:
    RngStream() : gen_(0) {}
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    static RngStream substream(std::uint64_t root_seed, std::uint64_t stream_id) {
        const std::uint64_t mixed =
            detail::splitmix64(root_seed ^ detail::splitmix64(stream_id + 0x51ed2701a2b9476bULL));
        return RngStream(mixed);
    }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
    double gamma(double shape, double scale) {
        return std::gamma_distribution<double>(shape, scale)(gen_);
    }
    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

} // namespace gwinfer
