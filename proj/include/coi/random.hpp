#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace coi {

/// 64-bit FNV-1a. Stable across platforms; used to derive seeds from names.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives a named sub-seed ("split", "fallback", "fewshot", "mock-noise")
/// from the global seed.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view name) noexcept;

/// Seeded generator with platform-independent draws. std::mt19937_64 is
/// fully specified by the standard, the std distributions are not, so the
/// reductions live here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

}  // namespace coi
