#pragma once

#include <cstdint>
#include <random>

namespace mmbm {

/// Seeded random stream. Replication r of a run with base seed s draws from
/// `Stream::substream(s, r)`, so results do not depend on scheduling.
class Stream {
public:
    using engine_type = std::mt19937_64;

    explicit Stream(std::uint64_t seed) : engine_(seed) {}

    static Stream substream(std::uint64_t base_seed, std::uint64_t index) {
        std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                          static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                          0x6d6d626du};
        return Stream(seq);
    }

    engine_type& engine() noexcept { return engine_; }

    /// Exponential variate with the given rate (> 0).
    double exponential(double rate) { return std::exponential_distribution<double>(rate)(engine_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

private:
    explicit Stream(std::seed_seq& seq) : engine_(seq) {}

    engine_type engine_;
};

}  // namespace mmbm
