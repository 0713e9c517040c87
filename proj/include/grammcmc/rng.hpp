#pragma once

#include <cstdint>
#include <span>

namespace grammcmc {

// Counter-based deterministic random stream. Output n of stream (seed, id) is a
// pure integer function of (seed, id, n), so results do not depend on evaluation
// order or thread count. Core mixer is the splitmix64 finalizer.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : base_(mix(mix(seed + 0x9E3779B97F4A7C15ULL) ^ mix(stream_id + 0xD1B54A32D192ED03ULL))) {}

    std::uint64_t next_u64() { return mix(base_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

    // uniform in (0, 1); never exactly 0, so log() is finite
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // index into a probability vector by CDF walk; zero entries are never chosen
    std::size_t sample_index(std::span<const double> probs) {
        const double u = next_uniform();
        double acc = 0.0;
        std::size_t last_positive = 0;
        bool seen = false;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] <= 0.0) continue;
            acc += probs[i];
            last_positive = i;
            seen = true;
            if (u < acc) return i;
        }
        (void)seen;
        return last_positive;  // u fell in the rounding gap past the last entry
    }

    std::uint64_t draws() const { return counter_; }

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

private:
    std::uint64_t base_;
    std::uint64_t counter_ = 0;
};

// Per-chain substream ids. One chain owns three independent streams so that a
// change in how many draws one phase consumes cannot shift another phase.
enum class ChainSubstream : std::uint64_t {
    truncation = 0,
    gcd = 1,
    bernoulli = 2,
};

inline RngStream chain_stream(std::uint64_t chain_seed, ChainSubstream sub) {
    return RngStream(chain_seed, static_cast<std::uint64_t>(sub));
}

}  // namespace grammcmc
