#pragma once

#include <cstdint>
#include <random>

namespace seqdiag {

using Engine = std::mt19937_64;

// Per-path source of randomness. Owns its engine and a normal
// distribution so the polar method's cached second variate is not wasted.
class RandomStream {
public:
    explicit RandomStream(Engine engine) : engine_(std::move(engine)) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    Engine& engine() { return engine_; }

private:
    Engine engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Reproducible stream for one Monte Carlo path. The stream depends only on
// (base_seed, tag, path_index), never on which worker simulates the path.
// `tag` separates scenarios so that, e.g., P_inf and P_1 paths with the same
// index are independent, while different procedures evaluated on the same
// scenario see common random numbers.
inline RandomStream rng_stream(std::uint64_t base_seed, std::uint64_t path_index,
                               std::uint64_t tag = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(base_seed),
                      static_cast<std::uint32_t>(base_seed >> 32),
                      static_cast<std::uint32_t>(tag),
                      static_cast<std::uint32_t>(tag >> 32),
                      static_cast<std::uint32_t>(path_index),
                      static_cast<std::uint32_t>(path_index >> 32)};
    return RandomStream(Engine(seq));
}

} // namespace seqdiag
