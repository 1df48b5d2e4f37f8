#pragma once

#include <cstdint>
#include <random>

namespace archevo {

// The single random stream of a run. mt19937_64 output is fixed by the
// standard; we do our own real conversion so draws are identical across
// standard library implementations. The draw counter is the stream position
// that gets persisted for resume.
class RunRng {
public:
    explicit RunRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    double uniform()
    {
        ++draws_;
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t draws() const noexcept { return draws_; }

    // Re-seeds and fast-forwards to a previously recorded position.
    void restore(std::uint64_t seed, std::uint64_t draws)
    {
        seed_ = seed;
        engine_.seed(seed);
        engine_.discard(draws);
        draws_ = draws;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::uint64_t draws_ = 0;
};

} // namespace archevo
