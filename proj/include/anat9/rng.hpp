#pragma once

#include <cmath>
#include <cstdint>

namespace anat9 {

// Stream selectors so independent draws inside one run never collide.
enum class RngOp : std::uint64_t {
    scene_pose = 1,
    perturb = 2,
    aug_rigid = 3,
    aug_crop = 4,
    aug_erase = 5,
    toy_init = 6,
};

// Counter-based deterministic generator keyed by (seed, case id, op id).
// Output i is the splitmix64 finalizer applied to key + i*gamma, so draws
// are a pure function of the key and the counter.
class DetRng {
public:
    DetRng(std::uint64_t seed, std::uint64_t case_id, RngOp op)
        : key_(mix(mix(mix(0x9e3779b97f4a7c15ull ^ seed) + case_id) +
                   static_cast<std::uint64_t>(op))) {}

    std::uint64_t next_u64() {
        std::uint64_t z = key_ + (++counter_) * 0x9e3779b97f4a7c15ull;
        return mix(z);
    }

    // Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; consumes two uniforms per call.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925287 * u2);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace anat9
