#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace epibias {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state)
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k)
{
    return (x << k) | (x >> (64 - k));
}

} // namespace detail

/*!
 * Independent random stream keyed by (master seed, stream id, substream).
 *
 * The state of a xoshiro256** generator is filled from a splitmix64 sequence
 * whose origin mixes all three keys, so stream i never depends on how many
 * draws other streams consumed. Replicate k of an ensemble always uses
 * stream id k.
 *
 * Satisfies UniformRandomBitGenerator; the member samplers below are
 * implemented here rather than taken from <random> so that the draw sequence
 * is identical across standard library implementations.
 */
class RandomStream {
  public:
    using result_type = std::uint64_t;

    RandomStream(std::uint64_t master_seed, std::uint64_t stream_id, std::uint64_t substream = 0)
    {
        std::uint64_t mix = master_seed;
        std::uint64_t key = detail::splitmix64(mix);
        key ^= stream_id * 0xd1342543de82ef95ULL;
        mix = key;
        key = detail::splitmix64(mix) ^ (substream * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
        for (auto& word : state_) {
            word = detail::splitmix64(key);
        }
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()()
    {
        const std::uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    /// Uniform on the open interval (0, 1).
    double uniform()
    {
        // 53 random bits, offset by half an ulp so neither endpoint occurs.
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal by the Marsaglia polar method.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0.0;
        double v = 0.0;
        double s = 0.0;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double factor = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * factor;
        has_spare_ = true;
        return u * factor;
    }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

    bool bernoulli(double p) { return uniform() < p; }

    /// Number of trials up to and including the first success (support 1, 2, ...).
    std::uint64_t geometric(double p)
    {
        if (p >= 1.0) {
            return 1;
        }
        const double trials = std::floor(std::log(uniform()) / std::log1p(-p));
        return static_cast<std::uint64_t>(trials) + 1;
    }

  private:
    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace epibias
