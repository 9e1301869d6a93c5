#pragma once

#include <cstdint>
#include <vector>

namespace gec {

/// Counter-based generator: the k-th draw of stream (seed, stream) is a pure
/// function of (seed, stream, k), so substreams can be forked per
/// replication and per purpose without any shared state.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

    /// Independent child stream identified by `id`.
    Rng fork(std::uint64_t id) const;

    std::uint64_t next_u64();
    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    /// Draws k distinct elements of `items` (partial Fisher-Yates).
    std::vector<long> sample_without_replacement(std::vector<long> items, long k);

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace gec
