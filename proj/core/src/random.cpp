#include "gec/random.hpp"

#include "gec/errors.hpp"
#include "gec/linalg.hpp"

#include <utility>

namespace gec {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
__extension__ typedef unsigned __int128 u128;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64(splitmix64(seed) ^ splitmix64(stream * kGolden + 0x632BE59BD9B4E019ULL))) {}

Rng Rng::fork(std::uint64_t id) const {
    Rng child(0, 0);
    child.key_ = splitmix64(key_ ^ splitmix64(id + 0xD1B54A32D192ED03ULL));
    return child;
}

std::uint64_t Rng::next_u64() {
    return splitmix64(key_ + kGolden * (++counter_));
}

double Rng::uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
    return normal_quantile(uniform());
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("below(0)");
    const u128 m = static_cast<u128>(next_u64()) * n;
    return static_cast<std::uint64_t>(m >> 64);
}

std::vector<long> Rng::sample_without_replacement(std::vector<long> items, long k) {
    const long m = static_cast<long>(items.size());
    if (k < 0 || k > m) throw InvalidArgument("sample size exceeds population");
    for (long i = 0; i < k; ++i) {
        const long j = i + static_cast<long>(below(static_cast<std::uint64_t>(m - i)));
        std::swap(items[i], items[j]);
    }
    items.resize(k);
    return items;
}

}  // namespace gec
