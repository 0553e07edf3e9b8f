#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace distrn {

namespace detail {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t key, std::uint64_t value) noexcept
{
    return mix64(key ^ (value + 0x9e3779b97f4a7c15ULL + (key << 6) + (key >> 2)));
}

constexpr std::uint64_t hash_label(std::string_view label) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

/// Counter-based random stream. Output k is a bijective mix of (key, k), so a
/// stream is fully determined by its key and position and never depends on
/// which other streams were consumed before it.
///
/// Satisfies UniformRandomBitGenerator. A single stream must not be shared
/// between concurrent callers.
class Stream {
public:
    using result_type = std::uint64_t;

    constexpr explicit Stream(std::uint64_t key = 0) noexcept : key_(detail::mix64(key)) {}

    /// Stream for one (role, id, epoch) triple derived from a master seed.
    static constexpr Stream derive(std::uint64_t master, std::string_view role,
                                   std::uint64_t id = 0, std::uint64_t epoch = 0) noexcept
    {
        std::uint64_t k = detail::combine(master, detail::hash_label(role));
        k = detail::combine(k, id);
        k = detail::combine(k, epoch);
        return Stream(k);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept
    {
        return detail::mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
    }

    /// Uniform double in (0, 1].
    constexpr double uniform_open_closed() noexcept
    {
        return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound) without modulo bias.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept
    {
        const std::uint64_t limit = max() - max() % bound;
        std::uint64_t v;
        do {
            v = (*this)();
        } while (v >= limit);
        return v % bound;
    }

    [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] constexpr std::uint64_t position() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace distrn
