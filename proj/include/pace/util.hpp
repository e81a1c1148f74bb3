#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace pace {

using Timestamp = std::chrono::system_clock::time_point;
using NowFn = std::function<Timestamp()>;

// ISO-8601 UTC with millisecond precision, e.g. 2024-05-01T12:00:00.000Z.
std::string format_timestamp(Timestamp t);
Timestamp parse_timestamp(const std::string& text);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Uniform draw in [0, bound) from a 64-bit engine without the implementation-
// defined behaviour of std::uniform_int_distribution, so seeded results match
// across standard libraries.
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound);

// Fisher-Yates over [0, n) driven by bounded_draw.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// Runs fn(i) for i in [0, n) on up to `parallelism` threads. Exceptions escape
// from fn are captured per index; the first one (lowest index) is rethrown
// after all workers finish.
void parallel_for(std::size_t n, std::size_t parallelism, const std::function<void(std::size_t)>& fn);

// FNV-1a, used to derive per-item seeds from stable string keys.
std::uint64_t stable_hash(std::string_view s);

}  // namespace pace
