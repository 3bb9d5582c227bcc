#pragma once

// Aggregation operators. A monoid type provides
//
//   using In  = ...;   raw input
//   using Agg = ...;   partial aggregate
//   using Out = ...;   final answer
//   Agg identity() const;
//   Agg combine(const Agg&, const Agg&) const;   associative, not assumed commutative
//   Agg lift(const In&) const;
//   Out lower(const Agg&) const;
//
// Every operator here is a stateless value type; instances may be shared
// freely across threads.

#include <algorithm>
#include <bitset>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

namespace fiba {

template <typename M>
concept Monoid = requires(const M& m, const typename M::Agg& a,
                          const typename M::In& x) {
  typename M::In;
  typename M::Agg;
  typename M::Out;
  { m.identity() } -> std::convertible_to<typename M::Agg>;
  { m.combine(a, a) } -> std::convertible_to<typename M::Agg>;
  { m.lift(x) } -> std::convertible_to<typename M::Agg>;
  { m.lower(a) } -> std::convertible_to<typename M::Out>;
};

/// Equality of partial aggregates. Operators whose combine is inexact
/// (floating point) supply `equivalent`; everyone else is compared with ==.
template <Monoid M>
bool aggregates_match(const M& op, const typename M::Agg& a,
                      const typename M::Agg& b) {
  if constexpr (requires { op.equivalent(a, b); })
    return op.equivalent(a, b);
  else
    return a == b;
}

/// Integer sum with two's-complement wraparound.
struct SumOp {
  using In = std::int64_t;
  using Agg = std::int64_t;
  using Out = std::int64_t;
  static constexpr std::string_view name = "sum";

  Agg identity() const { return 0; }
  Agg combine(Agg a, Agg b) const {
    return static_cast<Agg>(static_cast<std::uint64_t>(a) +
                            static_cast<std::uint64_t>(b));
  }
  Agg lift(In x) const { return x; }
  Out lower(Agg a) const { return a; }
};

/// Geometric mean, kept as (sum of logs, count) so that combining only
/// needs floating point additions. Inputs must be positive.
struct GeomeanOp {
  struct Agg {
    double log_sum = 0.0;
    std::int64_t count = 0;
    friend bool operator==(const Agg&, const Agg&) = default;
  };
  using In = std::int64_t;
  using Out = double;
  static constexpr std::string_view name = "geomean";
  static constexpr double relative_tolerance = 1e-9;

  Agg identity() const { return {}; }
  Agg combine(const Agg& a, const Agg& b) const {
    return {a.log_sum + b.log_sum, a.count + b.count};
  }
  Agg lift(In x) const { return {std::log(static_cast<double>(x)), 1}; }
  /// The empty window reports 1, the geometric mean of nothing.
  Out lower(const Agg& a) const {
    if (a.count == 0) return 1.0;
    return std::exp(a.log_sum / static_cast<double>(a.count));
  }
  bool equivalent(const Agg& a, const Agg& b) const {
    if (a.count != b.count) return false;
    double scale = std::max({1.0, std::abs(a.log_sum), std::abs(b.log_sum)});
    return std::abs(a.log_sum - b.log_sum) <= relative_tolerance * scale;
  }
};

/// Bloom filter over a 2^14-bit set with k = 3 multiply-shift hashes.
struct BloomOp {
  static constexpr std::size_t bits = std::size_t{1} << 14;
  static constexpr int shift = 64 - 14;
  static constexpr int hash_count = 3;
  // Odd multipliers and offsets for h_i(x) = (a_i * x + b_i) >> (64 - 14).
  static constexpr std::uint64_t multipliers[hash_count] = {
      0x9e3779b97f4a7c15ULL, 0xc2b2ae3d27d4eb4fULL, 0x165667b19e3779f9ULL};
  static constexpr std::uint64_t offsets[hash_count] = {
      0x27d4eb2f165667c5ULL, 0x85ebca77c2b2ae63ULL, 0xff51afd7ed558ccdULL};

  using In = std::int64_t;
  using Agg = std::bitset<bits>;
  using Out = Agg;
  static constexpr std::string_view name = "bloom";

  static std::size_t hash(int i, In x) {
    return static_cast<std::size_t>(
        (multipliers[i] * static_cast<std::uint64_t>(x) + offsets[i]) >> shift);
  }

  Agg identity() const { return {}; }
  Agg combine(const Agg& a, const Agg& b) const { return a | b; }
  Agg lift(In x) const {
    Agg result;
    for (int i = 0; i < hash_count; ++i) result.set(hash(i, x));
    return result;
  }
  Out lower(const Agg& a) const { return a; }

  static bool may_contain(const Agg& filter, In x) {
    for (int i = 0; i < hash_count; ++i)
      if (!filter.test(hash(i, x))) return false;
    return true;
  }
};

/// Maximum together with the number of times it occurs.
struct MaxCountOp {
  struct Agg {
    std::int64_t max = std::numeric_limits<std::int64_t>::min();
    std::uint64_t count = 0;  // 0 only for the identity
    friend bool operator==(const Agg&, const Agg&) = default;
  };
  using In = std::int64_t;
  using Out = Agg;
  static constexpr std::string_view name = "maxcount";

  Agg identity() const { return {}; }
  Agg combine(const Agg& a, const Agg& b) const {
    if (a.count == 0) return b;
    if (b.count == 0) return a;
    if (a.max > b.max) return a;
    if (a.max < b.max) return b;
    return {a.max, a.count + b.count};
  }
  Agg lift(In x) const { return {x, 1}; }
  Out lower(const Agg& a) const { return a; }
};

/// x (+) y = x: the oldest value in the window. Used by the sorting reduction.
struct FirstOp {
  using In = std::int64_t;
  using Agg = std::optional<std::int64_t>;
  using Out = Agg;
  static constexpr std::string_view name = "first";

  Agg identity() const { return std::nullopt; }
  Agg combine(const Agg& a, const Agg& b) const { return a ? a : b; }
  Agg lift(In x) const { return x; }
  Out lower(const Agg& a) const { return a; }
};

/// Sequence concatenation. Any ordering mistake anywhere in a tree shows up
/// as a different sequence, which makes this the detector of choice in tests.
struct ConcatOp {
  using In = std::int64_t;
  using Agg = std::vector<std::int64_t>;
  using Out = Agg;
  static constexpr std::string_view name = "concat";

  Agg identity() const { return {}; }
  Agg combine(const Agg& a, const Agg& b) const {
    Agg result;
    result.reserve(a.size() + b.size());
    result.insert(result.end(), a.begin(), a.end());
    result.insert(result.end(), b.begin(), b.end());
    return result;
  }
  Agg lift(In x) const { return {x}; }
  Out lower(const Agg& a) const { return a; }
};

}  // namespace fiba
