#pragma once

// Common vocabulary for out-of-order sliding-window aggregators.
//
// A window is a set of timed values <t:v> with distinct timestamps, kept in
// ascending time order. Every engine in this library supports
//
//   insert(t, v)        merge into an existing <t:old> as old (+) v, or add <t:v>
//   evict(t)            remove <t:_> if present, otherwise do nothing
//   query()             v_1 (+) ... (+) v_n, identity when empty
//   range_query(a, b)   fold of the entries with a <= t <= b, identity if none
//   size()
//
// and reports per-operation instrumentation through last_op() / totals().

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fiba/monoid.hpp"

namespace fiba {

/// Only comparisons are ever applied to timestamps.
using Timestamp = std::int64_t;

template <typename Agg>
struct TimedValue {
  Timestamp time;
  Agg value;
};

/// Raised by engines that restrict the order of operations (two-stacks).
class OrderingViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised by check_invariants(); the message names the node path.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class OpKind : std::uint8_t { insert, evict, query, range_query };

enum class StepKind : std::uint8_t {
  split,
  merge,
  move,
  height_increase,
  height_decrease
};

/// Work done by one operation (or accumulated over many).
struct OpCounters {
  std::uint64_t combines = 0;
  std::uint64_t nodes_visited = 0;
  std::uint64_t splits = 0;
  std::uint64_t merges = 0;
  std::uint64_t moves = 0;
  std::uint64_t height_increases = 0;
  std::uint64_t height_decreases = 0;

  /// Restructuring steps that cost a coin. Height changes are not billed.
  std::uint64_t spent() const { return splits + merges + moves; }

  OpCounters& operator+=(const OpCounters& o) {
    combines += o.combines;
    nodes_visited += o.nodes_visited;
    splits += o.splits;
    merges += o.merges;
    moves += o.moves;
    height_increases += o.height_increases;
    height_decreases += o.height_decreases;
    return *this;
  }
};

/// Instrumentation for the most recent operation of an engine.
///
/// phi_before/phi_after are the tree potential (sum of coins over nodes)
/// around the operation, so that
///   billed - refunded == spent + (phi_after - phi_before).
struct OpRecord {
  OpKind kind = OpKind::query;
  OpCounters counters;
  std::int64_t phi_before = 0;
  std::int64_t phi_after = 0;
  std::vector<StepKind> steps;

  std::int64_t spent() const {
    return static_cast<std::int64_t>(counters.spent());
  }
  std::int64_t net_cost() const { return spent() + phi_after - phi_before; }
  std::int64_t billed() const { return net_cost() > 0 ? net_cost() : 0; }
  std::int64_t refunded() const { return net_cost() < 0 ? -net_cost() : 0; }
};

/// What every aggregator in this library looks like from the outside.
template <typename E>
concept OooSwag = requires(E e, const E& ce, Timestamp t,
                           const typename E::Agg& v) {
  typename E::Agg;
  { e.insert(t, v) };
  { e.evict(t) } -> std::convertible_to<bool>;
  { ce.query() } -> std::convertible_to<typename E::Agg>;
  { ce.range_query(t, t) } -> std::convertible_to<typename E::Agg>;
  { ce.size() } -> std::convertible_to<std::size_t>;
  { ce.last_op() } -> std::convertible_to<const OpRecord&>;
  { ce.totals() } -> std::convertible_to<const OpCounters&>;
};

}  // namespace fiba
