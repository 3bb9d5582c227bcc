#pragma once

// Deterministic trace generators. Every generator is a pure function of its
// arguments: the same inputs give the same trace, op for op.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "fiba/swag.hpp"

namespace fiba::workload {

enum class OpType : std::uint8_t { insert, evict, query, range_query };

/// One operation. `t` is the timestamp for insert/evict and the lower bound
/// of a range query, whose upper bound is `t2`. `value` is the raw input of
/// an insert, lifted by the operator at replay time.
struct TraceOp {
  OpType type = OpType::query;
  Timestamp t = 0;
  Timestamp t2 = 0;
  std::int64_t value = 0;

  friend bool operator==(const TraceOp&, const TraceOp&) = default;
};

/// A warm-up prefix followed by measured rounds of `ops_per_round` ops each.
/// Traces that are not round-structured set ops_per_round to 1.
struct Trace {
  std::vector<TraceOp> ops;
  std::size_t warmup = 0;
  std::size_t ops_per_round = 1;

  std::size_t rounds() const { return (ops.size() - warmup) / ops_per_round; }
  friend bool operator==(const Trace&, const Trace&) = default;
};

/// Window of n entries where, after a warm-up of n inserts, every insert has
/// exactly d younger entries already in the window. Each round is
/// insert, evict oldest, query. d = 0 is FIFO; d = n makes every insert and
/// evict happen at the old end (LIFO).
Trace adversarial_distance(std::size_t n, std::size_t d, std::size_t rounds,
                           std::uint64_t seed);

/// In-order inserts with oldest-first evicts at window size n.
Trace fifo(std::size_t n, std::size_t rounds, std::uint64_t seed);

/// adversarial_distance with d = n.
Trace lifo(std::size_t n, std::size_t rounds, std::uint64_t seed);

/// Big window of n_big entries at distance d = n_small / 2, with each round
/// extended by a range query over the youngest n_small entries:
/// insert, evict, query, range [lo, max()].
Trace sharing(std::size_t n_big, std::size_t n_small, std::size_t rounds,
              std::uint64_t seed);

/// Inserts follow a uniformly sampled permutation of 1..(n + rounds) in which
/// every element has at most d larger predecessors; the oldest entry is
/// evicted once the window exceeds n. Each round is insert, [evict], query.
Trace bounded_ooo_random(std::size_t n, std::size_t d, std::size_t rounds,
                         std::uint64_t seed);

struct FuzzConfig {
  std::size_t ops = 100000;
  std::size_t max_window = 256;
  std::uint64_t seed = 1;
};

/// Mixed operations for oracle-equivalence testing: in-order, near and far
/// out-of-order and duplicate inserts; oldest, youngest, arbitrary and absent
/// evicts; queries; range queries including empty and reversed ranges. The
/// window size wanders between empty and max_window in phases.
Trace fuzz(const FuzzConfig& cfg);

/// Uniform sample from the permutations of 1..m in which every element has
/// at most d larger elements before it.
std::vector<Timestamp> sample_bounded_ooo_permutation(std::size_t m,
                                                      std::size_t d,
                                                      std::uint64_t seed);

/// Number of such permutations, d! (d+1)^(m-d).
boost::multiprecision::cpp_int count_bounded_ooo(std::size_t m, std::size_t d);

/// For each position i, the number of earlier elements greater than perm[i].
std::vector<std::size_t> out_of_order_distances(
    const std::vector<Timestamp>& perm);

class TraceParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Line format: `I <t> <v>`, `E <t>`, `Q`, `R <t1> <t2>`. A leading
/// `# warmup <k> round <r>` line carries the trace layout; without it the
/// whole trace is measured in rounds of one op.
void write_trace(std::ostream& out, const Trace& trace);
Trace read_trace(std::istream& in);

}  // namespace fiba::workload
