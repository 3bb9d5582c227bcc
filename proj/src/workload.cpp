#include "fiba/workload.hpp"

#include <algorithm>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace fiba::workload {
namespace {

using Rng = std::mt19937_64;

// Raw engine output reduced by modulo: unlike the standard distributions it
// yields the same stream with every standard library.
std::uint64_t below(Rng& rng, std::uint64_t k) { return rng() % k; }

std::int64_t random_value(Rng& rng) {
  return 1 + static_cast<std::int64_t>(below(rng, 1000000000));
}

TraceOp insert_op(Timestamp t, std::int64_t v) {
  return {OpType::insert, t, 0, v};
}
TraceOp evict_op(Timestamp t) { return {OpType::evict, t, 0, 0}; }
TraceOp query_op() { return {}; }
TraceOp range_op(Timestamp lo, Timestamp hi) {
  return {OpType::range_query, lo, hi, 0};
}

// Warm-up of the distance generators: d high timestamps above every low
// one the trace will ever use, then the first n - d lows in order.
void distance_warmup(Trace& trace, std::size_t n, std::size_t d,
                     std::size_t rounds, Rng& rng) {
  auto high_base = static_cast<Timestamp>(n + rounds);
  for (std::size_t j = 0; j < d; ++j)
    trace.ops.push_back(
        insert_op(high_base + static_cast<Timestamp>(j), random_value(rng)));
  for (std::size_t j = 0; j < n - d; ++j)
    trace.ops.push_back(
        insert_op(static_cast<Timestamp>(j), random_value(rng)));
  trace.warmup = trace.ops.size();
}

}  // namespace

Trace adversarial_distance(std::size_t n, std::size_t d, std::size_t rounds,
                           std::uint64_t seed) {
  if (d > n) throw std::invalid_argument("distance d exceeds window size n");
  Rng rng(seed);
  Trace trace;
  trace.ops.reserve(n + 3 * rounds);
  distance_warmup(trace, n, d, rounds, rng);
  trace.ops_per_round = 3;
  for (std::size_t k = 0; k < rounds; ++k) {
    // With d = n there are no lows in the window: the new low is both the
    // out-of-order insert and the oldest entry.
    trace.ops.push_back(
        insert_op(static_cast<Timestamp>(n - d + k), random_value(rng)));
    trace.ops.push_back(evict_op(static_cast<Timestamp>(k)));
    trace.ops.push_back(query_op());
  }
  return trace;
}

Trace fifo(std::size_t n, std::size_t rounds, std::uint64_t seed) {
  return adversarial_distance(n, 0, rounds, seed);
}

Trace lifo(std::size_t n, std::size_t rounds, std::uint64_t seed) {
  return adversarial_distance(n, n, rounds, seed);
}

Trace sharing(std::size_t n_big, std::size_t n_small, std::size_t rounds,
              std::uint64_t seed) {
  if (n_small == 0 || n_small > n_big)
    throw std::invalid_argument("need 0 < n_small <= n_big");
  std::size_t d = n_small / 2;
  Rng rng(seed);
  Trace trace;
  trace.ops.reserve(n_big + 4 * rounds);
  distance_warmup(trace, n_big, d, rounds, rng);
  trace.ops_per_round = 4;
  for (std::size_t k = 0; k < rounds; ++k) {
    trace.ops.push_back(
        insert_op(static_cast<Timestamp>(n_big - d + k), random_value(rng)));
    trace.ops.push_back(evict_op(static_cast<Timestamp>(k)));
    trace.ops.push_back(query_op());
    // Youngest n_small entries: the d highs plus the newest n_small - d lows.
    trace.ops.push_back(range_op(static_cast<Timestamp>(n_big - n_small + k + 1),
                                 std::numeric_limits<Timestamp>::max()));
  }
  return trace;
}

Trace bounded_ooo_random(std::size_t n, std::size_t d, std::size_t rounds,
                         std::uint64_t seed) {
  if (d > n) throw std::invalid_argument("distance d exceeds window size n");
  Rng rng(seed);
  auto order = sample_bounded_ooo_permutation(n + rounds, d, rng());
  std::set<Timestamp> window;
  Trace trace;
  std::size_t i = 0;
  for (; i < n && i < order.size(); ++i) {
    trace.ops.push_back(insert_op(order[i], random_value(rng)));
    window.insert(order[i]);
  }
  trace.warmup = trace.ops.size();
  trace.ops_per_round = 3;
  for (; i < order.size(); ++i) {
    trace.ops.push_back(insert_op(order[i], random_value(rng)));
    window.insert(order[i]);
    trace.ops.push_back(evict_op(*window.begin()));
    window.erase(window.begin());
    trace.ops.push_back(query_op());
  }
  return trace;
}

Trace fuzz(const FuzzConfig& cfg) {
  Rng rng(cfg.seed);
  std::set<Timestamp> window;
  Timestamp young = 0;  // running upper end of the timestamps in use
  Trace trace;
  trace.ops.reserve(cfg.ops);
  std::size_t target = 0;

  auto random_present = [&] {
    auto it = window.begin();
    std::advance(it, static_cast<long>(below(rng, window.size())));
    return *it;
  };
  auto span_pick = [&](Timestamp lo, Timestamp hi) {
    return lo + static_cast<Timestamp>(
                    below(rng, static_cast<std::uint64_t>(hi - lo + 1)));
  };

  while (trace.ops.size() < cfg.ops) {
    if (trace.ops.size() % 500 == 0) {
      // Phases favour tiny windows as often as large ones: most of the
      // interesting shapes (root of arity 2, leaf roots) live there.
      switch (below(rng, 3)) {
        case 0: target = below(rng, 9); break;
        case 1: target = below(rng, 64); break;
        default: target = below(rng, cfg.max_window + 1); break;
      }
    }
    std::uint64_t roll = below(rng, 100);
    bool want_insert = window.size() < target ? roll < 60 : roll < 30;
    if (roll >= 80) {
      if (roll < 90) {
        trace.ops.push_back(query_op());
      } else {
        Timestamp lo = window.empty() ? 0 : *window.begin();
        Timestamp a = span_pick(lo - 3, young + 3);
        Timestamp b = span_pick(lo - 3, young + 3);
        if (below(rng, 8) != 0 && a > b) std::swap(a, b);
        trace.ops.push_back(range_op(a, b));
      }
      continue;
    }
    if (want_insert || window.empty()) {
      Timestamp t;
      switch (below(rng, 6)) {
        case 0:
        case 1: t = young + 1 + static_cast<Timestamp>(below(rng, 3)); break;
        case 2: t = young - static_cast<Timestamp>(below(rng, 8)); break;
        case 3: {
          Timestamp lo = window.empty() ? young - 10 : *window.begin() - 10;
          t = span_pick(lo, young + 10);
          break;
        }
        case 4: t = window.empty() ? young : random_present(); break;
        default:
          t = (window.empty() ? young : *window.begin()) - 1 -
              static_cast<Timestamp>(below(rng, 3));
          break;
      }
      young = std::max(young, t);
      window.insert(t);
      trace.ops.push_back(insert_op(t, random_value(rng)));
    } else {
      Timestamp t;
      switch (below(rng, 5)) {
        case 0: t = *window.begin(); break;
        case 1: t = *window.rbegin(); break;
        case 2:
        case 3: t = random_present(); break;
        default: t = young + 5 + static_cast<Timestamp>(below(rng, 5)); break;
      }
      window.erase(t);
      trace.ops.push_back(evict_op(t));
    }
  }
  return trace;
}

std::vector<Timestamp> sample_bounded_ooo_permutation(std::size_t m,
                                                      std::size_t d,
                                                      std::uint64_t seed) {
  if (d > m) throw std::invalid_argument("distance d exceeds length m");
  Rng rng(seed);
  // Build from the largest element down. Placing x at position p puts
  // exactly p larger elements before it and changes no other element's
  // count, so p ranges over min(size + 1, d + 1) choices.
  std::vector<Timestamp> perm;
  perm.reserve(m);
  for (std::size_t x = m; x >= 1; --x) {
    std::size_t choices = std::min(perm.size() + 1, d + 1);
    auto pos = static_cast<long>(below(rng, choices));
    perm.insert(perm.begin() + pos, static_cast<Timestamp>(x));
  }
  return perm;
}

boost::multiprecision::cpp_int count_bounded_ooo(std::size_t m,
                                                 std::size_t d) {
  if (d > m) throw std::invalid_argument("distance d exceeds length m");
  boost::multiprecision::cpp_int result = 1;
  for (std::size_t i = 2; i <= d; ++i) result *= i;
  for (std::size_t i = d; i < m; ++i) result *= d + 1;
  return result;
}

std::vector<std::size_t> out_of_order_distances(
    const std::vector<Timestamp>& perm) {
  // Fenwick tree over ranks counts earlier elements above each value.
  std::vector<Timestamp> sorted(perm);
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> tree(perm.size() + 1, 0);
  std::vector<std::size_t> result;
  result.reserve(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    auto rank = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), perm[i]) -
        sorted.begin()) + 1;
    std::size_t not_greater = 0;
    for (std::size_t k = rank; k > 0; k -= k & (~k + 1)) not_greater += tree[k];
    result.push_back(i - not_greater);
    for (std::size_t k = rank; k < tree.size(); k += k & (~k + 1)) ++tree[k];
  }
  return result;
}

void write_trace(std::ostream& out, const Trace& trace) {
  out << "# warmup " << trace.warmup << " round " << trace.ops_per_round
      << '\n';
  for (const auto& op : trace.ops) {
    switch (op.type) {
      case OpType::insert: out << "I " << op.t << ' ' << op.value; break;
      case OpType::evict: out << "E " << op.t; break;
      case OpType::query: out << 'Q'; break;
      case OpType::range_query: out << "R " << op.t << ' ' << op.t2; break;
    }
    out << '\n';
  }
}

Trace read_trace(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  bool have_layout = false;
  auto error = [&](const std::string& what) {
    return TraceParseError("trace line " + std::to_string(lineno) + ": " +
                           what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "#") {
      std::string w, r;
      std::size_t warmup = 0, per_round = 0;
      if (lineno == 1 && ls >> w >> warmup >> r >> per_round &&
          w == "warmup" && r == "round" && per_round > 0) {
        trace.warmup = warmup;
        trace.ops_per_round = per_round;
        have_layout = true;
      }
      continue;
    }
    TraceOp op;
    bool ok = true;
    if (tag == "I") {
      op.type = OpType::insert;
      ok = static_cast<bool>(ls >> op.t >> op.value);
    } else if (tag == "E") {
      op.type = OpType::evict;
      ok = static_cast<bool>(ls >> op.t);
    } else if (tag == "Q") {
      op.type = OpType::query;
    } else if (tag == "R") {
      op.type = OpType::range_query;
      ok = static_cast<bool>(ls >> op.t >> op.t2);
    } else {
      throw error("unknown operation '" + tag + "'");
    }
    if (!ok) throw error("malformed operands");
    std::string extra;
    if (ls >> extra) throw error("trailing input '" + extra + "'");
    trace.ops.push_back(op);
  }
  if (!have_layout) {
    trace.warmup = 0;
    trace.ops_per_round = 1;
  }
  if (trace.warmup > trace.ops.size())
    throw TraceParseError("trace layout: warm-up longer than the trace");
  return trace;
}

}  // namespace fiba::workload
