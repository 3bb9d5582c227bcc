#pragma once

// Brute-force reference aggregator: a flat sorted array, O(n) per operation.
// Everything else in the library is tested for equality against it.

#include <algorithm>
#include <utility>
#include <vector>

#include "fiba/swag.hpp"

namespace fiba {

template <Monoid M>
class BruteForceOracle {
 public:
  using Op = M;
  using Agg = typename M::Agg;
  using Entry = TimedValue<Agg>;

  explicit BruteForceOracle(M op = M{}) : op_(std::move(op)) {}

  void insert(Timestamp t, const Agg& v) {
    begin(OpKind::insert);
    auto it = find(t);
    if (it != entries_.end() && it->time == t) {
      it->value = combine(it->value, v);
    } else {
      entries_.insert(it, Entry{t, v});
    }
  }

  bool evict(Timestamp t) {
    begin(OpKind::evict);
    auto it = find(t);
    if (it == entries_.end() || it->time != t) return false;
    entries_.erase(it);
    return true;
  }

  Agg query() const {
    begin(OpKind::query);
    Agg result = op_.identity();
    for (const auto& e : entries_) result = combine(result, e.value);
    return result;
  }

  /// A reversed range (from > to) is empty and yields the identity.
  Agg range_query(Timestamp from, Timestamp to) const {
    begin(OpKind::range_query);
    Agg result = op_.identity();
    if (from > to) return result;
    auto first = find(from);
    for (auto it = first; it != entries_.end() && it->time <= to; ++it)
      result = combine(result, it->value);
    return result;
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  const M& op() const { return op_; }

  const OpRecord& last_op() const { return last_; }
  const OpCounters& totals() const { return totals_; }

 private:
  typename std::vector<Entry>::iterator find(Timestamp t) {
    return std::lower_bound(
        entries_.begin(), entries_.end(), t,
        [](const Entry& e, Timestamp key) { return e.time < key; });
  }
  typename std::vector<Entry>::const_iterator find(Timestamp t) const {
    return std::lower_bound(
        entries_.begin(), entries_.end(), t,
        [](const Entry& e, Timestamp key) { return e.time < key; });
  }

  Agg combine(const Agg& a, const Agg& b) const {
    ++last_.counters.combines;
    ++totals_.combines;
    return op_.combine(a, b);
  }

  void begin(OpKind kind) const {
    last_.kind = kind;
    last_.counters = {};
  }

  M op_;
  std::vector<Entry> entries_;
  mutable OpRecord last_;
  mutable OpCounters totals_;
};

}  // namespace fiba
