#pragma once

// Two-stacks aggregator for in-order (FIFO) windows: amortized O(1) per
// operation, worst case O(n) on a flip.
//
// The front stack holds the older part of the window with its oldest entry on
// top, and each front entry caches the fold from itself down to the bottom
// of the stack. The back stack holds the younger part in arrival order and
// only its running total is kept. When an evict finds the front empty, the
// back stack is flipped onto the front.

#include <stdexcept>
#include <utility>
#include <vector>

#include "fiba/swag.hpp"

namespace fiba {

template <Monoid M>
class TwoStacks {
 public:
  using Op = M;
  using Agg = typename M::Agg;

  explicit TwoStacks(M op = M{})
      : op_(std::move(op)), back_sum_(op_.identity()) {}

  /// Timestamps must be strictly increasing.
  void insert(Timestamp t, const Agg& v) {
    begin(OpKind::insert);
    if (size() > 0 && t <= youngest())
      throw OrderingViolation("two-stacks insert is not in order");
    back_sum_ = combine(back_sum_, v);
    back_.push_back({t, v});
    visit();
  }

  /// Only the oldest timestamp may be evicted. Timestamps older than the
  /// oldest are absent, so evicting them does nothing.
  bool evict(Timestamp t) {
    begin(OpKind::evict);
    if (size() == 0 || t < oldest()) return false;
    if (t != oldest())
      throw OrderingViolation("two-stacks evict is not of the oldest entry");
    if (front_.empty()) flip();
    front_.pop_back();
    visit();
    return true;
  }

  Agg query() const {
    begin(OpKind::query);
    if (front_.empty()) return back_sum_;
    if (back_.empty()) return front_.back().suffix;
    return combine(front_.back().suffix, back_sum_);
  }

  /// Linear scan; two-stacks has no structure to accelerate subranges.
  Agg range_query(Timestamp from, Timestamp to) const {
    begin(OpKind::range_query);
    Agg result = op_.identity();
    if (from > to) return result;
    for (auto it = front_.rbegin(); it != front_.rend(); ++it) {
      visit();
      if (from <= it->time && it->time <= to)
        result = combine(result, it->value);
    }
    for (const auto& e : back_) {
      visit();
      if (from <= e.time && e.time <= to) result = combine(result, e.value);
    }
    return result;
  }

  std::size_t size() const { return front_.size() + back_.size(); }

  /// Throw std::out_of_range on an empty window.
  Timestamp oldest() const {
    if (size() == 0) throw std::out_of_range("oldest() of an empty window");
    return front_.empty() ? back_.front().time : front_.back().time;
  }
  Timestamp youngest() const {
    if (size() == 0) throw std::out_of_range("youngest() of an empty window");
    return back_.empty() ? front_.front().time : back_.back().time;
  }

  const OpRecord& last_op() const { return last_; }
  const OpCounters& totals() const { return totals_; }

 private:
  struct BackEntry {
    Timestamp time;
    Agg value;
  };
  struct FrontEntry {
    Timestamp time;
    Agg value;
    Agg suffix;  // value (+) every younger front entry
  };

  void flip() {
    while (!back_.empty()) {
      BackEntry e = std::move(back_.back());
      back_.pop_back();
      Agg suffix =
          front_.empty() ? e.value : combine(e.value, front_.back().suffix);
      front_.push_back({e.time, std::move(e.value), std::move(suffix)});
      visit();
    }
    back_sum_ = op_.identity();
  }

  Agg combine(const Agg& a, const Agg& b) const {
    ++last_.counters.combines;
    ++totals_.combines;
    return op_.combine(a, b);
  }
  void visit() const {
    ++last_.counters.nodes_visited;
    ++totals_.nodes_visited;
  }
  void begin(OpKind kind) const {
    last_.kind = kind;
    last_.counters = {};
  }

  M op_;
  std::vector<FrontEntry> front_;
  std::vector<BackEntry> back_;
  Agg back_sum_;
  mutable OpRecord last_;
  mutable OpCounters totals_;
};

}  // namespace fiba
