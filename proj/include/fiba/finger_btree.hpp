#pragma once

#include "fiba/aggregate_btree.hpp"

namespace fiba {

/// Finger B-tree aggregator: O(log d) amortized insert and evict, where d is
/// the distance to the nearer end of the window, and O(1) query.
template <Monoid M>
using FingerBTree = AggregateBTree<M, TreeKind::finger>;

}  // namespace fiba
