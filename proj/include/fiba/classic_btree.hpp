#pragma once

#include "fiba/aggregate_btree.hpp"

namespace fiba {

/// Augmented B-tree: every node caches its subtree aggregate and all work
/// goes through the root, O(log n) per insert or evict.
template <Monoid M>
using ClassicBTree = AggregateBTree<M, TreeKind::classic>;

}  // namespace fiba
