#pragma once

// B-tree keyed by timestamp with cached partial aggregates. One engine backs
// two flavors:
//
//   TreeKind::classic  every node caches the fold of its whole subtree
//                      (up-aggregate); searches and repairs go through the root.
//   TreeKind::finger   finger B-tree: searches start at the leftmost or
//                      rightmost leaf, and the cached aggregate of a node
//                      depends on where it sits:
//
//       non-spine node   up    = up(z0) v0 up(z1) ... v_{a-2} up(z_{a-1})
//       root             inner = v0 up(z1) v1 ... up(z_{a-2}) v_{a-2}
//       left spine       left  = v0 up(z1) ... v_{a-2} up(z_{a-1}) [parent.left]
//       right spine      right = [parent.right] up(z0) v0 ... up(z_{a-2}) v_{a-2}
//
//   (the bracketed parent term is dropped when the parent is the root). The
//   whole window is then leftFinger.agg (+) root.agg (+) rightFinger.agg.
//
// Rebalancing is after-the-fact: an insert may leave a node with 2m+1
// children and an evict one with m-1, which is then fixed by split, merge,
// move and height changes walking towards the root. Every operation records
// its restructuring steps and the potential (sum of per-node coins) before
// and after, see OpRecord.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fiba/swag.hpp"

namespace fiba {

enum class TreeKind : std::uint8_t { classic, finger };

/// Coins reserved by a node of arity `a` under min-arity `m`.
constexpr int coins(int a, int m, bool is_root) {
  if (a == 2 * m + 1) return 4;
  if (a == 2 * m) return 2;
  if (!is_root && a == m - 1) return 2;
  if (!is_root && a == m) return 1;
  return 0;
}

/// Grants tests write access to tree internals (corruption tests). Defined in
/// test code only.
template <typename Tree>
struct TreeTestAccess;

template <Monoid M, TreeKind Kind>
class AggregateBTree {
  struct Node;

 public:
  using Op = M;
  using Agg = typename M::Agg;
  static constexpr TreeKind kind = Kind;

  /// Read-only handle on a node, for inspection in tests and tools.
  class NodeView {
   public:
    NodeView() = default;
    NodeView(const Node* n, int level) : node_(n), level_(level) {}

    bool valid() const { return node_ != nullptr; }
    int level() const { return level_; }
    int arity() const { return node_->arity(); }
    bool is_leaf() const { return node_->leaf; }
    bool is_root() const { return node_->parent == nullptr; }
    bool left_spine() const { return node_->left_spine; }
    bool right_spine() const { return node_->right_spine; }
    const std::vector<Timestamp>& times() const { return node_->times; }
    const std::vector<Agg>& values() const { return node_->values; }
    const Agg& agg() const { return node_->agg; }
    NodeView parent() const { return {node_->parent, level_ + 1}; }
    NodeView child(int i) const {
      return {node_->children.at(static_cast<std::size_t>(i)).get(),
              level_ - 1};
    }

    friend bool operator==(const NodeView& a, const NodeView& b) {
      return a.node_ == b.node_;
    }

   private:
    friend class AggregateBTree;
    const Node* node_ = nullptr;
    int level_ = 0;
  };

  explicit AggregateBTree(int min_arity = 2, M op = M{})
      : op_(std::move(op)), min_arity_(min_arity), max_arity_(2 * min_arity) {
    if (min_arity < 2)
      throw std::invalid_argument("min arity must be at least 2");
    root_ = make_node(true);
    left_finger_ = right_finger_ = root_.get();
  }

  AggregateBTree(const AggregateBTree&) = delete;
  AggregateBTree& operator=(const AggregateBTree&) = delete;
  AggregateBTree(AggregateBTree&&) noexcept = default;
  AggregateBTree& operator=(AggregateBTree&&) noexcept = default;

  void insert(Timestamp t, const Agg& v) {
    begin(OpKind::insert);
    auto [node, level] = search(t);
    auto [idx, found] = local_search(*node, t);
    Repair r{node, level, node->left_spine, node->right_spine};
    if (found) {
      node->values[idx] = combine(node->values[idx], v);
      repair_if_up(*node);
    } else {
      node->times.insert(node->times.begin() + idx, t);
      node->values.insert(node->values.begin() + idx, v);
      ++size_;
      refresh_coins(*node);
      repair_if_up(*node);
      r = rebalance_for_insert(node, level);
    }
    repair_aggs(r);
    finish();
  }

  /// Returns whether t was present.
  bool evict(Timestamp t) {
    begin(OpKind::evict);
    auto [node, level] = search(t);
    auto [idx, found] = local_search(*node, t);
    if (!found) {
      finish();
      return false;
    }
    Repair r;
    if (node->leaf) {
      node->times.erase(node->times.begin() + idx);
      node->values.erase(node->values.begin() + idx);
      refresh_coins(*node);
      repair_if_up(*node);
      r = rebalance_for_evict(node, level);
    } else {
      r = evict_inner(node, level, idx);
    }
    --size_;
    repair_aggs(r);
    finish();
    return true;
  }

  Agg query() const {
    begin(OpKind::query);
    Agg result = [&] {
      if (Kind == TreeKind::classic || root_->leaf) return root_->agg;
      return combine(left_finger_->agg,
                     combine(root_->agg, right_finger_->agg));
    }();
    finish();
    return result;
  }

  /// Fold of the entries with from <= t <= to; identity if there are none.
  Agg range_query(Timestamp from, Timestamp to) const {
    begin(OpKind::range_query);
    Agg result = op_.identity();
    if (from <= to && size_ > 0) {
      if constexpr (Kind == TreeKind::finger) {
        auto a = search(from);
        auto b = search(to);
        const Node* top = lca(a, b).first;
        result = query_rec(*top, from, to);
      } else {
        result = query_rec(*root_, from, to);
      }
    }
    finish();
    return result;
  }

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  int min_arity() const { return min_arity_; }
  int max_arity() const { return max_arity_; }
  /// Levels above the leaves; a lone leaf root has height 0.
  int height() const { return height_; }

  Timestamp oldest() const {
    if (size_ == 0) throw std::out_of_range("oldest() on an empty window");
    const Node* n = root_.get();
    while (!n->leaf) n = n->children.front().get();
    return n->times.front();
  }
  Timestamp youngest() const {
    if (size_ == 0) throw std::out_of_range("youngest() on an empty window");
    const Node* n = root_.get();
    while (!n->leaf) n = n->children.back().get();
    return n->times.back();
  }

  const OpRecord& last_op() const { return last_; }
  const OpCounters& totals() const { return totals_; }

  /// Incrementally maintained sum of coins over all nodes.
  std::int64_t potential() const { return phi_; }
  std::int64_t recompute_potential() const { return potential_rec(*root_); }

  NodeView root() const { return {root_.get(), height_}; }
  NodeView left_finger() const { return {left_finger_, 0}; }
  NodeView right_finger() const { return {right_finger_, 0}; }

  /// Node holding key t, or the leaf where t would be inserted. Counts its
  /// visits into last_op() without starting a new record.
  NodeView search_node(Timestamp t) const {
    auto [n, level] = search(t);
    return {n, level};
  }
  NodeView least_common_ancestor(NodeView a, NodeView b) const {
    // lca only reads through these pointers.
    auto [n, level] = lca({const_cast<Node*>(a.node_), a.level_},
                          {const_cast<Node*>(b.node_), b.level_});
    return {n, level};
  }

  /// Walks the whole tree; throws InvariantViolation naming the first
  /// offending node path ("root/2/0" is child 0 of child 2 of the root).
  void check_invariants() const {
    Path path;
    if (root_->parent != nullptr) fail(path, "root has a parent");
    std::size_t count = 0;
    int leaf_depth = -1;
    check_structure(*root_, path, 0, std::nullopt, std::nullopt, count,
                    leaf_depth);
    if (count != size_) fail(path, "size counter disagrees with key count");
    if (leaf_depth != height_) fail(path, "height counter is stale");
    if constexpr (Kind == TreeKind::finger) {
      const Node* n = root_.get();
      while (!n->leaf) n = n->children.front().get();
      if (n != left_finger_) fail(path, "left finger is not leftmost leaf");
      n = root_.get();
      while (!n->leaf) n = n->children.back().get();
      if (n != right_finger_) fail(path, "right finger is not rightmost leaf");
    }
    std::vector<Scratch> table;
    table.reserve(64);
    scratch_fold(*root_, table);
    check_aggs(*root_, 0, table, path, nullptr);
    if (recompute_potential() != phi_)
      fail(path, "tracked potential differs from recount");
  }

 private:
  template <typename>
  friend struct TreeTestAccess;

  struct Node {
    std::vector<Timestamp> times;
    std::vector<Agg> values;
    std::vector<std::unique_ptr<Node>> children;  // empty at leaves
    Node* parent = nullptr;
    Agg agg;
    bool leaf = true;
    bool left_spine = false;
    bool right_spine = false;
    int coins = 0;

    int arity() const { return static_cast<int>(times.size()) + 1; }
    int keys() const { return static_cast<int>(times.size()); }
    bool is_root() const { return parent == nullptr; }
  };

  using Located = std::pair<Node*, int>;  // node and its level

  // Outcome of a rebalance: where aggregate repair must start, and whether the
  // touched nodes reach either spine.
  struct Repair {
    Node* top = nullptr;
    int level = 0;
    bool hit_left = false;
    bool hit_right = false;
    bool height_decreased = false;
  };

  // Left-to-right fold that skips the identity, so that folds never spend a
  // combine on an empty side.
  class Fold {
   public:
    explicit Fold(const AggregateBTree& tree) : tree_(tree) {}
    void push_back(const Agg& x) {
      acc_ = acc_ ? tree_.combine(*acc_, x) : x;
    }
    void push_front(const Agg& x) {
      acc_ = acc_ ? tree_.combine(x, *acc_) : x;
    }
    Agg get() && { return acc_ ? std::move(*acc_) : tree_.op_.identity(); }

   private:
    const AggregateBTree& tree_;
    std::optional<Agg> acc_;
  };

  // ---- instrumentation ---------------------------------------------------

  Agg combine(const Agg& a, const Agg& b) const {
    ++last_.counters.combines;
    return op_.combine(a, b);
  }
  void visit() const { ++last_.counters.nodes_visited; }
  void step(StepKind s) {
    last_.steps.push_back(s);
    auto& c = last_.counters;
    switch (s) {
      case StepKind::split: ++c.splits; break;
      case StepKind::merge: ++c.merges; break;
      case StepKind::move: ++c.moves; break;
      case StepKind::height_increase: ++c.height_increases; break;
      case StepKind::height_decrease: ++c.height_decreases; break;
    }
  }
  void begin(OpKind kind) const {
    last_.kind = kind;
    last_.counters = {};
    last_.steps.clear();
    last_.phi_before = phi_;
  }
  void finish() const {
    last_.phi_after = phi_;
    totals_ += last_.counters;
  }

  // ---- node bookkeeping --------------------------------------------------

  std::unique_ptr<Node> make_node(bool leaf) const {
    auto n = std::make_unique<Node>();
    n->leaf = leaf;
    n->agg = op_.identity();
    auto cap = static_cast<std::size_t>(max_arity_ + 1);
    n->times.reserve(cap);
    n->values.reserve(cap);
    if (!leaf) n->children.reserve(cap + 1);
    return n;
  }

  void refresh_coins(Node& n) {
    int c = coins(n.arity(), min_arity_, n.is_root());
    phi_ += c - n.coins;
    n.coins = c;
  }
  void retire(Node& n) { phi_ -= n.coins; n.coins = 0; }

  bool has_agg_up(const Node& n) const {
    if constexpr (Kind == TreeKind::classic) return true;
    return !(n.is_root() || n.left_spine || n.right_spine);
  }

  void adopt(Node& parent, std::size_t from) {
    for (std::size_t i = from; i < parent.children.size(); ++i)
      parent.children[i]->parent = &parent;
  }

  // Spine flags of all children from the parent's position. Extreme children
  // inherit the parent's spine; the children of the root start both spines.
  void refresh_child_flags(Node& p) {
    if constexpr (Kind == TreeKind::finger) {
      if (p.leaf) return;
      bool left = p.is_root() || p.left_spine;
      bool right = p.is_root() || p.right_spine;
      std::size_t last = p.children.size() - 1;
      for (std::size_t i = 0; i <= last; ++i) {
        p.children[i]->left_spine = left && i == 0;
        p.children[i]->right_spine = right && i == last;
      }
    }
  }

  static int child_index(const Node& n) {
    const auto& siblings = n.parent->children;
    for (std::size_t i = 0; i < siblings.size(); ++i)
      if (siblings[i].get() == &n) return static_cast<int>(i);
    throw std::logic_error("node missing from its parent");
  }

  static std::pair<int, bool> local_search(const Node& n, Timestamp t) {
    auto it = std::lower_bound(n.times.begin(), n.times.end(), t);
    int idx = static_cast<int>(it - n.times.begin());
    return {idx, it != n.times.end() && *it == t};
  }

  // ---- aggregates --------------------------------------------------------

  Agg agg_inner(const Node& n) const {
    Fold f(*this);
    for (int i = 0; i < n.keys(); ++i) {
      if (!n.leaf && i > 0) f.push_back(n.children[i]->agg);
      f.push_back(n.values[i]);
    }
    return std::move(f).get();
  }

  Agg agg_up(const Node& n) const {
    if (n.leaf) return agg_inner(n);
    Fold f(*this);
    f.push_back(n.children[0]->agg);
    for (int i = 0; i < n.keys(); ++i) {
      f.push_back(n.values[i]);
      f.push_back(n.children[i + 1]->agg);
    }
    return std::move(f).get();
  }

  Agg agg_for_position(const Node& n) const {
    if constexpr (Kind == TreeKind::finger) {
      if (n.is_root() || (n.left_spine && n.right_spine)) return agg_inner(n);
      if (n.left_spine) {
        Fold f(*this);
        f.push_back(agg_inner(n));
        if (!n.leaf) f.push_back(n.children.back()->agg);
        if (!n.parent->is_root()) f.push_back(n.parent->agg);
        return std::move(f).get();
      }
      if (n.right_spine) {
        Fold f(*this);
        f.push_back(agg_inner(n));
        if (!n.leaf) f.push_front(n.children.front()->agg);
        if (!n.parent->is_root()) f.push_front(n.parent->agg);
        return std::move(f).get();
      }
    }
    return agg_up(n);
  }

  void local_repair_agg(Node& n) {
    visit();
    n.agg = agg_for_position(n);
  }
  void repair_if_up(Node& n) {
    if (has_agg_up(n)) local_repair_agg(n);
  }

  // Climbs through up-aggregates, then rewrites the spines below the first
  // node that caches a positional aggregate.
  void repair_aggs(const Repair& r) {
    Node* top = r.top;
    if constexpr (Kind == TreeKind::classic) {
      for (top = top->parent; top != nullptr; top = top->parent)
        local_repair_agg(*top);
    } else {
      if (!has_agg_up(*top)) {
        local_repair_agg(*top);
      } else {
        while (has_agg_up(*top)) {
          top = top->parent;
          local_repair_agg(*top);
        }
      }
      if (top->left_spine || (top->is_root() && r.hit_left)) {
        for (Node* n = top; !n->leaf;) {
          n = n->children.front().get();
          local_repair_agg(*n);
        }
      }
      if (top->right_spine || (top->is_root() && r.hit_right)) {
        for (Node* n = top; !n->leaf;) {
          n = n->children.back().get();
          local_repair_agg(*n);
        }
      }
    }
  }

  // ---- search ------------------------------------------------------------

  Located search(Timestamp t) const {
    Node* n = root_.get();
    int level = height_;
    if (Kind == TreeKind::finger && !n->leaf) {
      if (t < n->times.front()) {
        n = left_finger_;
        level = 0;
        while (!n->is_root() && n->times.back() < t) {
          visit();
          n = n->parent;
          ++level;
        }
      } else if (n->times.back() < t) {
        n = right_finger_;
        level = 0;
        while (!n->is_root() && t < n->times.front()) {
          visit();
          n = n->parent;
          ++level;
        }
      }
    }
    visit();
    while (!n->leaf) {
      auto [idx, found] = local_search(*n, t);
      if (found) break;
      n = n->children[static_cast<std::size_t>(idx)].get();
      --level;
      visit();
    }
    return {n, level};
  }

  Located lca(Located a, Located b) const {
    while (a.second < b.second) {
      a = {a.first->parent, a.second + 1};
      visit();
    }
    while (b.second < a.second) {
      b = {b.first->parent, b.second + 1};
      visit();
    }
    while (a.first != b.first) {
      a = {a.first->parent, a.second + 1};
      b = {b.first->parent, b.second + 1};
      visit();
    }
    return a;
  }

  // ---- restructuring -----------------------------------------------------

  void height_increase() {
    step(StepKind::height_increase);
    auto old_root = std::move(root_);
    root_ = make_node(false);
    old_root->parent = root_.get();
    root_->children.push_back(std::move(old_root));
    ++height_;
    refresh_child_flags(*root_);
    refresh_coins(*root_->children.front());
    refresh_coins(*root_);
  }

  void height_decrease() {
    step(StepKind::height_decrease);
    auto child = std::move(root_->children.front());
    retire(*root_);
    child->parent = nullptr;
    child->left_spine = child->right_spine = false;
    root_ = std::move(child);
    --height_;
    refresh_child_flags(*root_);
    refresh_coins(*root_);
    local_repair_agg(*root_);
  }

  // Node with 2m+1 children: key m moves up, keys after it go to a new right
  // sibling. Left ends with arity m+1, right with arity m.
  void split(Node& left) {
    step(StepKind::split);
    Node& parent = *left.parent;
    auto m = static_cast<std::size_t>(min_arity_);
    auto right = make_node(left.leaf);
    right->parent = &parent;
    Timestamp mid_time = left.times[m];
    Agg mid_value = std::move(left.values[m]);
    right->times.assign(left.times.begin() + m + 1, left.times.end());
    for (auto it = left.values.begin() + m + 1; it != left.values.end(); ++it)
      right->values.push_back(std::move(*it));
    left.times.resize(m);
    left.values.erase(left.values.begin() + m, left.values.end());
    if (!left.leaf) {
      for (auto it = left.children.begin() + m + 1; it != left.children.end();
           ++it)
        right->children.push_back(std::move(*it));
      left.children.resize(m + 1);
      adopt(*right, 0);
    }
    if (right_finger_ == &left) right_finger_ = right.get();

    auto idx = static_cast<std::size_t>(child_index(left));
    parent.times.insert(parent.times.begin() + idx, mid_time);
    parent.values.insert(parent.values.begin() + idx, std::move(mid_value));
    Node& r = *right;
    parent.children.insert(parent.children.begin() + idx + 1, std::move(right));

    refresh_child_flags(parent);
    refresh_child_flags(left);
    refresh_child_flags(r);
    refresh_coins(left);
    refresh_coins(r);
    refresh_coins(parent);
    repair_if_up(left);
    repair_if_up(r);
    repair_if_up(parent);
  }

  // Children left_idx and left_idx+1 of parent become one node, with the
  // separator between them pulled down.
  Node& merge(Node& parent, std::size_t left_idx) {
    step(StepKind::merge);
    Node& left = *parent.children[left_idx];
    std::unique_ptr<Node> right = std::move(parent.children[left_idx + 1]);
    left.times.push_back(parent.times[left_idx]);
    left.values.push_back(std::move(parent.values[left_idx]));
    left.times.insert(left.times.end(), right->times.begin(),
                      right->times.end());
    for (auto& v : right->values) left.values.push_back(std::move(v));
    if (!left.leaf) {
      std::size_t from = left.children.size();
      for (auto& c : right->children) left.children.push_back(std::move(c));
      adopt(left, from);
    }
    if (right_finger_ == right.get()) right_finger_ = &left;
    retire(*right);
    right.reset();

    parent.times.erase(parent.times.begin() + left_idx);
    parent.values.erase(parent.values.begin() + left_idx);
    parent.children.erase(parent.children.begin() + left_idx + 1);

    refresh_child_flags(parent);
    refresh_child_flags(left);
    refresh_coins(left);
    refresh_coins(parent);
    repair_if_up(left);
    repair_if_up(parent);
    return left;
  }

  // One key (and one child) rotates from giver through the parent into
  // recipient.
  void move(Node& parent, std::size_t recipient_idx, std::size_t giver_idx) {
    step(StepKind::move);
    Node& recipient = *parent.children[recipient_idx];
    Node& giver = *parent.children[giver_idx];
    if (recipient_idx < giver_idx) {
      std::size_t sep = recipient_idx;
      recipient.times.push_back(parent.times[sep]);
      recipient.values.push_back(std::move(parent.values[sep]));
      parent.times[sep] = giver.times.front();
      parent.values[sep] = std::move(giver.values.front());
      giver.times.erase(giver.times.begin());
      giver.values.erase(giver.values.begin());
      if (!recipient.leaf) {
        recipient.children.push_back(std::move(giver.children.front()));
        giver.children.erase(giver.children.begin());
        recipient.children.back()->parent = &recipient;
      }
    } else {
      std::size_t sep = giver_idx;
      recipient.times.insert(recipient.times.begin(), parent.times[sep]);
      recipient.values.insert(recipient.values.begin(),
                              std::move(parent.values[sep]));
      parent.times[sep] = giver.times.back();
      parent.values[sep] = std::move(giver.values.back());
      giver.times.pop_back();
      giver.values.pop_back();
      if (!recipient.leaf) {
        recipient.children.insert(recipient.children.begin(),
                                  std::move(giver.children.back()));
        giver.children.pop_back();
        recipient.children.front()->parent = &recipient;
      }
    }
    refresh_child_flags(recipient);
    refresh_child_flags(giver);
    refresh_coins(recipient);
    refresh_coins(giver);
    repair_if_up(recipient);
    repair_if_up(giver);
    repair_if_up(parent);
  }

  Repair rebalance_for_insert(Node* node, int level) {
    Repair r{node, level, node->left_spine, node->right_spine};
    while (node->arity() > max_arity_) {
      if (node->is_root()) {
        height_increase();
        r.hit_left = r.hit_right = true;
      }
      split(*node);
      node = node->parent;
      ++level;
      r.hit_left |= node->left_spine;
      r.hit_right |= node->right_spine;
    }
    r.top = node;
    r.level = level;
    return r;
  }

  Repair rebalance_for_evict(Node* node, int level) {
    Repair r{node, level, node->left_spine, node->right_spine};
    while (!node->is_root() && node->arity() < min_arity_) {
      Node& parent = *node->parent;
      auto idx = static_cast<std::size_t>(child_index(*node));
      std::size_t sib =
          idx + 1 == parent.children.size() ? idx - 1 : idx + 1;
      const Node& sibling = *parent.children[sib];
      // Either neighbor may sit on a spine whose aggregates this step
      // invalidates.
      r.hit_left |= sibling.left_spine;
      r.hit_right |= sibling.right_spine;
      if (sibling.arity() <= min_arity_) {
        merge(parent, std::min(idx, sib));
        if (parent.is_root() && parent.arity() == 1) {
          height_decrease();
          r.height_decreased = true;
          node = root_.get();
        } else {
          node = &parent;
          ++level;
        }
      } else {
        move(parent, idx, sib);
        node = &parent;
        ++level;
      }
      r.hit_left |= node->left_spine;
      r.hit_right |= node->right_spine;
    }
    r.top = node;
    r.level = node->is_root() ? height_ : level;
    return r;
  }

  // Key idx of an inner node is overwritten by its in-order neighbor taken
  // from a leaf, and the leaf is rebalanced instead.
  Repair evict_inner(Node* node, int node_level, int idx) {
    auto i = static_cast<std::size_t>(idx);
    Node* right = node->children[i + 1].get();
    Node* leaf;
    if (right->arity() > min_arity_) {
      leaf = right;
      visit();
      while (!leaf->leaf) {
        leaf = leaf->children.front().get();
        visit();
      }
      node->times[i] = leaf->times.front();
      node->values[i] = std::move(leaf->values.front());
      leaf->times.erase(leaf->times.begin());
      leaf->values.erase(leaf->values.begin());
    } else {
      leaf = node->children[i].get();
      visit();
      while (!leaf->leaf) {
        leaf = leaf->children.back().get();
        visit();
      }
      node->times[i] = leaf->times.back();
      node->values[i] = std::move(leaf->values.back());
      leaf->times.pop_back();
      leaf->values.pop_back();
    }
    refresh_coins(*leaf);
    repair_if_up(*leaf);
    Repair r = rebalance_for_evict(leaf, 0);
    // Rebalancing stopped below the node whose key changed: the path up to it
    // still needs repair. (Stopping at or above it means it was repaired, or
    // merged away, along the way.)
    if (!r.height_decreased && r.level < node_level) {
      while (r.top != node) {
        r.top = r.top->parent;
        ++r.level;
        r.hit_left |= r.top->left_spine;
        r.hit_right |= r.top->right_spine;
        repair_if_up(*r.top);
      }
    }
    return r;
  }

  // ---- range query -------------------------------------------------------

  // nullopt bounds stand for -inf / +inf: the subtree is known to lie inside
  // the range on that side.
  Agg query_rec(const Node& n, std::optional<Timestamp> lo,
                std::optional<Timestamp> hi) const {
    visit();
    if (!lo && !hi && has_agg_up(n)) return n.agg;
    auto inside_lo = [&](Timestamp t) { return !lo || *lo <= t; };
    auto inside_hi = [&](Timestamp t) { return !hi || t <= *hi; };
    Fold f(*this);
    int k = n.keys();
    if (!n.leaf && k > 0) {
      Timestamp next = n.times[0];
      if (!lo || *lo < next)
        f.push_back(query_rec(*n.children[0], lo,
                              inside_hi(next) ? std::nullopt : hi));
    }
    for (int i = 0; i < k; ++i) {
      Timestamp cur = n.times[i];
      if (inside_lo(cur) && inside_hi(cur)) f.push_back(n.values[i]);
      if (!n.leaf && i + 1 < k) {
        Timestamp next = n.times[i + 1];
        if ((!hi || cur < *hi) && (!lo || *lo < next))
          f.push_back(query_rec(*n.children[i + 1],
                                inside_lo(cur) ? std::nullopt : lo,
                                inside_hi(next) ? std::nullopt : hi));
      }
    }
    if (!n.leaf && k > 0) {
      Timestamp cur = n.times[k - 1];
      if (!hi || cur < *hi)
        f.push_back(query_rec(*n.children[k],
                              inside_lo(cur) ? std::nullopt : lo, hi));
    }
    return std::move(f).get();
  }

  // ---- verification ------------------------------------------------------

  using Path = std::vector<int>;

  [[noreturn]] static void fail(const Path& path, const std::string& what) {
    std::ostringstream os;
    os << "root";
    for (int i : path) os << '/' << i;
    os << ": " << what;
    throw InvariantViolation(os.str());
  }

  std::int64_t potential_rec(const Node& n) const {
    std::int64_t sum = coins(n.arity(), min_arity_, n.is_root());
    for (const auto& c : n.children) sum += potential_rec(*c);
    return sum;
  }

  void check_structure(const Node& n, Path& path, int depth,
                       std::optional<Timestamp> lo,
                       std::optional<Timestamp> hi, std::size_t& count,
                       int& leaf_depth) const {
    int a = n.arity();
    if (n.values.size() != n.times.size())
      fail(path, "times and values differ in length");
    if (n.is_root()) {
      if (!n.leaf && a < 2) fail(path, "inner root has arity below 2");
    } else if (a < min_arity_) {
      fail(path, "arity below minimum");
    }
    if (a > max_arity_) fail(path, "arity above maximum");
    for (int i = 0; i < n.keys(); ++i) {
      Timestamp t = n.times[i];
      if (i > 0 && n.times[i - 1] >= t) fail(path, "keys not ascending");
      if ((lo && t <= *lo) || (hi && t >= *hi))
        fail(path, "key outside separator interval");
    }
    if (n.coins != coins(a, min_arity_, n.is_root()))
      fail(path, "cached coin count is stale");
    if constexpr (Kind == TreeKind::finger) {
      bool left = false, right = false;
      if (!n.is_root()) {
        const Node& p = *n.parent;
        int idx = child_index(n);
        left = (p.is_root() || p.left_spine) && idx == 0;
        right = (p.is_root() || p.right_spine) && idx + 1 == p.arity();
      }
      if (n.left_spine != left) fail(path, "left spine flag is wrong");
      if (n.right_spine != right) fail(path, "right spine flag is wrong");
    }
    count += n.times.size();
    if (n.leaf) {
      if (!n.children.empty()) fail(path, "leaf has children");
      if (leaf_depth < 0) leaf_depth = depth;
      if (leaf_depth != depth) fail(path, "leaves at different depths");
      return;
    }
    if (static_cast<int>(n.children.size()) != a)
      fail(path, "child count differs from arity");
    for (int i = 0; i < a; ++i) {
      const Node& c = *n.children[i];
      path.push_back(i);
      if (c.parent != &n) fail(path, "parent link is wrong");
      auto clo = i == 0 ? lo : std::optional<Timestamp>(n.times[i - 1]);
      auto chi = i == n.keys() ? hi : std::optional<Timestamp>(n.times[i]);
      check_structure(c, path, depth + 1, clo, chi, count, leaf_depth);
      path.pop_back();
    }
  }

  // From-scratch subtree folds, ignoring every cached aggregate. Stored in
  // pre-order, so a node's entry is followed by those of its subtree.
  struct Scratch {
    Agg up;
    std::vector<std::size_t> children;  // indices into the scratch table
  };

  std::size_t scratch_fold(const Node& n, std::vector<Scratch>& table) const {
    std::size_t self = table.size();
    table.push_back({op_.identity(), {}});
    std::vector<std::size_t> kids;
    for (const auto& c : n.children) kids.push_back(scratch_fold(*c, table));
    Agg acc = n.leaf ? op_.identity() : table[kids[0]].up;
    for (int i = 0; i < n.keys(); ++i) {
      acc = op_.combine(acc, n.values[i]);
      if (!n.leaf) acc = op_.combine(acc, table[kids[i + 1]].up);
    }
    table[self].up = std::move(acc);
    table[self].children = std::move(kids);
    return self;
  }

  // Positional aggregate of every node recomputed top down;
  // `parent_expected` is the verified aggregate of the parent.
  void check_aggs(const Node& n, std::size_t self,
                  const std::vector<Scratch>& table, Path& path,
                  const Agg* parent_expected) const {
    const auto& kids = table[self].children;
    auto inner = [&] {
      Agg acc = op_.identity();
      for (int i = 0; i < n.keys(); ++i) {
        if (!n.leaf && i > 0) acc = op_.combine(acc, table[kids[i]].up);
        acc = op_.combine(acc, n.values[i]);
      }
      return acc;
    };
    bool parent_term = !n.is_root() && !n.parent->is_root();
    Agg expected = op_.identity();
    if (Kind == TreeKind::classic || has_agg_up(n)) {
      expected = table[self].up;
    } else if (n.is_root() || (n.left_spine && n.right_spine)) {
      expected = inner();
    } else if (n.left_spine) {
      expected = inner();
      if (!n.leaf) expected = op_.combine(expected, table[kids.back()].up);
      if (parent_term) expected = op_.combine(expected, *parent_expected);
    } else {
      expected = inner();
      if (!n.leaf) expected = op_.combine(table[kids.front()].up, expected);
      if (parent_term) expected = op_.combine(*parent_expected, expected);
    }
    if (!aggregates_match(op_, n.agg, expected))
      fail(path, "cached aggregate disagrees with recomputation");
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      path.push_back(static_cast<int>(i));
      check_aggs(*n.children[i], kids[i], table, path, &expected);
      path.pop_back();
    }
  }

  M op_;
  int min_arity_;
  int max_arity_;
  std::unique_ptr<Node> root_;
  Node* left_finger_ = nullptr;
  Node* right_finger_ = nullptr;
  std::size_t size_ = 0;
  int height_ = 0;
  std::int64_t phi_ = 0;
  mutable OpRecord last_;
  mutable OpCounters totals_;
};

}  // namespace fiba
