#pragma once

// Sorting through an aggregator: insert every element keyed by itself under
// the `first` operator, then repeatedly query the oldest value and evict it.
// Works on any engine that accepts the insertion order, so a sorted result
// is a cheap end-to-end correctness check.

#include <stdexcept>
#include <vector>

#include "fiba/monoid.hpp"
#include "fiba/swag.hpp"

namespace fiba {

template <typename Engine>
  requires OooSwag<Engine> && std::same_as<typename Engine::Op, FirstOp>
std::vector<Timestamp> sort_via_swag(Engine& engine,
                                     const std::vector<Timestamp>& perm) {
  FirstOp first;
  for (Timestamp x : perm) engine.insert(x, first.lift(x));
  std::vector<Timestamp> out;
  out.reserve(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    auto oldest = engine.query();
    if (!oldest) throw std::logic_error("window ran empty while sorting");
    out.push_back(*oldest);
    engine.evict(*oldest);
  }
  return out;
}

}  // namespace fiba
