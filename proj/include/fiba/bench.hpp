#pragma once

// Experiment harness: trace replay with per-op instrumentation, summary
// statistics, CSV output, and the experiment families behind fiba_bench.

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fiba/ledger.hpp"
#include "fiba/swag.hpp"
#include "fiba/workload.hpp"

namespace fiba::bench {

enum class Metrics { counters, wallclock };

struct ExperimentConfig {
  std::string experiment;  // distance | latency | fifo | sharing | fuzz
  std::vector<std::string> engines;  // classic | fiba | two_stacks | oracle
  std::vector<int> min_arities{2};
  std::vector<std::string> operators{"sum"};
  std::size_t n = std::size_t{1} << 16;
  /// Distances (distance, latency), window sizes (fifo) or small-window
  /// sizes (sharing). Empty means the experiment's default sweep.
  std::vector<std::size_t> sweep;
  std::size_t ops = 100000;  // measured rounds, or total ops for fuzz
  std::uint64_t seed = 1;
  Metrics metrics = Metrics::counters;
  /// fuzz only: check_invariants() after every op.
  bool check_invariants = true;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fills in defaults and rejects inconsistent settings.
ExperimentConfig normalize(ExperimentConfig cfg);

/// Nearest-rank percentile; q in [0, 1]. Throws on empty input.
double percentile(std::vector<double> samples, double q);

struct Summary {
  double min = 0, median = 0, p999 = 0, max = 0;
};
Summary summarize(const std::vector<double>& samples);

struct CsvRow {
  std::string experiment;
  std::string engine;
  int min_arity = 0;
  std::string op;
  std::size_t n = 0;
  std::size_t d = 0;
  std::string metric;
  double value = 0;
};

void write_csv(std::ostream& out, const std::vector<CsvRow>& rows);

struct Report {
  std::vector<CsvRow> rows;
  /// Correctness problems seen while benchmarking (oracle mismatch, coin
  /// bound, invariants). Empty on success.
  std::vector<std::string> failures;
};

Report run_experiment(const ExperimentConfig& cfg);
Report run_distance(const ExperimentConfig& cfg);
Report run_latency(const ExperimentConfig& cfg);
Report run_fifo(const ExperimentConfig& cfg);
Report run_sharing(const ExperimentConfig& cfg);
Report run_fuzz(const ExperimentConfig& cfg);
/// Replays a loaded trace on every configured engine.
Report run_trace_file(const ExperimentConfig& cfg,
                      const workload::Trace& trace);

// ---- replay --------------------------------------------------------------

constexpr std::size_t kinds = 4;
inline std::size_t kind_index(OpKind k) { return static_cast<std::size_t>(k); }

struct PhaseStats {
  std::uint64_t ops = 0;
  OpCounters totals;
  std::array<OpCounters, kinds> by_kind{};
  std::array<std::uint64_t, kinds> count_by_kind{};
  double nanos = 0;

  double per_op(std::uint64_t OpCounters::*field) const {
    return ops == 0 ? 0.0 : static_cast<double>(totals.*field) / ops;
  }
  double per_kind(OpKind k, std::uint64_t OpCounters::*field) const {
    auto i = kind_index(k);
    return count_by_kind[i] == 0
               ? 0.0
               : static_cast<double>(by_kind[i].*field) / count_by_kind[i];
  }
  double spent_per_op() const {
    return ops == 0 ? 0.0 : static_cast<double>(totals.spent()) / ops;
  }
};

struct ReplayOptions {
  bool per_round = false;  // collect one cost sample per measured round
  bool wallclock = false;  // time rounds / the measured phase
  std::size_t check_every = 0;  // check_invariants() every k ops; 0 = never
  RebalanceLedger* ledger = nullptr;  // observes every op, warm-up included
};

struct ReplayResult {
  PhaseStats measured;
  /// Per measured round: nanoseconds when timing, combines + visited nodes
  /// otherwise.
  std::vector<double> round_cost;
};

struct NoAnswer {
  template <typename A>
  void operator()(std::size_t, const A&) const {}
};

template <typename Engine, typename OnAnswer = NoAnswer>
  requires OooSwag<Engine>
ReplayResult replay(Engine& engine, const workload::Trace& trace,
                    const ReplayOptions& opt = {}, OnAnswer on_answer = {}) {
  using clock = std::chrono::steady_clock;
  typename Engine::Op op{};
  ReplayResult result;
  if (opt.per_round) result.round_cost.reserve(trace.rounds());
  double round_work = 0;
  clock::time_point phase_start, round_start;

  for (std::size_t i = 0; i < trace.ops.size(); ++i) {
    bool measured = i >= trace.warmup;
    bool round_begin =
        measured && (i - trace.warmup) % trace.ops_per_round == 0;
    if (i == trace.warmup && opt.wallclock) phase_start = clock::now();
    if (round_begin && opt.per_round && opt.wallclock)
      round_start = clock::now();

    const auto& t = trace.ops[i];
    switch (t.type) {
      case workload::OpType::insert: engine.insert(t.t, op.lift(t.value)); break;
      case workload::OpType::evict: engine.evict(t.t); break;
      case workload::OpType::query: on_answer(i, engine.query()); break;
      case workload::OpType::range_query:
        on_answer(i, engine.range_query(t.t, t.t2));
        break;
    }

    const OpRecord& rec = engine.last_op();
    if (opt.ledger) opt.ledger->observe(rec);
    if constexpr (requires { engine.check_invariants(); }) {
      if (opt.check_every != 0 && (i + 1) % opt.check_every == 0)
        engine.check_invariants();
    }
    if (!measured) continue;
    auto& m = result.measured;
    ++m.ops;
    m.totals += rec.counters;
    m.by_kind[kind_index(rec.kind)] += rec.counters;
    ++m.count_by_kind[kind_index(rec.kind)];
    round_work += static_cast<double>(rec.counters.combines +
                                      rec.counters.nodes_visited);
    bool round_end =
        (i + 1 - trace.warmup) % trace.ops_per_round == 0;
    if (round_end && opt.per_round) {
      if (opt.wallclock) {
        result.round_cost.push_back(
            std::chrono::duration<double, std::nano>(clock::now() -
                                                     round_start)
                .count());
      } else {
        result.round_cost.push_back(round_work);
      }
    }
    if (round_end) round_work = 0;
  }
  if (opt.wallclock && trace.ops.size() > trace.warmup)
    result.measured.nanos =
        std::chrono::duration<double, std::nano>(clock::now() - phase_start)
            .count();
  return result;
}

/// Final window aggregate of a trace, replayed on an ordered map. Fast
/// enough for benchmark-sized windows, unlike the flat-array oracle.
template <Monoid M>
typename M::Agg reference_final(const M& op, const workload::Trace& trace) {
  std::map<Timestamp, typename M::Agg> window;
  for (const auto& t : trace.ops) {
    if (t.type == workload::OpType::insert) {
      auto [it, fresh] = window.try_emplace(t.t, op.lift(t.value));
      if (!fresh) it->second = op.combine(it->second, op.lift(t.value));
    } else if (t.type == workload::OpType::evict) {
      window.erase(t.t);
    }
  }
  typename M::Agg acc = op.identity();
  for (const auto& [time, v] : window) acc = op.combine(acc, v);
  return acc;
}

}  // namespace fiba::bench
