#include "fiba/bench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <utility>

#include "fiba/classic_btree.hpp"
#include "fiba/finger_btree.hpp"
#include "fiba/monoid.hpp"
#include "fiba/oracle.hpp"
#include "fiba/two_stacks.hpp"

namespace fiba::bench {
namespace {

constexpr std::size_t oracle_check_limit = 100000;

const std::vector<std::string> all_engines = {"classic", "fiba", "two_stacks",
                                              "oracle"};
const std::vector<std::string> all_operators = {"sum", "geomean", "bloom",
                                                "maxcount", "concat"};

bool is_tree(const std::string& engine) {
  return engine == "classic" || engine == "fiba";
}

std::vector<std::size_t> powers(std::size_t from, std::size_t to,
                                std::size_t factor) {
  std::vector<std::size_t> out;
  for (std::size_t x = from; x <= to; x *= factor) {
    out.push_back(x);
    if (x > std::numeric_limits<std::size_t>::max() / factor) break;
  }
  return out;
}

template <typename F>
void with_operator(const std::string& name, F&& f) {
  if (name == "sum") return f(SumOp{});
  if (name == "geomean") return f(GeomeanOp{});
  if (name == "bloom") return f(BloomOp{});
  if (name == "maxcount") return f(MaxCountOp{});
  if (name == "concat") return f(ConcatOp{});
  throw ConfigError("unknown operator '" + name + "'");
}

template <Monoid M, typename F>
void with_engine(const std::string& name, int min_arity, F&& f) {
  if (name == "fiba") {
    FingerBTree<M> e(min_arity);
    return f(e);
  }
  if (name == "classic") {
    ClassicBTree<M> e(min_arity);
    return f(e);
  }
  if (name == "two_stacks") {
    TwoStacks<M> e;
    return f(e);
  }
  if (name == "oracle") {
    BruteForceOracle<M> e;
    return f(e);
  }
  throw ConfigError("unknown engine '" + name + "'");
}

// One (engine, arity, operator, n, d) cell of the output.
struct Cell {
  const ExperimentConfig& cfg;
  Report& report;
  std::string engine;
  int min_arity;
  std::string op;
  std::size_t n;
  std::size_t d;

  void row(const std::string& metric, double value) const {
    report.rows.push_back({cfg.experiment, engine,
                           is_tree(engine) ? min_arity : 0, op, n, d, metric,
                           value});
  }
  void failure(const std::string& what) const {
    std::ostringstream os;
    os << cfg.experiment << " " << engine << " m=" << min_arity << " op=" << op
       << " n=" << n << " d=" << d << ": " << what;
    report.failures.push_back(os.str());
  }
};

template <typename Engine>
void replay_cell(const Cell& cell, Engine& engine,
                 const workload::Trace& trace, bool per_round) {
  using M = typename Engine::Op;
  bool timing = cell.cfg.metrics == Metrics::wallclock;
  RebalanceLedger ledger;
  ReplayOptions opt;
  opt.per_round = per_round;
  opt.wallclock = timing;
  opt.ledger = &ledger;
  ReplayResult r = replay(engine, trace, opt);
  const PhaseStats& s = r.measured;

  cell.row("combines_per_op", s.per_op(&OpCounters::combines));
  cell.row("visited_per_op", s.per_op(&OpCounters::nodes_visited));
  cell.row("visited_per_insert",
           s.per_kind(OpKind::insert, &OpCounters::nodes_visited));
  cell.row("visited_per_evict",
           s.per_kind(OpKind::evict, &OpCounters::nodes_visited));
  cell.row("combines_per_query",
           s.per_kind(OpKind::query, &OpCounters::combines));
  if (is_tree(cell.engine)) {
    cell.row("spent_per_op", s.spent_per_op());
    cell.row("max_net_cost", static_cast<double>(ledger.max_net_cost()));
    cell.row("coin_bound_ok", ledger.ok() ? 1 : 0);
    if (!ledger.ok())
      cell.failure("coin bound violated: " + ledger.first_violation());
  }
  if (timing && s.ops > 0) {
    cell.row("ns_per_op", s.nanos / static_cast<double>(s.ops));
    cell.row("ops_per_s", s.nanos > 0 ? 1e9 * s.ops / s.nanos : 0.0);
  }
  if (per_round && !r.round_cost.empty()) {
    Summary sum = summarize(r.round_cost);
    std::string unit = timing ? "ns_" : "work_";
    cell.row("latency_" + unit + "min", sum.min);
    cell.row("latency_" + unit + "median", sum.median);
    cell.row("latency_" + unit + "p999", sum.p999);
    cell.row("latency_" + unit + "max", sum.max);
  }
  if (cell.cfg.ops <= oracle_check_limit) {
    M op;
    bool match = aggregates_match(op, engine.query(), reference_final(op, trace));
    cell.row("oracle_match", match ? 1 : 0);
    if (!match) cell.failure("final query differs from the reference");
  }
}

template <typename MakeTrace>
Report per_engine_sweep(const ExperimentConfig& cfg, MakeTrace&& make_trace,
                        bool per_round) {
  Report report;
  for (std::size_t x : cfg.sweep) {
    auto [trace, n, d] = make_trace(x);
    for (const auto& op : cfg.operators) {
      with_operator(op, [&](auto monoid) {
        using M = decltype(monoid);
        for (const auto& engine : cfg.engines) {
          std::vector<int> arities =
              is_tree(engine) ? cfg.min_arities : std::vector<int>{0};
          for (int m : arities) {
            Cell cell{cfg, report, engine, m, op, n, d};
            with_engine<M>(engine, std::max(m, 2), [&](auto& e) {
              replay_cell(cell, e, trace, per_round);
            });
          }
        }
      });
    }
  }
  return report;
}

// ---- window sharing ------------------------------------------------------

struct SharingTotals {
  OpCounters cost;
  std::uint64_t range_queries = 0;
  std::uint64_t range_combines = 0;
  std::uint64_t range_visited = 0;
};

template <typename Tree>
void sharing_cell(const Cell& base, const workload::Trace& trace) {
  using M = typename Tree::Op;
  M op;
  int m = base.min_arity;
  Tree range_tree(m), twin_big(m), twin_small(m);
  RebalanceLedger ledger;
  SharingTotals range_side, twin_side;
  OpCounters range_start, big_start, small_start;
  bool agree = true;

  auto trim_small = [&](Timestamp lo) {
    while (!twin_small.empty() && twin_small.oldest() < lo)
      twin_small.evict(twin_small.oldest());
  };
  for (std::size_t i = 0; i < trace.ops.size(); ++i) {
    if (i == trace.warmup) {
      range_start = range_tree.totals();
      big_start = twin_big.totals();
      small_start = twin_small.totals();
    }
    const auto& t = trace.ops[i];
    switch (t.type) {
      case workload::OpType::insert: {
        auto v = op.lift(t.value);
        range_tree.insert(t.t, v);
        twin_big.insert(t.t, v);
        twin_small.insert(t.t, v);
        break;
      }
      case workload::OpType::evict:
        range_tree.evict(t.t);
        twin_big.evict(t.t);
        break;
      case workload::OpType::query:
        agree &= aggregates_match(op, range_tree.query(), twin_big.query());
        break;
      case workload::OpType::range_query: {
        auto a = range_tree.range_query(t.t, t.t2);
        if (i >= trace.warmup) {
          ++range_side.range_queries;
          range_side.range_combines += range_tree.last_op().counters.combines;
          range_side.range_visited +=
              range_tree.last_op().counters.nodes_visited;
        }
        trim_small(t.t);
        agree &= aggregates_match(op, a, twin_small.query());
        break;
      }
    }
    ledger.observe(range_tree.last_op());
  }
  auto diff = [](const OpCounters& end, const OpCounters& start) {
    OpCounters d = end;
    d.combines -= start.combines;
    d.nodes_visited -= start.nodes_visited;
    d.splits -= start.splits;
    d.merges -= start.merges;
    d.moves -= start.moves;
    return d;
  };
  range_side.cost = diff(range_tree.totals(), range_start);
  twin_side.cost = diff(twin_big.totals(), big_start);
  twin_side.cost += diff(twin_small.totals(), small_start);

  double rounds = static_cast<double>(std::max<std::size_t>(trace.rounds(), 1));
  std::string flavor = base.engine;
  for (auto [mode, totals] : {std::pair{"_twin", &twin_side},
                              std::pair{"_range", &range_side}}) {
    Cell cell = base;
    cell.engine = flavor + mode;
    cell.row("combines_per_round", totals->cost.combines / rounds);
    cell.row("visited_per_round", totals->cost.nodes_visited / rounds);
    cell.row("spent_per_round", totals->cost.spent() / rounds);
  }
  Cell range_cell = base;
  range_cell.engine = flavor + "_range";
  if (range_side.range_queries > 0) {
    auto q = static_cast<double>(range_side.range_queries);
    range_cell.row("range_combines_per_query", range_side.range_combines / q);
    range_cell.row("range_visited_per_query", range_side.range_visited / q);
  }
  range_cell.row("coin_bound_ok", ledger.ok() ? 1 : 0);
  if (!ledger.ok())
    range_cell.failure("coin bound violated: " + ledger.first_violation());
  base.row("answers_agree", agree ? 1 : 0);
  if (!agree) base.failure("twin and range answers differ");
  if (base.cfg.ops <= oracle_check_limit) {
    bool match =
        aggregates_match(op, range_tree.query(), reference_final(op, trace));
    range_cell.row("oracle_match", match ? 1 : 0);
    if (!match) range_cell.failure("final query differs from the reference");
  }

  if (base.cfg.metrics == Metrics::wallclock) {
    using clock = std::chrono::steady_clock;
    auto time_mode = [&](bool twin) {
      Tree big(m), small(m);
      auto start = clock::now();
      for (std::size_t i = 0; i < trace.ops.size(); ++i) {
        if (i == trace.warmup) start = clock::now();
        const auto& t = trace.ops[i];
        switch (t.type) {
          case workload::OpType::insert:
            big.insert(t.t, op.lift(t.value));
            if (twin) small.insert(t.t, op.lift(t.value));
            break;
          case workload::OpType::evict: big.evict(t.t); break;
          case workload::OpType::query: (void)big.query(); break;
          case workload::OpType::range_query:
            if (twin) {
              while (!small.empty() && small.oldest() < t.t)
                small.evict(small.oldest());
              (void)small.query();
            } else {
              (void)big.range_query(t.t, t.t2);
            }
            break;
        }
      }
      double ns =
          std::chrono::duration<double, std::nano>(clock::now() - start)
              .count();
      return ns;
    };
    for (bool twin : {true, false}) {
      Cell cell = base;
      cell.engine = flavor + (twin ? "_twin" : "_range");
      double ns = time_mode(twin);
      cell.row("ns_per_round", ns / rounds);
      cell.row("rounds_per_s", ns > 0 ? 1e9 * rounds / ns : 0.0);
    }
  }
}

// ---- oracle-equivalence fuzzing -----------------------------------------

template <typename Tree>
void fuzz_cell(const Cell& cell, const workload::Trace& trace,
               bool check_invariants) {
  using M = typename Tree::Op;
  M op;
  Tree tree(cell.min_arity);
  BruteForceOracle<M> oracle;
  RebalanceLedger ledger;
  std::uint64_t mismatches = 0;
  std::uint64_t checked = 0;
  std::string first_problem;
  auto note = [&](std::size_t i, const std::string& what) {
    if (mismatches++ == 0)
      first_problem = "op " + std::to_string(i) + ": " + what;
  };
  std::uint64_t query_combines_over_two = 0;

  for (std::size_t i = 0; i < trace.ops.size(); ++i) {
    const auto& t = trace.ops[i];
    switch (t.type) {
      case workload::OpType::insert:
        tree.insert(t.t, op.lift(t.value));
        oracle.insert(t.t, op.lift(t.value));
        break;
      case workload::OpType::evict:
        if (tree.evict(t.t) != oracle.evict(t.t))
          note(i, "evict disagrees on presence");
        break;
      case workload::OpType::query:
        if (!aggregates_match(op, tree.query(), oracle.query()))
          note(i, "query differs from oracle");
        if (tree.last_op().counters.combines > 2) ++query_combines_over_two;
        break;
      case workload::OpType::range_query:
        if (!aggregates_match(op, tree.range_query(t.t, t.t2),
                              oracle.range_query(t.t, t.t2)))
          note(i, "range query differs from oracle");
        break;
    }
    ledger.observe(tree.last_op());
    if (tree.size() != oracle.size()) note(i, "size differs from oracle");
    if (check_invariants) {
      try {
        tree.check_invariants();
        ++checked;
      } catch (const InvariantViolation& e) {
        note(i, std::string("invariant: ") + e.what());
        break;
      }
    }
    if (mismatches > 0) break;
  }
  cell.row("ops", static_cast<double>(trace.ops.size()));
  cell.row("mismatches", static_cast<double>(mismatches));
  cell.row("invariant_checks", static_cast<double>(checked));
  cell.row("query_combines_over_two",
           static_cast<double>(query_combines_over_two));
  cell.row("max_net_cost", static_cast<double>(ledger.max_net_cost()));
  cell.row("max_window_mean_spent", ledger.max_window_mean());
  cell.row("coin_bound_ok", ledger.ok() ? 1 : 0);
  if (mismatches > 0) cell.failure(first_problem);
  if (!ledger.ok())
    cell.failure("coin bound violated: " + ledger.first_violation());
  if (query_combines_over_two > 0)
    cell.failure("query() used more than two combines");
}

}  // namespace

// ---- configuration -------------------------------------------------------

ExperimentConfig normalize(ExperimentConfig cfg) {
  const std::string& x = cfg.experiment;
  bool known = x == "distance" || x == "latency" || x == "fifo" ||
               x == "sharing" || x == "fuzz" || x == "trace";
  if (!known) throw ConfigError("unknown experiment '" + x + "'");
  if (cfg.n == 0) cfg.n = x == "fuzz" ? 256 : std::size_t{1} << 16;
  if (cfg.ops == 0)
    cfg.ops = cfg.metrics == Metrics::wallclock && x != "fuzz" ? 1000000
                                                               : 100000;
  if (cfg.engines.empty()) {
    if (x == "fifo") cfg.engines = {"two_stacks", "classic", "fiba"};
    else if (x == "sharing") cfg.engines = {"fiba"};
    else if (x == "trace") cfg.engines = {"classic", "fiba"};
    else cfg.engines = {"classic", "fiba"};
  }
  if (cfg.operators.empty()) cfg.operators = {"sum"};
  if (cfg.min_arities.empty()) cfg.min_arities = {2};
  for (const auto& e : cfg.engines) {
    if (std::find(all_engines.begin(), all_engines.end(), e) ==
        all_engines.end())
      throw ConfigError("unknown engine '" + e + "'");
    if (e == "two_stacks" && x != "fifo")
      throw ConfigError("two_stacks only supports the fifo experiment");
    if ((x == "sharing" || x == "fuzz") && !is_tree(e))
      throw ConfigError(x + " needs a tree engine (classic or fiba)");
  }
  for (const auto& o : cfg.operators)
    if (std::find(all_operators.begin(), all_operators.end(), o) ==
        all_operators.end())
      throw ConfigError("unknown operator '" + o + "'");
  for (int m : cfg.min_arities)
    if (m < 2) throw ConfigError("min arity must be at least 2");

  if (cfg.sweep.empty()) {
    if (x == "distance") {
      cfg.sweep = {0};
      for (std::size_t d : powers(1, cfg.n, 2)) cfg.sweep.push_back(d);
    } else if (x == "latency") {
      cfg.sweep = {0, cfg.n / 4};
    } else if (x == "fifo") {
      cfg.sweep = powers(std::min<std::size_t>(1024, cfg.n), cfg.n, 4);
    } else if (x == "sharing") {
      cfg.sweep = powers(std::min<std::size_t>(4, cfg.n), cfg.n, 4);
    } else {
      cfg.sweep = {cfg.n};
    }
  }
  for (std::size_t v : cfg.sweep) {
    if ((x == "distance" || x == "latency") && v > cfg.n)
      throw ConfigError("distance " + std::to_string(v) +
                        " exceeds window size " + std::to_string(cfg.n));
    if (x == "sharing" && (v == 0 || v > cfg.n))
      throw ConfigError("small window must be in [1, n]");
    if ((x == "fifo" || x == "fuzz") && v == 0)
      throw ConfigError("window size must be positive");
  }
  return cfg;
}

// ---- statistics and output ----------------------------------------------

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("percentile of no samples");
  if (!(q >= 0.0 && q <= 1.0))
    throw std::invalid_argument("percentile rank outside [0, 1]");
  std::sort(samples.begin(), samples.end());
  auto n = static_cast<double>(samples.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n));
  rank = std::clamp<std::size_t>(rank, 1, samples.size());
  return samples[rank - 1];
}

Summary summarize(const std::vector<double>& samples) {
  return {percentile(samples, 0.0), percentile(samples, 0.5),
          percentile(samples, 0.999), percentile(samples, 1.0)};
}

void write_csv(std::ostream& out, const std::vector<CsvRow>& rows) {
  out << "experiment,engine,min_arity,operator,n,d,metric,value\n";
  std::ostringstream num;
  for (const auto& r : rows) {
    num.str("");
    num.precision(10);
    num << r.value;
    out << r.experiment << ',' << r.engine << ',' << r.min_arity << ','
        << r.op << ',' << r.n << ',' << r.d << ',' << r.metric << ','
        << num.str() << '\n';
  }
}

// ---- experiments ---------------------------------------------------------

Report run_distance(const ExperimentConfig& raw) {
  ExperimentConfig cfg = normalize(raw);
  return per_engine_sweep(
      cfg,
      [&](std::size_t d) {
        return std::tuple{
            workload::adversarial_distance(cfg.n, d, cfg.ops, cfg.seed),
            cfg.n, d};
      },
      false);
}

Report run_latency(const ExperimentConfig& raw) {
  ExperimentConfig cfg = normalize(raw);
  return per_engine_sweep(
      cfg,
      [&](std::size_t d) {
        return std::tuple{
            workload::adversarial_distance(cfg.n, d, cfg.ops, cfg.seed),
            cfg.n, d};
      },
      true);
}

Report run_fifo(const ExperimentConfig& raw) {
  ExperimentConfig cfg = normalize(raw);
  return per_engine_sweep(
      cfg,
      [&](std::size_t n) {
        return std::tuple{workload::fifo(n, cfg.ops, cfg.seed), n,
                          std::size_t{0}};
      },
      false);
}

Report run_sharing(const ExperimentConfig& raw) {
  ExperimentConfig cfg = normalize(raw);
  Report report;
  for (std::size_t n_small : cfg.sweep) {
    auto trace = workload::sharing(cfg.n, n_small, cfg.ops, cfg.seed);
    for (const auto& op : cfg.operators) {
      with_operator(op, [&](auto monoid) {
        using M = decltype(monoid);
        for (const auto& engine : cfg.engines) {
          for (int m : cfg.min_arities) {
            Cell cell{cfg, report, engine, m, op, cfg.n, n_small};
            if (engine == "fiba")
              sharing_cell<FingerBTree<M>>(cell, trace);
            else
              sharing_cell<ClassicBTree<M>>(cell, trace);
          }
        }
      });
    }
  }
  return report;
}

Report run_fuzz(const ExperimentConfig& raw) {
  ExperimentConfig cfg = normalize(raw);
  Report report;
  for (std::size_t window : cfg.sweep) {
    auto trace = workload::fuzz({cfg.ops, window, cfg.seed});
    for (const auto& op : cfg.operators) {
      with_operator(op, [&](auto monoid) {
        using M = decltype(monoid);
        for (const auto& engine : cfg.engines) {
          for (int m : cfg.min_arities) {
            Cell cell{cfg, report, engine, m, op, window, 0};
            if (engine == "fiba")
              fuzz_cell<FingerBTree<M>>(cell, trace, cfg.check_invariants);
            else
              fuzz_cell<ClassicBTree<M>>(cell, trace, cfg.check_invariants);
          }
        }
      });
    }
  }
  return report;
}

Report run_trace_file(const ExperimentConfig& raw,
                      const workload::Trace& trace) {
  ExperimentConfig cfg = raw;
  cfg.experiment = "trace";
  cfg = normalize(cfg);
  cfg.ops = trace.ops.size();
  Report report;
  for (const auto& op : cfg.operators) {
    with_operator(op, [&](auto monoid) {
      using M = decltype(monoid);
      for (const auto& engine : cfg.engines) {
        std::vector<int> arities =
            is_tree(engine) ? cfg.min_arities : std::vector<int>{0};
        for (int m : arities) {
          Cell cell{cfg, report, engine, m, op, trace.ops.size(), 0};
          with_engine<M>(engine, std::max(m, 2), [&](auto& e) {
            replay_cell(cell, e, trace, false);
          });
        }
      }
    });
  }
  return report;
}

Report run_experiment(const ExperimentConfig& cfg) {
  const std::string& x = cfg.experiment;
  if (x == "distance") return run_distance(cfg);
  if (x == "latency") return run_latency(cfg);
  if (x == "fifo") return run_fifo(cfg);
  if (x == "sharing") return run_sharing(cfg);
  if (x == "fuzz") return run_fuzz(cfg);
  throw ConfigError("unknown experiment '" + x + "'");
}

}  // namespace fiba::bench
