// Acceptance run: evaluates the ten release criteria at their pinned sizes and
// tolerances and prints one PASS/FAIL line per criterion. Exit status is
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fiba/bench.hpp"
#include "fiba/classic_btree.hpp"
#include "fiba/finger_btree.hpp"
#include "fiba/ledger.hpp"
#include "fiba/oracle.hpp"
#include "fiba/sort_reduction.hpp"
#include "fiba/workload.hpp"
#include "tree_helpers.hpp"

using namespace fiba;
namespace w = fiba::workload;
namespace b = fiba::bench;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point start) {
  return std::chrono::duration<double>(clock_type::now() - start).count();
}

std::string fmt(double x, int precision = 3) {
  std::ostringstream os;
  os.precision(precision);
  os << x;
  return os.str();
}

// ---- global audit: coin bound, query cost and invariants -----------------

struct Audit {
  std::uint64_t tree_runs = 0;
  std::uint64_t audited_ops = 0;
  std::uint64_t coin_violations = 0;
  std::int64_t max_net = std::numeric_limits<std::int64_t>::min();
  double max_window_mean = 0;
  std::vector<std::string> coin_failures;

  std::uint64_t queries = 0;
  std::uint64_t max_query_combines = 0;

  std::uint64_t invariant_checks = 0;
  std::uint64_t every_op_runs = 0;
  std::uint64_t periodic_runs = 0;
  std::vector<std::string> invariant_failures;

  // Extra results from runs the audit wrapper does not see (bench cells).
  std::vector<std::string> external_failures;
};

Audit audit;

// Forwards to a tree and audits every operation: coin ledger, combines per
// query() and invariant checks every `every` ops (0 = only at the end).
template <typename Tree>
class Audited {
 public:
  using Op = typename Tree::Op;
  using Agg = typename Tree::Agg;

  Audited(Tree& tree, std::string label, std::size_t every)
      : tree_(tree), label_(std::move(label)), every_(every) {
    ++audit.tree_runs;
    if (every_ == 1) ++audit.every_op_runs;
    else ++audit.periodic_runs;
    check();
  }
  Audited(const Audited&) = delete;
  Audited& operator=(const Audited&) = delete;

  ~Audited() {
    check();
    audit.audited_ops += ops_;
    audit.max_net = std::max(audit.max_net, ledger_.max_net_cost());
    audit.max_window_mean =
        std::max(audit.max_window_mean, ledger_.max_window_mean());
    if (!ledger_.ok()) {
      ++audit.coin_violations;
      audit.coin_failures.push_back(label_ + ": " + ledger_.first_violation());
    }
  }

  void insert(Timestamp t, const Agg& v) {
    tree_.insert(t, v);
    after();
  }
  bool evict(Timestamp t) {
    bool found = tree_.evict(t);
    after();
    return found;
  }
  Agg query() const {
    Agg a = tree_.query();
    ++audit.queries;
    audit.max_query_combines = std::max<std::uint64_t>(
        audit.max_query_combines, tree_.last_op().counters.combines);
    after();
    return a;
  }
  Agg range_query(Timestamp from, Timestamp to) const {
    Agg a = tree_.range_query(from, to);
    after();
    return a;
  }
  std::size_t size() const { return tree_.size(); }
  const OpRecord& last_op() const { return tree_.last_op(); }
  const OpCounters& totals() const { return tree_.totals(); }
  Tree& tree() { return tree_; }

 private:
  void after() const {
    ledger_.observe(tree_.last_op());
    ++ops_;
    if (every_ != 0 && ops_ % every_ == 0) check();
  }
  void check() const {
    if (broken_) return;
    try {
      tree_.check_invariants();
      ++audit.invariant_checks;
    } catch (const InvariantViolation& e) {
      broken_ = true;
      audit.invariant_failures.push_back(label_ + " after op " +
                                         std::to_string(ops_) + ": " +
                                         e.what());
    }
  }

  Tree& tree_;
  std::string label_;
  std::size_t every_;
  mutable RebalanceLedger ledger_;
  mutable std::uint64_t ops_ = 0;
  mutable bool broken_ = false;
};

// Replays a trace on a fresh audited tree and returns the measured-phase
// statistics.
template <typename Tree>
b::PhaseStats audited_replay(int m, const w::Trace& trace,
                             const std::string& label, std::size_t every) {
  Tree tree(m);
  Audited<Tree> a(tree, label, every);
  return b::replay(a, trace).measured;
}

// ---- result lines --------------------------------------------------------

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void verdict(int id, const std::string& name, bool pass,
             const std::string& detail) {
  verdicts.push_back({id, name, pass, detail});
}

void info(const std::string& line) { std::cout << "  " << line << std::endl; }

// Least-squares fit of y = c1 + c2 x, returning R^2.
double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (syy == 0) return 1.0;
  return sxy * sxy / (sxx * syy);
}

// ---- criterion 1: oracle equivalence ------------------------------------

void criterion_oracle_equivalence() {
  std::cout << "criterion 1: oracle equivalence on fuzz traces" << std::endl;
  b::ExperimentConfig cfg;
  cfg.experiment = "fuzz";
  cfg.engines = {"classic", "fiba"};
  cfg.min_arities = {2, 4, 8};
  cfg.operators = {"sum", "maxcount", "concat", "bloom", "geomean"};
  cfg.n = 256;
  cfg.ops = 100000;
  cfg.seed = 2024;
  cfg.check_invariants = true;
  auto start = clock_type::now();
  auto report = b::run_fuzz(cfg);
  double elapsed = seconds_since(start);

  std::size_t cells = 0, mismatched = 0;
  for (const auto& row : report.rows) {
    if (row.metric == "mismatches") {
      ++cells;
      if (row.value != 0) ++mismatched;
    } else if (row.metric == "invariant_checks") {
      audit.invariant_checks += static_cast<std::uint64_t>(row.value);
      ++audit.every_op_runs;
      if (row.value != static_cast<double>(cfg.ops))
        audit.invariant_failures.push_back(
            "fuzz " + row.engine + " m=" + std::to_string(row.min_arity) +
            " op=" + row.op + ": checks stopped at " + fmt(row.value, 10));
    } else if (row.metric == "query_combines_over_two" && row.value != 0) {
      audit.external_failures.push_back("fuzz query() over two combines");
    } else if (row.metric == "max_net_cost") {
      audit.max_net = std::max(audit.max_net, static_cast<std::int64_t>(row.value));
    } else if (row.metric == "max_window_mean_spent") {
      audit.max_window_mean = std::max(audit.max_window_mean, row.value);
    } else if (row.metric == "coin_bound_ok" && row.value != 1) {
      ++audit.coin_violations;
      audit.coin_failures.push_back("fuzz " + row.engine + " m=" +
                                    std::to_string(row.min_arity) + " op=" +
                                    row.op);
    }
  }
  audit.tree_runs += cells;
  audit.audited_ops += cells * cfg.ops;
  for (const auto& f : report.failures) info("failure: " + f);
  bool pass = report.failures.empty() && mismatched == 0 && cells == 30 &&
              elapsed < 60.0;
  verdict(1, "oracle equivalence", pass,
          std::to_string(cells) + " cells (2 engines x 3 arities x 5 ops) x " +
              "1e5 ops, " + std::to_string(mismatched) +
              " mismatching cells, bit-exact (geomean 1e-9 rel), " +
              fmt(elapsed) + " s (budget 60 s, invariants checked every op)");
}

// ---- criterion 2: running example ---------------------------------------

void criterion_running_example() {
  std::cout << "criterion 2: running example" << std::endl;
  using MC = MaxCountOp::Agg;
  const std::vector<MC> expected{{4, 2}, {4, 3}, {5, 1}, {5, 1}, {4, 2}};
  auto run = [](auto& engine) {
    MaxCountOp op;
    std::vector<MC> seen;
    for (auto [k, v] : {std::pair{17, 4}, {19, 3}, {20, 0}, {21, 4}})
      engine.insert(k, op.lift(v));
    seen.push_back(engine.query());
    engine.insert(22, op.lift(4));
    seen.push_back(engine.query());
    engine.insert(18, op.lift(5));
    seen.push_back(engine.query());
    engine.evict(17);
    seen.push_back(engine.query());
    engine.evict(18);
    seen.push_back(engine.query());
    return seen;
  };
  std::size_t engines = 0, wrong = 0;
  {
    BruteForceOracle<MaxCountOp> o;
    ++engines;
    wrong += run(o) != expected;
  }
  for (int m : {2, 3, 4, 8}) {
    ClassicBTree<MaxCountOp> c(m);
    FingerBTree<MaxCountOp> f(m);
    {
      Audited<ClassicBTree<MaxCountOp>> a(c, "example classic", 1);
      wrong += run(a) != expected;
    }
    {
      Audited<FingerBTree<MaxCountOp>> a(f, "example fiba", 1);
      wrong += run(a) != expected;
    }
    engines += 2;
  }
  info("two_stacks rejects the out-of-order insert 18:5 by contract; "
       "not replayed");
  verdict(2, "running example", wrong == 0,
          "<4,2> <4,3> <5,1> <5,1> <4,2> on oracle + classic/fiba at m = "
          "2,3,4,8: " +
              std::to_string(engines - wrong) + "/" + std::to_string(engines) +
              " engines agree");
}

// ---- criterion 3 spot checks: restructuring steps on small trees --------

struct StepCase {
  const char* name;
  std::vector<Timestamp> build;
  bool insert;
  Timestamp key;
  const char* steps;
  std::int64_t spent, billed, refunded;
};

bool step_spot_checks(std::string& detail) {
  using Tree = FingerBTree<ConcatOp>;
  const std::vector<StepCase> cases = {
      {"in-order insert", {20, 2, 7, 15}, true, 21, "", 0, 0, 1},
      {"out-of-order insert", {8, 20}, true, 9, "", 0, 2, 0},
      {"evict at left finger", {18, 12, 6, 21}, false, 6, "", 0, 1, 0},
      {"insert with split",
       {8, 22, 5, 16, 9, 24, 25, 2, 6, 7, 30, 17}, true, 19, "split ", 1, 0, 1},
      {"evict with merge", {30, 11, 29, 14, 12, 2, 5, 9, 7, 8}, false, 8,
       "merge ", 1, 0, 0},
      {"split, height increase, split", {30, 22, 13, 25, 10, 9, 2, 11, 4},
       true, 7, "split height+ split ", 2, 0, 0},
      {"merge, move", {16, 17, 20, 24, 10, 18, 8, 13, 12, 6}, false, 24,
       "merge move ", 2, 1, 0},
      {"evict inner", {12, 19, 20, 3}, false, 19, "", 0, 1, 0},
  };
  int ok = 0;
  for (const auto& c : cases) {
    Tree t(2);
    for (auto k : c.build) t.insert(k, {k});
    if (c.insert) t.insert(c.key, {c.key});
    else t.evict(c.key);
    const auto& r = t.last_op();
    bool good = test::step_string(r) == c.steps && r.spent() == c.spent &&
                r.billed() == c.billed && r.refunded() == c.refunded;
    if (!good)
      info(std::string("step check failed: ") + c.name + " got steps '" +
           test::step_string(r) + "' spent " + std::to_string(r.spent()) +
           " billed " + std::to_string(r.billed()) + " refunded " +
           std::to_string(r.refunded()));
    ok += good;
  }
  // Three-level collapse: merge, merge and height decrease.
  {
    Tree t(2);
    for (Timestamp k : {9, 6, 23, 10, 25, 27, 8, 5, 29, 17, 16}) t.insert(k, {k});
    t.evict(25);
    t.evict(6);
    t.evict(5);
    const auto& r = t.last_op();
    bool good = test::step_string(r) == "merge merge height- " &&
                r.spent() == 2 && r.refunded() == 2;
    if (!good) info("step check failed: merge, merge, height decrease");
    ok += good;
  }
  int total = static_cast<int>(cases.size()) + 1;
  detail = std::to_string(ok) + "/" + std::to_string(total) +
           " step spot checks (split spent 1, merge spent 1, split + height "
           "increase + split spent 2 billed 0, ...)";
  return ok == total;
}

// ---- criteria 5, 6, 7: benchmark traces ----------------------------------

struct DistancePoint {
  std::size_t d;
  double visited_per_insert;
};

std::vector<DistancePoint> distance_sweep(int m, std::size_t n,
                                          const std::vector<std::size_t>& ds,
                                          std::size_t rounds) {
  std::vector<DistancePoint> out;
  for (std::size_t d : ds) {
    auto trace = w::adversarial_distance(n, d, rounds, 17);
    auto s = audited_replay<FingerBTree<SumOp>>(
        m, trace, "distance fiba m=" + std::to_string(m) + " d=" + std::to_string(d),
        4096);
    out.push_back({d, s.per_kind(OpKind::insert, &OpCounters::nodes_visited)});
  }
  return out;
}

void criterion_finger_search_trend() {
  std::cout << "criterion 5: finger-search trend" << std::endl;
  const std::size_t n = std::size_t{1} << 16;
  const std::size_t rounds = 100000;
  std::vector<std::size_t> ds;
  for (std::size_t d = 1; d <= (std::size_t{1} << 14); d *= 4) ds.push_back(d);

  bool primary_monotone = false;
  double primary_r2 = 0;
  for (int m : {2, 4, 8}) {
    auto pts = distance_sweep(m, n, ds, rounds);
    std::vector<double> x, y;
    bool monotone = true;
    std::string series;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      x.push_back(std::log2(static_cast<double>(pts[i].d)));
      y.push_back(pts[i].visited_per_insert);
      if (i > 0 && pts[i].visited_per_insert < pts[i - 1].visited_per_insert)
        monotone = false;
      series += " " + fmt(pts[i].visited_per_insert);
    }
    double r2 = r_squared(x, y);
    info("m=" + std::to_string(m) + " visited/insert at d=1,4,...,2^14:" +
         series + " monotone=" + (monotone ? "yes" : "no") +
         " R^2=" + fmt(r2) + (m == 2 ? "" : " (informational)"));
    if (m == 2) {
      primary_monotone = monotone;
      primary_r2 = r2;
    }
  }

  // d = 0: independence of n.
  std::vector<double> flat;
  std::string series;
  for (std::size_t k : {10, 14, 18}) {
    std::size_t size = std::size_t{1} << k;
    auto s = audited_replay<FingerBTree<SumOp>>(
        2, w::fifo(size, rounds, 18), "fifo fiba n=2^" + std::to_string(k),
        4096);
    flat.push_back(s.per_kind(OpKind::insert, &OpCounters::nodes_visited));
    series += " " + fmt(flat.back(), 5);
  }
  auto [lo, hi] = std::minmax_element(flat.begin(), flat.end());
  double spread = *hi / *lo - 1.0;
  info("d=0 visited/insert at n=2^10,2^14,2^18:" + series + " spread " +
       fmt(100 * spread) + "%");
  bool pass = primary_monotone && primary_r2 >= 0.9 && spread <= 0.05;
  verdict(5, "finger-search trend", pass,
          "m=2, n=2^16: monotone in d " +
              std::string(primary_monotone ? "yes" : "no") + ", R^2 " +
              fmt(primary_r2) + " (>= 0.9); d=0 spread over n " +
              fmt(100 * spread) + "% (<= 5%)");
}

void criterion_classic_vs_finger() {
  std::cout << "criterion 6: classic vs finger at d = 0" << std::endl;
  const std::size_t rounds = 100000;
  std::vector<std::size_t> ks{10, 12, 14, 16, 18};
  bool primary = false;
  std::string primary_detail;
  for (int m : {2, 4, 8}) {
    std::vector<double> fib, cls;
    for (std::size_t k : ks) {
      std::size_t n = std::size_t{1} << k;
      auto trace = w::fifo(n, rounds, 19);
      std::string tag = " m=" + std::to_string(m) + " n=2^" + std::to_string(k);
      fib.push_back(audited_replay<FingerBTree<SumOp>>(m, trace, "fifo fiba" + tag, 4096)
                        .per_op(&OpCounters::nodes_visited));
      cls.push_back(audited_replay<ClassicBTree<SumOp>>(m, trace, "fifo classic" + tag, 4096)
                        .per_op(&OpCounters::nodes_visited));
    }
    double ratio = fib[3] / cls[3];  // n = 2^16
    double min_growth = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < cls.size(); ++i)
      min_growth = std::min(min_growth, cls[i] - cls[i - 1]);
    auto [lo, hi] = std::minmax_element(fib.begin(), fib.end());
    double spread = *hi / *lo - 1.0;
    std::string fs, cs;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      fs += " " + fmt(fib[i]);
      cs += " " + fmt(cls[i]);
    }
    info("m=" + std::to_string(m) + " visited/op at n=2^10..2^18 fiba:" + fs +
         " classic:" + cs + (m == 2 ? "" : " (informational)"));
    bool ok = ratio < 0.5 && min_growth >= 1.0 && spread <= 0.05;
    std::string detail = "fiba/classic at 2^16 = " + fmt(ratio) +
                         " (< 0.5), classic min growth per 4x n = " +
                         fmt(min_growth) + " (>= 1), fiba spread " +
                         fmt(100 * spread) + "% (<= 5%)";
    info("m=" + std::to_string(m) + ": " + detail);
    if (m == 2) {
      primary = ok;
      primary_detail = "m=2: " + detail;
    }
  }
  verdict(6, "classic-vs-finger separation", primary, primary_detail);
}

void criterion_lifo() {
  std::cout << "criterion 7: LIFO degenerate case" << std::endl;
  const std::size_t n = std::size_t{1} << 16;
  std::uint64_t spent = 0, ops = 0;
  for (int m : {2, 4, 8}) {
    auto s = audited_replay<FingerBTree<SumOp>>(
        m, w::lifo(n, 100000, 20), "lifo m=" + std::to_string(m), 4096);
    info("m=" + std::to_string(m) + " steady-state spent/op " +
         fmt(s.spent_per_op()));
    spent += s.totals.spent();
    ops += s.ops;
  }
  verdict(7, "LIFO degenerate case", spent == 0,
          "d=n=2^16, m=2,4,8, " + std::to_string(ops) +
              " measured ops: total spent " + std::to_string(spent) +
              " (required 0)");
}

// Scaled replicas of the benchmark traces, checked after every op.
void scaled_replicas() {
  std::cout << "scaled replicas of the benchmark traces (invariants every op)"
            << std::endl;
  const std::size_t n = 1024;
  std::size_t runs = 0;
  for (int m : {2, 4, 8}) {
    for (std::size_t d : {0, 1, 4, 16, 64, 256, 1024}) {
      auto trace = w::adversarial_distance(n, d, 5000, 21);
      std::string tag = " m=" + std::to_string(m) + " d=" + std::to_string(d);
      audited_replay<FingerBTree<SumOp>>(m, trace, "replica fiba" + tag, 1);
      audited_replay<ClassicBTree<SumOp>>(m, trace, "replica classic" + tag, 1);
      runs += 2;
    }
    auto sh = w::sharing(n, 64, 5000, 22);
    audited_replay<FingerBTree<SumOp>>(m, sh, "replica sharing m=" + std::to_string(m), 1);
    ++runs;
  }
  info(std::to_string(runs) + " replica runs at n=1024");
}

// ---- criterion 8: sorting reduction --------------------------------------

std::size_t enumerate_bounded(std::size_t m, std::size_t d) {
  std::vector<Timestamp> p(m);
  std::iota(p.begin(), p.end(), 1);
  std::size_t count = 0;
  do {
    auto dist = w::out_of_order_distances(p);
    count += *std::max_element(dist.begin(), dist.end()) <= d;
  } while (std::next_permutation(p.begin(), p.end()));
  return count;
}

void criterion_sorting() {
  std::cout << "criterion 8: sorting reduction" << std::endl;
  std::size_t sorted_ok = 0, total = 0;
  for (int arity : {2, 4, 8}) {
    for (std::size_t m : {10, 100, 1000}) {
      for (std::size_t d : {std::size_t{0}, std::size_t{1}, m / 2, m}) {
        for (std::uint64_t s = 0; s < 100; ++s) {
          auto perm = w::sample_bounded_ooo_permutation(m, d, 1000 * m + 10 * d + s);
          auto expected = perm;
          std::sort(expected.begin(), expected.end());
          FingerBTree<FirstOp> tree(arity);
          // Every op is checked at m = 2; the others every 64 ops.
          Audited<FingerBTree<FirstOp>> engine(tree, "sort", arity == 2 ? 1 : 64);
          sorted_ok += sort_via_swag(engine, perm) == expected;
          ++total;
        }
      }
    }
  }
  auto brute = enumerate_bounded(4, 2);
  bool count_ok = w::count_bounded_ooo(4, 2) == 18 && brute == 18;
  for (std::size_t m : {1, 10, 100, 1000})
    count_ok = count_ok && w::count_bounded_ooo(m, 0) == 1;
  verdict(8, "sorting reduction", sorted_ok == total && count_ok,
          std::to_string(sorted_ok) + "/" + std::to_string(total) +
              " sorted (m=10,100,1000 x d=0,1,m/2,m x 100 perms x arity "
              "2,4,8); count(4,2)=" +
              w::count_bounded_ooo(4, 2).str() + ", brute force " +
              std::to_string(brute) + ", count(m,0)=1 " +
              (count_ok ? "ok" : "FAILED"));
}

// ---- criterion 9: range queries -----------------------------------------

double log2_floor1(std::size_t x) {
  return std::log2(static_cast<double>(std::max<std::size_t>(x, 1)));
}

template <typename M>
struct RangeOutcome {
  std::size_t mismatches = 0;
  std::size_t queries = 0;
  double max_ratio = 0;
};

// 10^4 random subranges on a 10^3-entry window reached through churn.
template <typename M>
RangeOutcome<M> range_trial(int arity, std::uint64_t seed) {
  M op;
  FingerBTree<M> tree(arity);
  BruteForceOracle<M> oracle;
  Audited<FingerBTree<M>> engine(tree, "range m=" + std::to_string(arity), 1);
  auto build = w::bounded_ooo_random(1000, 100, 1000, seed);
  for (const auto& t : build.ops) {
    if (t.type == w::OpType::insert) {
      engine.insert(t.t, op.lift(t.value));
      oracle.insert(t.t, op.lift(t.value));
    } else if (t.type == w::OpType::evict) {
      engine.evict(t.t);
      oracle.evict(t.t);
    }
  }
  RangeOutcome<M> out;
  const auto& entries = oracle.entries();
  const std::size_t n = entries.size();
  std::mt19937_64 rng(seed);
  auto pick = [&]() -> Timestamp {
    // Mostly endpoints at or next to a key, sometimes outside the window.
    auto i = static_cast<std::size_t>(rng() % n);
    switch (rng() % 4) {
      case 0: return entries[i].time - 1;
      case 1: return entries[i].time + 1;
      case 2:
        return entries.front().time - 5 +
               static_cast<Timestamp>(rng() % (entries.back().time -
                                                entries.front().time + 11));
      default: return entries[i].time;
    }
  };
  for (int q = 0; q < 10000; ++q) {
    Timestamp a = pick(), b2 = pick();
    if (a > b2) std::swap(a, b2);
    auto got = engine.range_query(a, b2);
    auto combines = tree.last_op().counters.combines;
    if (!aggregates_match(op, got, oracle.range_query(a, b2))) ++out.mismatches;
    ++out.queries;
    auto first = std::lower_bound(
        entries.begin(), entries.end(), a,
        [](const auto& e, Timestamp k) { return e.time < k; });
    auto past = std::upper_bound(
        entries.begin(), entries.end(), b2,
        [](Timestamp k, const auto& e) { return k < e.time; });
    double bound = 1;
    if (first < past) {
      auto i_from = static_cast<std::size_t>(first - entries.begin());
      auto i_to = static_cast<std::size_t>(past - entries.begin()) - 1;
      std::size_t d_from = std::min(i_from, n - i_from);
      std::size_t d_to = std::min(i_to, n - i_to);
      bound = log2_floor1(d_from) + log2_floor1(d_to) +
              log2_floor1(i_to - i_from) + 1;
    }
    out.max_ratio = std::max(out.max_ratio, static_cast<double>(combines) / bound);
  }
  return out;
}

void criterion_range_queries() {
  std::cout << "criterion 9: range queries" << std::endl;
  std::size_t mismatches = 0, queries = 0;
  double c_max = 0;
  for (int arity : {2, 4, 8}) {
    auto a = range_trial<ConcatOp>(arity, 31 + arity);
    auto m = range_trial<MaxCountOp>(arity, 41 + arity);
    mismatches += a.mismatches + m.mismatches;
    queries += a.queries + m.queries;
    double c = std::max(a.max_ratio, m.max_ratio);
    info("m=" + std::to_string(arity) + " fitted c = " + fmt(c));
    c_max = std::max(c_max, c);
  }

  b::ExperimentConfig cfg;
  cfg.experiment = "sharing";
  cfg.engines = {"fiba", "classic"};
  cfg.min_arities = {2, 4, 8};
  cfg.operators = {"sum", "maxcount"};
  cfg.n = 4096;
  cfg.sweep = {4, 16, 64, 256, 1024, 4096};
  cfg.ops = 20000;
  auto report = b::run_sharing(cfg);
  std::size_t cells = 0, agree = 0;
  for (const auto& row : report.rows) {
    if (row.metric == "answers_agree") {
      ++cells;
      agree += row.value == 1;
    }
    if (row.metric == "coin_bound_ok" && row.value != 1) {
      ++audit.coin_violations;
      audit.coin_failures.push_back("sharing " + row.engine);
    }
  }
  for (const auto& f : report.failures) info("failure: " + f);
  bool pass = mismatches == 0 && c_max <= 6.0 && cells > 0 &&
              agree == cells && report.failures.empty();
  verdict(9, "range query", pass,
          std::to_string(queries) + " subrange queries (concat, maxcount; m=2,4,8), " +
              std::to_string(mismatches) + " mismatches; fitted c over all arities = " +
              fmt(c_max) + " (<= 6); twin vs range agree in " +
              std::to_string(agree) + "/" + std::to_string(cells) + " sharing cells");
}

}  // namespace

int main() {
  auto start = clock_type::now();
  criterion_oracle_equivalence();
  criterion_running_example();
  criterion_finger_search_trend();
  criterion_classic_vs_finger();
  criterion_lifo();
  scaled_replicas();
  criterion_sorting();
  criterion_range_queries();

  std::string steps;
  bool steps_ok = step_spot_checks(steps);
  bool coin_ok = audit.coin_violations == 0 && audit.max_net <= 2 &&
                 audit.max_window_mean <= 2.0 && steps_ok;
  for (const auto& f : audit.coin_failures) info("coin failure: " + f);
  verdict(3, "coin bound", coin_ok,
          std::to_string(audit.tree_runs) + " tree runs / " +
              std::to_string(audit.audited_ops) + " ops: max spent+dphi " +
              std::to_string(audit.max_net) + " (<= 2), max mean spent over 1e4-op windows " +
              fmt(audit.max_window_mean) + " (<= 2); " + steps);

  bool query_ok = audit.max_query_combines <= 2 && audit.external_failures.empty();
  verdict(4, "query cost", query_ok,
          std::to_string(audit.queries) +
              " audited query() calls plus fuzz cells: max combines " +
              std::to_string(audit.max_query_combines) + " (<= 2)");

  for (const auto& f : audit.invariant_failures) info("invariant failure: " + f);
  verdict(10, "structural invariants", audit.invariant_failures.empty(),
          std::to_string(audit.invariant_checks) + " checks, 0 allowed failures (" +
              std::to_string(audit.invariant_failures.size()) + " seen); every op on " +
              std::to_string(audit.every_op_runs) +
              " runs (fuzz, example, sorting at arity 2, range windows, n=1024 "
              "replicas); periodic checks on " +
              std::to_string(audit.periodic_runs) +
              " other runs (sorting at arity 4, 8 every 64 ops, n >= 2^10 "
              "benchmark traces every 4096 ops)");

  std::sort(verdicts.begin(), verdicts.end(),
            [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  std::cout << "\n";
  bool all = true;
  for (const auto& v : verdicts) {
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << v.id << " ("
              << v.name << "): " << v.detail << "\n";
    all = all && v.pass;
  }
  std::cout << "total " << fmt(seconds_since(start)) << " s\n";
  return all ? 0 : 1;
}
