#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "fiba/bench.hpp"
#include "fiba/finger_btree.hpp"
#include "fiba/oracle.hpp"

using namespace fiba;
using namespace fiba::bench;

namespace {

ExperimentConfig small(const std::string& experiment) {
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  cfg.n = 256;
  cfg.ops = 2000;
  return cfg;
}

double metric(const Report& r, const std::string& engine,
              const std::string& name, std::size_t d) {
  for (const auto& row : r.rows)
    if (row.engine == engine && row.metric == name && row.d == d)
      return row.value;
  FAIL("missing metric " << engine << " " << name << " d=" << d);
  return 0;
}

}  // namespace

TEST_CASE("percentiles") {
  std::vector<double> xs;
  for (int i = 1; i <= 100; ++i) xs.push_back(101 - i);
  CHECK(percentile(xs, 0.0) == 1);
  CHECK(percentile(xs, 1.0) == 100);
  CHECK(percentile(xs, 0.999) == 100);
  CHECK(percentile(xs, 0.5) == 50);
  CHECK(percentile(xs, 0.01) == 1);
  CHECK(percentile(xs, 0.011) == 2);
  CHECK(percentile({7.0}, 0.3) == 7.0);
  CHECK_THROWS_AS(percentile({}, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(percentile(xs, 1.5), std::invalid_argument);

  auto s = summarize({5, 3, 9, 1, 7});
  CHECK(s.min <= s.median);
  CHECK(s.median <= s.p999);
  CHECK(s.p999 <= s.max);
  CHECK(s.min == 1);
  CHECK(s.max == 9);
}

TEST_CASE("configuration defaults and errors") {
  auto cfg = normalize(small("distance"));
  CHECK(cfg.sweep.front() == 0);
  CHECK(cfg.sweep.back() == 256);
  CHECK(cfg.engines == std::vector<std::string>{"classic", "fiba"});

  ExperimentConfig blank;
  blank.experiment = "fuzz";
  blank.n = 0;
  blank.ops = 0;
  CHECK(normalize(blank).n == 256);
  CHECK(normalize(blank).ops == 100000);
  blank.experiment = "distance";
  blank.metrics = Metrics::wallclock;
  CHECK(normalize(blank).ops == 1000000);
  CHECK(normalize(blank).n == 65536);

  auto bad = [](auto mutate) {
    auto c = small("distance");
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(normalize(bad([](auto& c) { c.experiment = "nope"; })), ConfigError);
  CHECK_THROWS_AS(normalize(bad([](auto& c) { c.sweep = {300}; })), ConfigError);
  CHECK_THROWS_AS(normalize(bad([](auto& c) { c.engines = {"heap"}; })), ConfigError);
  CHECK_THROWS_AS(normalize(bad([](auto& c) { c.engines = {"two_stacks"}; })), ConfigError);
  CHECK_THROWS_AS(normalize(bad([](auto& c) { c.operators = {"median"}; })), ConfigError);
  CHECK_THROWS_AS(normalize(bad([](auto& c) { c.min_arities = {1}; })), ConfigError);
  CHECK_THROWS_AS(normalize(bad([](auto& c) {
                    c.experiment = "sharing";
                    c.engines = {"oracle"};
                  })),
                  ConfigError);
  CHECK_THROWS_AS(normalize(bad([](auto& c) {
                    c.experiment = "sharing";
                    c.sweep = {0};
                  })),
                  ConfigError);
  CHECK_NOTHROW(normalize(bad([](auto& c) {
    c.experiment = "fifo";
    c.engines = {"two_stacks"};
  })));
}

TEST_CASE("CSV layout") {
  std::ostringstream out;
  write_csv(out, {{"distance", "fiba", 2, "sum", 256, 4, "visited_per_op", 3.5},
                  {"fifo", "two_stacks", 0, "sum", 1024, 0, "ops_per_s", 1e7}});
  CHECK(out.str() ==
        "experiment,engine,min_arity,operator,n,d,metric,value\n"
        "distance,fiba,2,sum,256,4,visited_per_op,3.5\n"
        "fifo,two_stacks,0,sum,1024,0,ops_per_s,10000000\n");
}

TEST_CASE("distance experiment covers the sweep") {
  auto cfg = small("distance");
  cfg.sweep = {0, 1, 8, 64, 256};
  auto r = run_distance(cfg);
  CHECK(r.failures.empty());
  std::set<std::size_t> ds;
  for (const auto& row : r.rows) ds.insert(row.d);
  CHECK(ds == std::set<std::size_t>{0, 1, 8, 64, 256});
  CHECK(metric(r, "fiba", "visited_per_op", 0) <
        metric(r, "classic", "visited_per_op", 0));
  CHECK(metric(r, "fiba", "spent_per_op", 256) == 0);
  for (const auto& row : r.rows)
    if (row.metric == "oracle_match" || row.metric == "coin_bound_ok")
      CHECK(row.value == 1);
}

TEST_CASE("latency experiment") {
  auto cfg = small("latency");
  cfg.sweep = {0};
  auto a = run_latency(cfg);
  cfg.seed = 2;
  auto b = run_latency(cfg);
  CHECK(a.failures.empty());
  for (const auto& engine : {"classic", "fiba"}) {
    double lo = metric(a, engine, "latency_work_min", 0);
    double med = metric(a, engine, "latency_work_median", 0);
    double tail = metric(a, engine, "latency_work_p999", 0);
    double hi = metric(a, engine, "latency_work_max", 0);
    CHECK(lo <= med);
    CHECK(med <= tail);
    CHECK(tail <= hi);
    double other = metric(b, engine, "latency_work_median", 0);
    CHECK(other <= 2 * med);
    CHECK(med <= 2 * other);
  }
  CHECK(metric(a, "fiba", "latency_work_median", 0) <
        metric(a, "classic", "latency_work_median", 0));
}

TEST_CASE("fifo experiment includes two-stacks") {
  auto cfg = small("fifo");
  cfg.n = 4096;
  auto r = run_fifo(cfg);
  CHECK(r.failures.empty());
  CHECK(metric(r, "two_stacks", "oracle_match", 0) == 1);
  // Sweep is 1024 and 4096; fiba's visits are flat, classic's grow.
  double f1 = 0, f2 = 0, c1 = 0, c2 = 0;
  for (const auto& row : r.rows) {
    if (row.metric != "visited_per_op") continue;
    if (row.engine == "fiba") (row.n == 1024 ? f1 : f2) = row.value;
    if (row.engine == "classic") (row.n == 1024 ? c1 : c2) = row.value;
  }
  CHECK(f2 == doctest::Approx(f1).epsilon(0.05));
  CHECK(c2 >= c1 + 1);
}

TEST_CASE("sharing experiment") {
  auto cfg = small("sharing");
  cfg.sweep = {4, 64};
  cfg.engines = {"fiba", "classic"};
  auto r = run_sharing(cfg);
  CHECK(r.failures.empty());
  CHECK(metric(r, "fiba", "answers_agree", 4) == 1);
  CHECK(metric(r, "fiba_range", "oracle_match", 64) == 1);
  CHECK(metric(r, "classic", "answers_agree", 64) == 1);
  CHECK(metric(r, "fiba_range", "range_combines_per_query", 4) <
        metric(r, "fiba_range", "range_combines_per_query", 64));
}

TEST_CASE("fuzz experiment") {
  auto cfg = small("fuzz");
  cfg.n = 64;
  cfg.operators = {"concat", "geomean"};
  cfg.min_arities = {2, 3};
  auto r = run_fuzz(cfg);
  CHECK(r.failures.empty());
  for (const auto& row : r.rows) {
    if (row.metric == "mismatches") CHECK(row.value == 0);
    if (row.metric == "invariant_checks") CHECK(row.value == 2000);
  }
}

TEST_CASE("replay instruments each phase") {
  auto trace = workload::adversarial_distance(64, 4, 100, 1);
  FingerBTree<SumOp> t(2);
  RebalanceLedger ledger;
  ReplayOptions opt;
  opt.per_round = true;
  opt.check_every = 1;
  opt.ledger = &ledger;
  std::size_t answers = 0;
  auto r = replay(t, trace, opt, [&](std::size_t, std::int64_t) { ++answers; });
  CHECK(answers == 100);
  CHECK(r.measured.ops == 300);
  CHECK(r.round_cost.size() == 100);
  CHECK(ledger.ops() == trace.ops.size());
  CHECK(ledger.ok());
  CHECK(r.measured.count_by_kind[kind_index(OpKind::query)] == 100);
  CHECK(t.query() == reference_final(SumOp{}, trace));
}

TEST_CASE("trace files replay on every engine") {
  auto trace = workload::fuzz({3000, 64, 2});
  ExperimentConfig cfg;
  cfg.engines = {"oracle", "classic", "fiba"};
  cfg.operators = {"maxcount"};
  auto r = run_trace_file(cfg, trace);
  CHECK(r.failures.empty());
  std::size_t matches = 0;
  for (const auto& row : r.rows)
    if (row.metric == "oracle_match") matches += row.value == 1;
  CHECK(matches == 3);
}
