#include <doctest.h>

#include <sstream>

#include "fixtures.hpp"
#include "tfe/metrics.hpp"

using namespace tfe;
using tfe::testing::rds;

TEST_SUITE("metrics") {

TEST_CASE("E0 buckets") {
  CHECK(e0_bucket(0.5, 16).empty());
  CHECK(e0_bucket(1.0, 16) == "1-2");
  CHECK(e0_bucket(2.0, 16) == "1-2");
  CHECK(e0_bucket(2.5, 16) == "3-4");
  CHECK(e0_bucket(4.0, 16) == "3-4");
  CHECK(e0_bucket(8.0, 16) == "5-8");
  CHECK(e0_bucket(15.0, 16) == "9-15");
  CHECK(e0_bucket(15.5, 16).empty());
  CHECK(e0_bucket(16.0, 16).empty());
}

TEST_CASE("metrics CSV is sorted, fixed-precision and round trips") {
  std::vector<MetricsRow> rows{
      {"r", 2, 10, "loss", "mean", 0.5},
      {"r", 1, 10, "loss", "mean", 1.0 / 3.0},
      {"r", 1, 5, "e0", "1-2", 2.0},
  };
  std::ostringstream a, b;
  write_metrics_csv(a, rows);
  std::reverse(rows.begin(), rows.end());
  write_metrics_csv(b, rows);
  CHECK(a.str() == b.str());
  CHECK(a.str() ==
        "run_id,seed,step,metric,key,value\n"
        "r,1,5,e0,1-2,2\n"
        "r,1,10,loss,mean,0.333333333\n"
        "r,2,10,loss,mean,0.5\n");
  std::istringstream in(a.str());
  const auto back = read_metrics_csv(in);
  REQUIRE(back.size() == 3);
  CHECK(back[1].value == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
  CHECK(back[2].seed == 2);
}

TEST_CASE("metrics CSV rejects duplicates and unsafe fields") {
  std::ostringstream out;
  CHECK_THROWS_AS(write_metrics_csv(out, {{"r", 1, 1, "m", "k", 1}, {"r", 1, 1, "m", "k", 2}}), Error);
  CHECK_THROWS_AS(write_metrics_csv(out, {{"r", 1, 1, "m", "a,b", 1}}), Error);
  std::istringstream bad("seed,value\n1,2\n");
  CHECK_THROWS_AS(read_metrics_csv(bad), Error);
  std::istringstream short_row("run_id,seed,step,metric,key,value\nr,1,2\n");
  CHECK_THROWS_AS(read_metrics_csv(short_row), Error);
}

TEST_CASE("Q error is the mean absolute gap over non-terminal pairs") {
  const GridTask t = testing::open_room();
  const StateSpace space(t);
  const auto star = optimal_q(space, 0.9);
  QTable q(1.0, 0.9);
  // Empty table: error is the mean |Q*| over non-terminal pairs.
  double expected = 0.0;
  int n = 0;
  for (int i = 0; i < space.size(); ++i) {
    if (space.terminal(i)) continue;
    for (int a = 0; a < 4; ++a) {
      expected += std::abs(star[i * 4 + a]);
      ++n;
    }
  }
  CHECK(q_error(q, space, star) == doctest::Approx(expected / n));
  std::vector<double> wrong(3, 0.0);
  CHECK_THROWS_AS(q_error(q, space, wrong), Error);
}

TEST_CASE("delusion frequency counts infeasible plan targets") {
  const GridTask t = generate_task(Family::RDS, 5, 5, 0.3, 1);
  TaskCatalog catalog(0);
  catalog.add(t);
  const StateSpace& space = catalog.space(t.task_id());
  const EnvState src = space.state(space.spawnable()[0]);
  const auto g1 = t.embedding_of(catalog.g1_keys(t.task_id()).front());
  std::vector<PlanRecord> log{
      {t.task_id(), src, {src.embedding(), 0}, false, TargetCategory::G0},
      {t.task_id(), src, {g1, 0}, false, TargetCategory::G1},
      {t.task_id(), src, {src.embedding(), 0}, false, TargetCategory::G0},
      {t.task_id(), src, {g1, 0}, false, TargetCategory::G0},
  };
  CHECK(delusion_frequency(log, catalog) == doctest::Approx(0.5));
  CHECK(delusion_frequency({}, catalog) == 0.0);
}

TEST_CASE("exact evaluator has zero E-errors") {
  const GridTask t = generate_task(Family::SSM, 5, 5, 0.2, 3);
  TaskCatalog catalog(0);
  catalog.add(t);
  Rng rng(1);
  const std::vector<std::uint64_t> ids{t.task_id()};
  const auto probes = build_probe_set(catalog, ids, 16, 50, rng);
  int per[3] = {0, 0, 0};
  for (const auto& p : probes) {
    ++per[static_cast<int>(p.category)];
    CHECK(catalog.categorize(p.task_id, p.source, p.target) == p.category);
  }
  for (int c : per) CHECK(c == 50);
  OracleEvaluator oracle(EvaluatorConfig{}, 0);
  oracle.add_task(t);
  for (auto cat : {TargetCategory::G0, TargetCategory::G1, TargetCategory::G2}) {
    const auto e = e_error(oracle, catalog, probes, cat);
    CHECK_FALSE(e.empty());
    for (const auto& [k, v] : e) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  }
  Rng again(1);
  const auto probes2 = build_probe_set(catalog, ids, 16, 50, again);
  REQUIRE(probes2.size() == probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) CHECK(probes2[i].target == probes[i].target);
}

TEST_CASE("held-out protocol runs n tasks per difficulty") {
  int calls = 0;
  const EpisodeRunner runner = [&](const GridTask& task, const EnvState&, Rng&) {
    ++calls;
    return task.difficulty() < 0.3 ? 1.0 : 0.0;
  };
  const std::vector<double> ds{0.25, 0.35};
  const OodResult r = ood_protocol(runner, Family::RDS, 6, 6, ds, 5, 7);
  CHECK(calls == 10);
  CHECK(r.mean_return == std::vector<double>{1.0, 0.0});
  CHECK(r.pooled == doctest::Approx(0.5));
  CHECK_THROWS_AS(ood_protocol(runner, Family::RDS, 6, 6, ds, 0, 7), Error);
}

}  // TEST_SUITE
