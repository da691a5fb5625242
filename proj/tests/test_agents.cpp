#include <doctest.h>

#include <cmath>
#include <functional>

#include "fixtures.hpp"
#include "tfe/agents.hpp"

using namespace tfe;
using tfe::testing::grid;
using tfe::testing::rds;

namespace {

// Evaluator answering from a fixed function of (source, target).
class StubEvaluator final : public Evaluator {
 public:
  using Fn = std::function<DistanceHistogram(const Embedding&, const Embedding&)>;
  StubEvaluator(int T, Fn fn) : Evaluator(make_config(T)), fn_(std::move(fn)) {}
  void save(const std::filesystem::path&) const override {}

 protected:
  DistanceHistogram predict_impl(const EvalQuery& q, Action, bool) const override {
    return fn_(q.source, q.target);
  }
  double apply_update(std::span<const BackupSample>, std::span<const DistanceHistogram>) override {
    return 0.0;
  }

 private:
  static EvaluatorConfig make_config(int T) {
    EvaluatorConfig c;
    c.support_size = T;
    return c;
  }
  Fn fn_;
};

}  // namespace

TEST_SUITE("agents") {

TEST_CASE("epsilon decays linearly then holds") {
  const EpsilonSchedule e{1.0, 0.1, 10};
  CHECK(e.at(0) == 1.0);
  CHECK(e.at(5) == doctest::Approx(0.55));
  CHECK(e.at(10) == doctest::Approx(0.1));
  CHECK(e.at(1000) == doctest::Approx(0.1));
}

TEST_CASE("Q-learning update arithmetic") {
  QTable q(0.5, 0.9);
  q.update(1, rds(0, 0), Action::Right, 0.0, rds(1, 0), false);
  CHECK(q.q(1, rds(0, 0), Action::Right) == 0.0);
  q.update(1, rds(1, 0), Action::Right, 1.0, rds(2, 0), true);
  CHECK(q.q(1, rds(1, 0), Action::Right) == 0.5);
  q.update(1, rds(0, 0), Action::Right, 0.0, rds(1, 0), false);
  CHECK(q.q(1, rds(0, 0), Action::Right) == doctest::Approx(0.5 * 0.9 * 0.5));
  CHECK(q.greedy(1, rds(0, 0)) == Action::Right);
  CHECK(q.greedy(1, rds(3, 3)) == Action::Up);
  CHECK(q.value(2, rds(0, 0)) == 0.0);
}

TEST_CASE("sweeping Q-learning reaches the optimal Q") {
  const GridTask t = generate_task(Family::SSM, 5, 5, 0.2, 3);
  const StateSpace space(t);
  const double g = 0.9;
  QTable q(1.0, g);
  for (int sweep = 0; sweep < 200; ++sweep) {
    for (int i = 0; i < space.size(); ++i) {
      if (space.terminal(i)) continue;
      for (Action a : kAllActions) {
        const auto r = step(t, space.state(i), a);
        q.update(t.task_id(), space.encoding(i).features, a, r.reward, r.state.embedding(),
                 r.terminal);
      }
    }
  }
  const auto dense = q.dense(space);
  const auto star = optimal_q(space, g);
  for (std::size_t k = 0; k < dense.size(); ++k) CHECK(dense[k] == doctest::Approx(star[k]).epsilon(1e-9));
}

TEST_CASE("the feasibility gate rejects certified-infeasible simulations only") {
  const GridTask t = generate_task(Family::SSM, 6, 6, 0.2, 4);
  TaskCatalog catalog(0);
  catalog.add(t);
  const StateSpace& space = catalog.space(t.task_id());
  OracleEvaluator oracle(EvaluatorConfig{}, 0);
  oracle.add_task(t);
  for (double rate : {0.0, 0.5}) {
    OneStepModel model(&catalog, rate / 2, rate / 2);
    DynaConfig dc;
    dc.threshold = 0.05;
    dc.n_sim = 20;
    DynaAgent agent(dc, model, &oracle, &catalog);
    Rng rng(5);
    DynaStats total;
    for (int i : space.spawnable()) {
      const auto r = step(t, space.state(i), Action::Down);
      const Transition tr{t.task_id(), 0, 0, space.state(i), Action::Down, r.reward, r.state, r.terminal};
      model.fit(tr);
      total += agent.dyna_step(tr, rng);
    }
    CHECK(total.feasible_rejected == 0);
    CHECK(total.infeasible_rejected == total.infeasible);
    CHECK(total.applied + total.rejected + total.abstained ==
          static_cast<std::int64_t>(space.spawnable().size()) * dc.n_sim);
    if (rate == 0.0) CHECK(total.rejected == 0);
    if (rate > 0.0) CHECK(total.infeasible > 0);
  }
}

TEST_CASE("plan selection follows the best discounted path") {
  PlanGraph g;
  g.vertices = {rds(0, 0), rds(1, 0), rds(3, 3)};
  g.source_candidate = {-1, 0, -1};
  g.infeasible = {false, false, false};
  g.discount.assign(9, 0.0);
  g.edge(0, 1) = 0.9;
  g.edge(1, 2) = 0.9;
  g.edge(0, 2) = 0.5;
  auto s = plan_and_select(g);
  CHECK(s.vertex == 1);
  CHECK_FALSE(s.direct_goal);
  CHECK(s.values[0] == doctest::Approx(0.81));
  g.edge(0, 2) = 0.85;
  s = plan_and_select(g);
  CHECK(s.direct_goal);
  CHECK(s.target == rds(3, 3));
  g.edge(0, 2) = 0.0;
  g.edge(0, 1) = 0.0;
  s = plan_and_select(g);
  CHECK(s.direct_goal);  // nothing reachable: head for the goal
}

TEST_CASE("plus evaluator disconnects an infeasible shortcut") {
  // The stub claims the lava cell (1,1) is one step from everything and one
  // step from the goal; the oracle knows it matches no state.
  const GridTask t = grid(Family::RDS, {"....", ".L..", "....", "...G"});
  const Embedding lava = rds(1, 1);
  const Embedding goal = t.goal_embedding();
  StubEvaluator optimist(16, [&](const Embedding& from, const Embedding& to) {
    if (from == lava || to == lava) return DistanceHistogram::point_mass(16, 1);
    return DistanceHistogram::point_mass(16, 6);
  });
  OracleEvaluator oracle(EvaluatorConfig{}, 0);
  oracle.add_task(t);
  PlannerConfig pc;
  pc.tau = 8;
  const std::vector<Target> cands{{lava, 0}, {rds(2, 0), 0}};

  const PlanGraph base = build_plan_graph(t.task_id(), rds(0, 0), cands, goal, optimist, nullptr, pc);
  const Selection bs = plan_and_select(base);
  CHECK(bs.target == lava);

  const PlanGraph plus = build_plan_graph(t.task_id(), rds(0, 0), cands, goal, optimist, &oracle, pc);
  const Selection ps = plan_and_select(plus);
  CHECK(ps.target != lava);
  for (int v = 0; v < plus.size(); ++v) {
    if (!(plus.vertices[v] == lava)) continue;
    CHECK(plus.infeasible[v]);
    for (int u = 0; u < plus.size(); ++u) CHECK(plus.edge(u, v) == 0.0);
  }
}

TEST_CASE("plan graph drops duplicates and unreachable vertices") {
  const GridTask t = testing::open_room();
  StubEvaluator ev(16, [](const Embedding& from, const Embedding& to) {
    // Only (0,0) -> (1,0) and (1,0) -> goal are connected.
    if (from == rds(0, 0) && to == rds(1, 0)) return DistanceHistogram::point_mass(16, 1);
    if (from == rds(1, 0) && to == rds(3, 3)) return DistanceHistogram::point_mass(16, 5);
    return DistanceHistogram::overflow(16);
  });
  const std::vector<Target> cands{{rds(1, 0), 0}, {rds(1, 0), 0}, {rds(2, 2), 0}, {rds(3, 3), 0}};
  PlannerConfig pc;
  const PlanGraph g = build_plan_graph(t.task_id(), rds(0, 0), cands, rds(3, 3), ev, nullptr, pc);
  REQUIRE(g.size() == 3);
  CHECK(g.vertices[1] == rds(1, 0));
  CHECK(g.edge(0, 1) == doctest::Approx(std::pow(0.95, 1)));
  CHECK(g.edge(1, 2) == doctest::Approx(std::pow(0.95, 5)));
}

TEST_CASE("planner with exact evaluators solves an open room") {
  const GridTask t = generate_task(Family::RDS, 6, 6, 0.15, 2);
  TaskCatalog catalog(0);
  catalog.add(t);
  OracleEvaluator oracle(EvaluatorConfig{}, 0);
  oracle.add_task(t);
  HallucinationInjector inj(catalog, 0.1, 0.0);
  CandidateGenerator gen(catalog, nullptr, inj);
  PlannerAgent agent(PlannerConfig{}, gen, oracle, oracle, &oracle, 0);
  Rng rng(3);
  const EnvState start = reset(t, InitMode::FixedFarthest, rng);
  const auto r = agent.run_episode(t, start, 100, rng);
  CHECK(r.success);
  CHECK(r.ret == 1.0);
  CHECK(r.steps == catalog.space(t.task_id()).steps_to_success()[catalog.space(t.task_id()).index_of(start)]);
  for (const auto& p : r.plans) {
    CHECK(catalog.categorize(t.task_id(), catalog.space(t.task_id()).index_of(p.source), p.target.embedding) ==
          TargetCategory::G0);
  }
}

}  // TEST_SUITE
