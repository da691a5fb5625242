#include <doctest.h>

#include <bit>
#include <cmath>

#include "fixtures.hpp"
#include "tfe/generator.hpp"

using namespace tfe;
using tfe::testing::grid;
using tfe::testing::rds;

namespace {

int structural(const Embedding& a, const Embedding& b) {
  return manhattan(a.position(), b.position()) +
         std::popcount(static_cast<unsigned>(a.flag_class() ^ b.flag_class()));
}

bool within_sigma(double count, double n, double p, double k) {
  return std::abs(count - n * p) <= k * std::sqrt(n * p * (1 - p));
}

}  // namespace

TEST_SUITE("generator") {

TEST_CASE("injection rates and certified categories") {
  const GridTask t = generate_task(Family::SSM, 8, 8, 0.3, 2);
  TaskCatalog catalog(0);
  catalog.add(t);
  const StateSpace& space = catalog.space(t.task_id());
  int source = -1;
  for (int i : space.spawnable()) {
    if (space.encoding(i).features.has_sword) source = i;
  }
  REQUIRE(source >= 0);
  HallucinationInjector inj(catalog, 0.03, 0.05);
  Rng rng(12);
  const int n = 40000;
  double g1 = 0, g2 = 0;
  for (int k = 0; k < n; ++k) {
    const Injection r = inj.inject(t.task_id(), source, rng);
    CHECK_FALSE(r.fallback);
    CHECK(catalog.categorize(t.task_id(), source, r.target.embedding) == r.category);
    g1 += r.category == TargetCategory::G1;
    g2 += r.category == TargetCategory::G2;
  }
  CHECK(within_sigma(g1, n, 0.03, 3));
  CHECK(within_sigma(g2, n, 0.05, 3));
  CHECK(inj.fallbacks() == 0);
}

TEST_CASE("G1 corruptions are the nearest non-members") {
  const GridTask t = generate_task(Family::RDS, 6, 6, 0.3, 5);
  TaskCatalog catalog(0);
  catalog.add(t);
  const StateSpace& space = catalog.space(t.task_id());
  HallucinationInjector inj(catalog, 0, 0);
  Rng rng(1);
  for (int i : space.spawnable()) {
    const Embedding base = space.encoding(i).features;
    const Injection r = inj.corrupt(t.task_id(), i, base, TargetCategory::G1, rng);
    CHECK(r.category == TargetCategory::G1);
    int best = 1 << 30;
    for (EmbeddingKey k : catalog.g1_keys(t.task_id())) best = std::min(best, structural(t.embedding_of(k), base));
    CHECK(structural(r.target.embedding, base) == best);
  }
}

TEST_CASE("G2 prefers dropping items from the base") {
  const GridTask t = grid(Family::SSM, {"S...", "....", "...H", "M..."});
  TaskCatalog catalog(0);
  catalog.add(t);
  const StateSpace& space = catalog.space(t.task_id());
  const int src = space.index_of(Embedding{1, 1, true, false});
  HallucinationInjector inj(catalog, 0, 0);
  Rng rng(2);
  const Injection r = inj.corrupt(t.task_id(), src, Embedding{2, 1, true, true}, TargetCategory::G2, rng);
  CHECK(r.category == TargetCategory::G2);
  CHECK(r.target.embedding.position() == Position{2, 1});
  CHECK_FALSE(r.target.embedding.has_sword);
}

TEST_CASE("missing G2 falls back or throws in strict mode") {
  const GridTask t = testing::open_room();
  TaskCatalog catalog(0);
  catalog.add(t);
  const int src = catalog.space(t.task_id()).index_of(rds(0, 0));
  Rng rng(3);
  HallucinationInjector lenient(catalog, 0, 1.0);
  const Injection r = lenient.inject(t.task_id(), src, rds(1, 1), rng);
  CHECK(r.fallback);
  CHECK(r.category == TargetCategory::G0);
  CHECK(r.target.embedding == rds(1, 1));
  CHECK(lenient.fallbacks() == 1);
  HallucinationInjector strict(catalog, 0, 1.0, true);
  try {
    strict.inject(t.task_id(), src, rds(1, 1), rng);
    FAIL("expected G2Unavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::G2Unavailable);
  }
}

TEST_CASE("one-step model replays observed frequencies") {
  OneStepModel model;
  Transition tr;
  tr.task_id = 1;
  tr.state = EnvState{0, 0, true, true};
  tr.action = Action::Right;
  tr.next = EnvState{1, 0, true, true};
  for (int k = 0; k < 3; ++k) model.fit(tr);
  tr.next = EnvState{0, 1, true, true};
  model.fit(tr);
  CHECK(model.pairs().size() == 1);
  CHECK(model.seen(1, rds(0, 0), Action::Right));
  Rng rng(4);
  CHECK_FALSE(model.sample_next(1, rds(0, 0), Action::Left, rng).has_value());
  double right = 0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) right += model.sample_next(1, rds(0, 0), Action::Right, rng)->next == rds(1, 0);
  CHECK(within_sigma(right, n, 0.75, 4));
}

TEST_CASE("corrupted simulations are reward-free, non-terminal and certified") {
  const GridTask t = generate_task(Family::SSM, 6, 6, 0.2, 9);
  TaskCatalog catalog(0);
  catalog.add(t);
  const StateSpace& space = catalog.space(t.task_id());
  OneStepModel model(&catalog, 0.2, 0.3);
  Rng rng(5);
  for (int i : space.spawnable()) {
    for (Action a : kAllActions) {
      const auto r = step(t, space.state(i), a);
      model.fit({t.task_id(), 0, 0, space.state(i), a, r.reward, r.state, r.terminal});
    }
  }
  int corrupted = 0, total = 0;
  for (int k = 0; k < 5000; ++k) {
    const auto& p = model.pairs()[uniform_index(rng, model.pairs().size())];
    const auto out = model.sample_next(p.task_id, p.state, p.action, rng);
    ++total;
    if (!out->corrupted) continue;
    ++corrupted;
    CHECK(out->reward == 0.0);
    CHECK_FALSE(out->terminal);
    CHECK(catalog.categorize(p.task_id, space.index_of(p.state), out->next) == out->category);
  }
  CHECK(corrupted > 0.4 * total);
  CHECK(corrupted < 0.6 * total);
}

TEST_CASE("target sampler learns future pairs") {
  std::vector<Transition> ep;
  for (int t = 0; t < 3; ++t) {
    Transition tr;
    tr.task_id = 1;
    tr.t = t;
    tr.state = EnvState{t, 0, true, true};
    tr.next = EnvState{t + 1, 0, true, true};
    ep.push_back(tr);
  }
  ConditionalTargetSampler sampler(1.0);
  sampler.fit_future(ep);
  CHECK(sampler.knows(1, rds(0, 0)));
  CHECK(sampler.knows(1, rds(1, 0)));
  CHECK_FALSE(sampler.knows(1, rds(2, 0)));
  CHECK(sampler.probability(1, rds(0, 0), rds(1, 0)) == doctest::Approx(0.5));
  CHECK(sampler.probability(1, rds(0, 0), rds(0, 0)) == 0.0);
  sampler.fit(1, rds(0, 0), rds(2, 0));
  ConditionalTargetSampler greedy(0.0);
  greedy.fit_future(ep);
  greedy.fit(1, rds(0, 0), rds(2, 0));
  Rng rng(6);
  for (const auto& e : greedy.sample(1, rds(0, 0), 10, rng)) CHECK(e == rds(2, 0));
  CHECK(greedy.sample(1, rds(3, 3), 2, rng).empty());
}

TEST_CASE("candidate generator pads with reachable states") {
  const GridTask t = generate_task(Family::RDS, 6, 6, 0.2, 10);
  TaskCatalog catalog(1);
  catalog.add(t);
  const StateSpace& space = catalog.space(t.task_id());
  HallucinationInjector inj(catalog, 0.0, 0.0);
  CandidateGenerator gen(catalog, nullptr, inj);
  Rng rng(7);
  const int src = space.spawnable()[0];
  const auto c = gen.candidates(t.task_id(), space.state(src), 12, rng);
  CHECK(c.size() == 12);
  for (const auto& x : c) {
    CHECK(x.category == TargetCategory::G0);
    CHECK(x.target.radius == 1);
    CHECK(catalog.categorize(t.task_id(), src, x.target.embedding) == TargetCategory::G0);
  }
}

}  // TEST_SUITE
