// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures. Tolerances and sizes are pinned here.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "tfe/run.hpp"

using namespace tfe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s %s: %s (%.1fs)\n", o.passed ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
  failures += !o.passed;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// One-sided paired t-test of mean(x - y) > 0.
double paired_p(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  const double m = mean(d);
  double ss = 0.0;
  for (double v : d) ss += (v - m) * (v - m);
  const double n = static_cast<double>(d.size());
  const double se = std::sqrt(ss / (n - 1) / n);
  if (se == 0.0) return m > 0.0 ? 0.0 : 1.0;
  const boost::math::students_t dist(n - 1);
  return boost::math::cdf(boost::math::complement(dist, m / se));
}

std::vector<double> random_hist(int T, Rng& rng) {
  std::vector<double> p(T);
  double total = 0.0;
  for (double& v : p) total += (v = uniform01(rng) * (uniform01(rng) < 0.3 ? 0.0 : 1.0));
  if (total == 0.0) {
    p[uniform_index(rng, T)] = 1.0;
    return p;
  }
  for (double& v : p) v /= total;
  return p;
}

Outcome backup_shift() {
  Rng rng(101);
  int bad = 0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const int T = 2 + static_cast<int>(uniform_index(rng, 31));
    const auto p = random_hist(T, rng);
    const DistanceHistogram succ(p);
    std::vector<double> hit(T, 0.0), term(T, 0.0), shifted(T, 0.0);
    hit[0] = 1.0;
    term[T - 1] = 1.0;
    for (int b = 1; b < T - 1; ++b) shifted[b] = p[b - 1];
    shifted[T - 1] = p[T - 2] + p[T - 1];
    const bool ok = backup_target(true, false, succ).probs().size() == static_cast<std::size_t>(T) &&
                    std::equal(hit.begin(), hit.end(), backup_target(true, false, succ).probs().begin()) &&
                    std::equal(term.begin(), term.end(), backup_target(false, true, succ).probs().begin()) &&
                    std::equal(shifted.begin(), shifted.end(), backup_target(false, false, succ).probs().begin());
    bad += !ok;
  }
  return {bad == 0, std::to_string(n) + " random histograms, " + std::to_string(bad) + " mismatches"};
}

struct L1Result {
  double mean = 0.0;
  double worst = 0.0;
  std::size_t pairs = 0;
};

// Trains a tabular evaluator on episode-relabeled random walks and compares it
// with the oracle over every (source, target) pair the relabeling produced.
L1Result oracle_l1(bool final_successor) {
  const int T = 16;
  const GridTask task = generate_task(Family::RDS, 8, 8, 0.2, 7);
  const StateSpace space(task);
  EvaluatorConfig ec;
  ec.form = ContinuationForm::Evaluation;
  ec.support_size = T;
  // Deterministic moves and a fixed continuation policy make every cell's
  // target exact once its successors are, so cells take the full step.
  ec.learning_rate = 1.0;
  TabularEvaluator ev(ec);
  ev.set_continuation_policy([](std::uint64_t, const Embedding&) {
    return ActionProbs{0.25, 0.25, 0.25, 0.25};
  });

  // Uniform-random walks from every non-terminal start. Walks are short here
  // (lava is dense), so far-apart pairs need a large store to co-occur.
  ReplayStore store(4000000, 0, final_successor);
  Rng env(1), relabel(2);
  std::int64_t episode = 0;
  while (store.size() < 4000000) {
    EnvState s = reset(space, InitMode::AllNonterminal, env);
    for (int t = 0; t < 100 && !s.terminal; ++t) {
      const Action a = action_from_index(static_cast<int>(uniform_index(env, kNumActions)));
      const auto r = step(task, s, a);
      store.push({task.task_id(), episode, t, s, a, r.reward, r.state, r.terminal});
      s = r.state;
    }
    ++episode;
  }
  const RelabelMix mix = RelabelMix::only(Strategy::Episode);
  for (int it = 0; it < 1000000; ++it) {
    const auto batch = store.sample_batch(mix, 64, nullptr, relabel);
    std::vector<BackupSample> samples;
    for (const auto& b : batch) samples.push_back(b.backup());
    ev.train_batch(samples);
  }

  std::map<std::pair<EmbeddingKey, EmbeddingKey>, bool> pairs;
  for (int it = 0; it < 20000; ++it) {
    for (const auto& b : store.sample_batch(mix, 64, nullptr, relabel)) {
      pairs[{task.key_of(b.transition.state.embedding()), task.key_of(b.target.embedding)}] = true;
    }
  }
  std::map<EmbeddingKey, DistanceDistributionTable> tables;
  L1Result out;
  double total = 0.0;
  for (const auto& [key, _] : pairs) {
    const Embedding target = task.embedding_of(key.second);
    auto it = tables.find(key.second);
    if (it == tables.end()) {
      it = tables.emplace(key.second, distance_distribution(space, PolicySpec::uniform_random(),
                                                            Target{target, 0}, T)).first;
    }
    const Embedding source = task.embedding_of(key.first);
    const double l1 = l1_distance(ev.predict({task.task_id(), source, target}),
                                  it->second.at(space.index_of(source)));
    total += l1;
    out.worst = std::max(out.worst, l1);
  }
  out.pairs = pairs.size();
  out.mean = total / static_cast<double>(pairs.size());
  return out;
}

Outcome oracle_equivalence() {
  // Episodes end at their last transition's source. With the final successor
  // included the goal becomes a target, but no goal-reaching episode ever
  // steps into lava, so those cells keep their uniform prior; reported only.
  const L1Result r = oracle_l1(false);
  const L1Result with_goal = oracle_l1(true);
  return {r.mean <= 0.05,
          fmt("mean L1 %.4f over %.0f pairs (max %.3f), tolerance 0.05; ", r.mean,
              static_cast<double>(r.pairs), r.worst) +
              fmt("with final successors %.4f over %.0f pairs", with_goal.mean,
                  static_cast<double>(with_goal.pairs))};
}

Outcome theorem1_suite() {
  Rng rng(303);
  int held = 0, with_removed = 0;
  const int n = 100;
  for (int k = 0; k < n; ++k) {
    const Family fam = k % 2 ? Family::SSM : Family::RDS;
    const GridTask task = generate_task(fam, 6, 6, 0.3, derive_seed(404, k));
    const StateSpace space(task);
    TaskCatalog catalog(0);
    catalog.add(task);
    const int source = space.spawnable()[uniform_index(rng, space.spawnable().size())];
    std::vector<Target> members;
    const auto g0 = catalog.g0_keys(task.task_id(), source);
    const auto g1 = catalog.g1_keys(task.task_id());
    const auto g2 = catalog.g2_keys(task.task_id(), source);
    members.push_back({task.embedding_of(g0[uniform_index(rng, g0.size())]), 0});
    if (!g1.empty()) members.push_back({task.embedding_of(g1[uniform_index(rng, g1.size())]), 0});
    if (!g2.empty()) members.push_back({task.embedding_of(g2[uniform_index(rng, g2.size())]), 0});
    for (int m = 0; m < 2; ++m) {
      members.push_back({task.embedding_of(static_cast<EmbeddingKey>(
                             uniform_index(rng, task.embedding_space_size()))),
                         0});
    }
    const int tau = 1 + static_cast<int>(uniform_index(rng, 15));
    const PolicySpec policy = k % 4 < 2 ? PolicySpec::uniform_random() : PolicySpec::greedy_to_target();
    const auto r = theorem1_check(space, source, members, tau, policy, 16);
    held += r.holds();
    with_removed += r.removed_members > 0;
  }
  return {held == n, std::to_string(held) + "/" + std::to_string(n) + " tuples exact (" +
                         std::to_string(with_removed) + " with infeasible members)"};
}

Outcome support_swap() {
  Rng rng(505);
  double worst = 0.0;
  int checked = 0;
  // Random histograms against the hand sum.
  for (int k = 0; k < 2000; ++k) {
    const int T = 2 + static_cast<int>(uniform_index(rng, 31));
    const auto p = random_hist(T, rng);
    const double g = uniform01(rng);
    const int tau = 1 + static_cast<int>(uniform_index(rng, T - 1));
    double hand = 0.0;
    for (int t = 1; t <= T - 1; ++t) hand += p[t - 1] * std::pow(g, std::min(t, tau));
    hand += p[T - 1] * std::pow(g, tau);
    worst = std::max(worst, std::abs(expected_discount(DistanceHistogram(p), g, tau) - hand));
    ++checked;
  }
  // Oracle tables against a discounted first-hit recursion over the state graph.
  for (int k = 0; k < 6; ++k) {
    const GridTask task = generate_task(k % 2 ? Family::SSM : Family::RDS, 5, 5, 0.25, 600 + k);
    const StateSpace space(task);
    const int T = 16;
    const double g = 0.9;
    const Embedding target = space.encoding(space.spawnable().back()).features;
    const auto match = match_mask(space, Target{target, 0});
    const auto table = distance_distribution(space, PolicySpec::uniform_random(), match, T);
    for (int tau = 1; tau < T; ++tau) {
      std::vector<double> w(space.size(), 1.0);
      for (int step = 1; step <= tau; ++step) {
        std::vector<double> next(space.size(), 0.0);
        for (int i = 0; i < space.size(); ++i) {
          if (space.terminal(i)) continue;
          for (Action a : kAllActions) {
            const int j = space.successor(i, a);
            double v;
            if (j != StateSpace::kDead && match[j]) v = g;
            else if (j == StateSpace::kDead || space.terminal(j)) v = std::pow(g, step);
            else v = g * w[j];
            next[i] += 0.25 * v;
          }
        }
        w = next;
      }
      for (int i = 0; i < space.size(); ++i) {
        if (space.terminal(i)) continue;
        worst = std::max(worst, std::abs(expected_discount(table.at(i), g, tau) - w[i]));
        ++checked;
      }
    }
  }
  return {worst <= 1e-12, fmt("%.0f comparisons, max deviation %.2e, tolerance 1e-12",
                              static_cast<double>(checked), worst)};
}

Outcome dyna_rejection() {
  RunConfig cfg;
  cfg.family = Family::SSM;
  cfg.n_train_tasks = 10;
  const auto tasks = training_tasks(cfg);
  TaskCatalog catalog(0);
  for (const auto& t : tasks) catalog.add(t);
  OneStepModel model(&catalog, 0.03, 0.05);
  ModelTargetGenerator generator(model);
  EvaluatorConfig ec;
  TabularEvaluator ev(ec);
  ReplayStore store(200000, 0);

  Rng env(11), relabel(12), sim(13);
  std::int64_t episode = 0;
  std::vector<Transition> seen;
  while (store.size() < 50000) {
    const GridTask& task = tasks[uniform_index(env, tasks.size())];
    EnvState s = reset(task, InitMode::AllNonterminal, env);
    for (int t = 0; t < 100 && !s.terminal; ++t) {
      const Action a = action_from_index(static_cast<int>(uniform_index(env, kNumActions)));
      const auto r = step(task, s, a);
      const Transition tr{task.task_id(), episode, t, s, a, r.reward, r.state, r.terminal};
      store.push(tr);
      model.fit(tr);
      seen.push_back(tr);
      s = r.state;
    }
    ++episode;
  }
  // Evaluator trained to convergence on the fixed data.
  for (int it = 0; it < 100000; ++it) {
    const auto batch = store.sample_batch(RelabelMix::fepg(), 32, &generator, relabel);
    std::vector<BackupSample> samples;
    for (const auto& b : batch) samples.push_back(b.backup());
    ev.train_batch(samples);
  }

  DynaConfig dc;
  dc.threshold = 0.05;
  DynaAgent agent(dc, model, &ev, &catalog);
  DynaStats total;
  while (total.applied + total.rejected + total.abstained < 10000) {
    total += agent.dyna_step(seen[uniform_index(sim, seen.size())], sim);
  }
  const double inf_rate = static_cast<double>(total.infeasible_rejected) / static_cast<double>(total.infeasible);
  const double feas_rate = static_cast<double>(total.feasible_rejected) / static_cast<double>(total.feasible);
  return {total.infeasible > 0 && inf_rate >= 0.80 && feas_rate <= 0.10,
          fmt("infeasible rejected %.3f of %.0f (need >= 0.80), feasible rejected %.3f of %.0f (need <= 0.10)",
              inf_rate, static_cast<double>(total.infeasible), feas_rate,
              static_cast<double>(total.feasible))};
}

RunConfig base_config(AgentKind agent) {
  RunConfig c;
  c.agent = agent;
  c.family = Family::SSM;
  c.n_train_tasks = 10;
  return c;
}

Outcome dyna_plus_improvement() {
  const int seeds = 20;
  std::vector<double> qe_plain, qe_plus, ret_plain, ret_plus;
  for (int s = 0; s < seeds; ++s) {
    RunConfig c = base_config(AgentKind::Dyna);
    c.total_steps = 30000;
    c.snapshot_every = 5000;
    const auto plain = run_seed(c, s).summary;
    c.agent = AgentKind::DynaPlus;
    const auto plus = run_seed(c, s).summary;
    qe_plain.push_back(plain.final_q_error);
    qe_plus.push_back(plus.final_q_error);
    ret_plain.push_back(plain.final_train_return);
    ret_plus.push_back(plus.final_train_return);
  }
  const double p_q = paired_p(qe_plain, qe_plus);
  const double p_r = paired_p(ret_plus, ret_plain);
  const bool ok = mean(qe_plus) <= mean(qe_plain) && mean(ret_plus) >= mean(ret_plain) && p_q < 0.05 &&
                  p_r < 0.05;
  return {ok, fmt("q_error %.4f vs %.4f (p=%.2g), ", mean(qe_plus), mean(qe_plain), p_q) +
                  fmt("return %.4f vs %.4f (p=%.2g), 20 seeds", mean(ret_plus), mean(ret_plain), p_r)};
}

Outcome relabel_ablation() {
  const int seeds = 10;
  std::vector<double> episode_only, mixed;
  for (int s = 0; s < seeds; ++s) {
    RunConfig c = base_config(AgentKind::Random);
    c.total_steps = 20000;
    c.snapshot_every = 20000;
    c.probe_pairs = 300;
    c.mix = RelabelMix::only(Strategy::Episode);
    episode_only.push_back(run_seed(c, s).summary.final_e2);
    c.mix = RelabelMix::parse("episode:0.5,pertask:0.5");
    mixed.push_back(run_seed(c, s).summary.final_e2);
  }
  const double p = paired_p(episode_only, mixed);
  return {mean(episode_only) > mean(mixed) && p < 0.05,
          fmt("E2 episode-only %.3f vs mixed %.3f, p=%.2g, 10 seeds", mean(episode_only), mean(mixed), p)};
}

Outcome planner_delusion() {
  // Planner and planner+ train identical estimators, so each seed trains once
  // and both planners run on the same networks. A tabular estimator reads
  // unseen cells as uniform and never proposes shortcuts, hence the
  // feedforward backend; tau = T-1 because the overflow floor gamma^tau
  // otherwise makes the direct edge to the goal beat every subgoal path.
  const int seeds = 10;
  std::vector<double> base, plus;
  std::int64_t base_plans = 0, plus_plans = 0;
  for (int s = 0; s < seeds; ++s) {
    RunConfig c = base_config(AgentKind::PlannerPlus);
    c.width = 5;
    c.height = 5;
    c.difficulty = 0.2;
    c.n_train_tasks = 1;
    c.task_seed = static_cast<std::uint64_t>(s);
    c.total_steps = 100000;
    c.snapshot_every = c.total_steps;
    c.planner_eval_episodes = 0;
    c.probe_pairs = 50;
    c.p_g1 = 0.1;
    c.p_g2 = 0.1;
    c.planner.tau = 15;
    c.evaluator.backend = Backend::Feedforward;
    c.evaluator.learning_rate = 1e-3;
    c.evaluator.sync_period = 1000;
    c.evaluator.hidden_width = 64;
    const SeedRun run = run_seed(c, static_cast<std::uint64_t>(s));
    const auto tasks = training_tasks(c);
    TaskCatalog catalog(0);
    for (const auto& t : tasks) catalog.add(t);
    for (const bool gated : {false, true}) {
      HallucinationInjector injector(catalog, c.p_g1, c.p_g2);
      CandidateGenerator gen(catalog, nullptr, injector);
      PlannerAgent agent(c.planner, gen, *run.edges, *run.edges, gated ? run.evaluator.get() : nullptr,
                         c.radius);
      Rng rng(derive_seed(static_cast<std::uint64_t>(s), 99));
      std::vector<PlanRecord> log;
      for (int e = 0; e < 40; ++e) {
        const GridTask& t = tasks[0];
        auto r = agent.run_episode(t, reset(t, InitMode::FixedFarthest, rng), c.max_episode_steps, rng);
        log.insert(log.end(), r.plans.begin(), r.plans.end());
      }
      (gated ? plus : base).push_back(delusion_frequency(log, catalog));
      (gated ? plus_plans : base_plans) += static_cast<std::int64_t>(log.size());
    }
  }
  const double p = paired_p(base, plus);

  // Oracle substituted for every evaluator role.
  const RunConfig c = base_config(AgentKind::PlannerPlus);
  const auto tasks = training_tasks(c);
  TaskCatalog catalog(0);
  OracleEvaluator oracle(EvaluatorConfig{}, 0);
  for (const auto& t : tasks) {
    catalog.add(t);
    oracle.add_task(t);
  }
  HallucinationInjector injector(catalog, c.p_g1, c.p_g2);
  CandidateGenerator gen(catalog, nullptr, injector);
  PlannerAgent agent(c.planner, gen, oracle, oracle, &oracle, 0);
  Rng rng(77);
  std::vector<PlanRecord> log;
  std::int64_t injected = 0;
  for (int e = 0; e < 40; ++e) {
    const GridTask& t = tasks[e % tasks.size()];
    auto r = agent.run_episode(t, reset(t, InitMode::FixedFarthest, rng), 100, rng);
    log.insert(log.end(), r.plans.begin(), r.plans.end());
  }
  for (const auto& p : log) injected += p.injected != TargetCategory::G0;
  const double oracle_delusion = delusion_frequency(log, catalog);
  return {mean(plus) < mean(base) && oracle_delusion == 0.0,
          fmt("delusion planner+ %.4f vs planner %.4f ", mean(plus), mean(base)) +
              fmt("(%.0f vs %.0f plans, p=%.2g); ", static_cast<double>(plus_plans),
                  static_cast<double>(base_plans), p) +
              fmt("oracle-backed %.4f over %.0f plans", oracle_delusion, static_cast<double>(log.size()))};
}

Outcome non_singleton() {
  // Radius-1 targets include embeddings no walk ever visits (lava cells next
  // to floor), so this needs a generalizing backend; the generate strategy
  // runs at raised hallucination rates so G1/G2 targets are seen at all.
  const int seeds = 4;
  RunConfig c = base_config(AgentKind::Random);
  c.family = Family::RDS;
  c.width = 6;
  c.height = 6;
  c.difficulty = 0.35;
  c.n_train_tasks = 1;
  c.radius = 1;
  c.total_steps = 40000;
  c.snapshot_every = 4000;
  c.probe_pairs = 300;
  c.p_g1 = 0.25;
  c.p_g2 = 0.25;
  c.evaluator.backend = Backend::Feedforward;
  c.evaluator.learning_rate = 1e-3;
  c.evaluator.sync_period = 1000;
  c.evaluator.hidden_width = 64;
  // Per curve and snapshot, the values across seeds.
  std::map<std::string, std::map<std::int64_t, std::vector<double>>> curves;
  for (int s = 0; s < seeds; ++s) {
    for (const auto& row : run_seed(c, s).rows) {
      if (row.metric == "e1" || row.metric == "e2") curves[row.metric][row.step].push_back(row.value);
      if (row.metric == "e0") curves["e0/" + row.key][row.step].push_back(row.value);
    }
  }
  auto stats = [](const std::vector<double>& v) {
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
  };
  // A rise above the running minimum counts against monotonicity only when it
  // exceeds two standard errors of the difference.
  std::string detail;
  bool ok = curves.count("e1") && curves.count("e2");
  for (const auto& [name, curve] : curves) {
    auto [lo, lo_se] = stats(curve.begin()->second);
    bool steady = true;
    for (const auto& [step, v] : curve) {
      const auto [m, se] = stats(v);
      steady = steady && m - lo <= 2.0 * std::sqrt(se * se + lo_se * lo_se);
      if (m < lo) {
        lo = m;
        lo_se = se;
      }
    }
    const double first = stats(curve.begin()->second).first, last = stats(curve.rbegin()->second).first;
    ok = ok && steady && last < first;
    detail += name + fmt(" %.2f->%.2f", first, last) + (steady ? "" : " (rise)") + "; ";
  }
  const double e1 = curves.count("e1") ? stats(curves["e1"].rbegin()->second).first : 1e9;
  ok = ok && e1 <= 1.0;
  return {ok, detail + fmt("final E1 %.3f (need <= 1.0), %.0f seeds", e1, seeds)};
}

Outcome determinism() {
  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  RunConfig c = base_config(AgentKind::DynaPlus);
  c.n_train_tasks = 3;
  c.total_steps = 4000;
  c.snapshot_every = 1000;
  c.seeds = {1, 2};
  c.probe_pairs = 50;
  const fs::path root = fs::temp_directory_path() / "tfe_acceptance_det";
  fs::remove_all(root);
  c.output_dir = (root / "a").string();
  const std::string a = read(cmd_train(c).metrics_csv);
  c.output_dir = (root / "b").string();
  c.threads = 2;
  const std::string b = read(cmd_train(c).metrics_csv);
  fs::remove_all(root);
  return {!a.empty() && a == b, fmt("%.0f bytes, identical=%.0f", static_cast<double>(a.size()), a == b)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string only = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<const char*, Outcome (*)()>> checks{
      {"backup_shift_exactness", backup_shift},
      {"oracle_equivalence_tabular", oracle_equivalence},
      {"theorem1_suite", theorem1_suite},
      {"support_swap_identity", support_swap},
      {"dyna_rejection_controlled", dyna_rejection},
      {"dyna_plus_improvement", dyna_plus_improvement},
      {"relabel_ablation_e2", relabel_ablation},
      {"planner_delusion_reduction", planner_delusion},
      {"non_singleton_convergence", non_singleton},
      {"determinism", determinism},
  };
  for (const auto& [name, fn] : checks) {
    if (only.empty() || only == name) report(name, fn);
  }
  return failures;
}
