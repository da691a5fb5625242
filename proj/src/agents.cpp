#include "tfe/agents.hpp"

#include <algorithm>
#include <deque>

namespace tfe {

QTable::QTable(double alpha, double gamma) : alpha_(alpha), gamma_(gamma) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error(ErrorCode::InvalidArgument, "gamma must lie in (0, 1]");
}

QTable::Key QTable::key(std::uint64_t task_id, const Embedding& s) {
  return {task_id, static_cast<std::uint32_t>((s.y << 10 | s.x) << 2 | s.flag_class())};
}

const std::array<double, kNumActions>* QTable::find(std::uint64_t task_id,
                                                    const Embedding& s) const {
  const auto it = table_.find(key(task_id, s));
  return it == table_.end() ? nullptr : &it->second;
}

double QTable::q(std::uint64_t task_id, const Embedding& s, Action a) const {
  const auto* row = find(task_id, s);
  return row ? (*row)[action_index(a)] : 0.0;
}

double QTable::value(std::uint64_t task_id, const Embedding& s) const {
  const auto* row = find(task_id, s);
  return row ? *std::max_element(row->begin(), row->end()) : 0.0;
}

Action QTable::greedy(std::uint64_t task_id, const Embedding& s) const {
  const auto* row = find(task_id, s);
  if (!row) return Action::Up;
  return action_from_index(static_cast<int>(std::max_element(row->begin(), row->end()) - row->begin()));
}

void QTable::update(std::uint64_t task_id, const Embedding& s, Action a, double reward,
                    const Embedding& next, bool terminal) {
  const double bootstrap = terminal ? 0.0 : gamma_ * value(task_id, next);
  double& cell = table_[key(task_id, s)][action_index(a)];
  cell += alpha_ * (reward + bootstrap - cell);
}

void QTable::update(const Transition& tr) {
  update(tr.task_id, tr.state.embedding(), tr.action, tr.reward, tr.next.embedding(),
         tr.terminal);
}

std::vector<double> QTable::dense(const StateSpace& space) const {
  std::vector<double> out(static_cast<std::size_t>(space.size()) * kNumActions, 0.0);
  const std::uint64_t id = space.task().task_id();
  for (const auto& s : space.states()) {
    for (int a = 0; a < kNumActions; ++a) {
      out[static_cast<std::size_t>(s.index) * kNumActions + a] =
          q(id, s.features, action_from_index(a));
    }
  }
  return out;
}

double EpsilonSchedule::at(std::int64_t step) const {
  if (steps <= 0 || step >= steps) return end;
  const double f = static_cast<double>(step) / static_cast<double>(steps);
  return start + (end - start) * f;
}

DynaStats& DynaStats::operator+=(const DynaStats& o) {
  applied += o.applied;
  rejected += o.rejected;
  abstained += o.abstained;
  infeasible += o.infeasible;
  infeasible_rejected += o.infeasible_rejected;
  feasible += o.feasible;
  feasible_rejected += o.feasible_rejected;
  return *this;
}

// ---------------------------------------------------------------------------

DynaAgent::DynaAgent(DynaConfig config, OneStepModel& model, const Evaluator* gate,
                     const TaskCatalog* certifier)
    : config_(config),
      q_(config.alpha, config.gamma),
      model_(model),
      gate_(gate),
      certifier_(certifier) {
  if (config.n_sim < 0) throw Error(ErrorCode::InvalidArgument, "n_sim must be >= 0");
  if (!(config.threshold >= 0.0 && config.threshold < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "threshold must lie in [0, 1)");
  }
}

Action DynaAgent::act(std::uint64_t task_id, const EnvState& s, std::int64_t step,
                      Rng& rng) const {
  const double eps = config_.epsilon.at(step);
  if (uniform01(rng) < eps) return action_from_index(static_cast<int>(uniform_index(rng, kNumActions)));
  const auto* row = q_.find(task_id, s.embedding());
  if (!row) return action_from_index(static_cast<int>(uniform_index(rng, kNumActions)));
  // Ties broken uniformly so an untrained row does not pin one direction.
  const double best = *std::max_element(row->begin(), row->end());
  int ties[kNumActions];
  int n = 0;
  for (int a = 0; a < kNumActions; ++a) {
    if ((*row)[a] == best) ties[n++] = a;
  }
  return action_from_index(ties[uniform_index(rng, static_cast<std::size_t>(n))]);
}

DynaStats DynaAgent::dyna_step(const Transition& real, Rng& sim_rng) {
  DynaStats stats;
  q_.update(real);
  const auto& pairs = model_.pairs();
  if (pairs.empty()) return stats;
  for (int n = 0; n < config_.n_sim; ++n) {
    const auto& pair = pairs[uniform_index(sim_rng, pairs.size())];
    const auto out = model_.sample_next(pair.task_id, pair.state, pair.action, sim_rng);
    if (!out) {
      ++stats.abstained;
      continue;
    }
    bool rejected = false;
    // Terminal outcomes come from real observations (corruptions are never
    // terminal); a lava successor matches no target, so it cannot be gated.
    if (gate_ && config_.threshold > 0.0 && !out->terminal) {
      const auto h = gate_->predict({pair.task_id, pair.state, out->next}, pair.action);
      rejected = reject(h, 1, config_.threshold);
    }
    if (certifier_) {
      const StateSpace& space = certifier_->space(pair.task_id);
      const int i = space.index_of(pair.state);
      const StepResult truth = step(space.task(), space.state(i), pair.action);
      const bool one_feasible =
          truth.state.embedding() == out->next && truth.terminal == out->terminal;
      if (one_feasible) {
        ++stats.feasible;
        stats.feasible_rejected += rejected;
      } else if (certifier_->categorize(pair.task_id, i, out->next) != TargetCategory::G0) {
        ++stats.infeasible;
        stats.infeasible_rejected += rejected;
      }
    }
    if (rejected) {
      ++stats.rejected;
      continue;
    }
    q_.update(pair.task_id, pair.state, pair.action, out->reward, out->next, out->terminal);
    ++stats.applied;
  }
  return stats;
}

// ---------------------------------------------------------------------------

PlanGraph build_plan_graph(std::uint64_t task_id, const Embedding& current,
                           std::span<const Target> candidates, const Embedding& goal,
                           const Evaluator& edges, const Evaluator* plus,
                           const PlannerConfig& config) {
  const int T = edges.support_size();
  if (config.tau < 1 || config.tau > T - 1) {
    throw Error(ErrorCode::InvalidArgument, "planner tau must lie in [1, T-1]");
  }
  std::vector<Embedding> verts{current};
  std::vector<int> origin{-1};
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const Embedding& e = candidates[c].embedding;
    if (e == goal || std::find(verts.begin(), verts.end(), e) != verts.end()) continue;
    verts.push_back(e);
    origin.push_back(static_cast<int>(c));
  }
  verts.push_back(goal);
  origin.push_back(-1);
  const int n = static_cast<int>(verts.size());

  auto rejects = [&](int u, int v) {
    return plus && reject(plus->predict({task_id, verts[u], verts[v]}), T - 1, config.threshold);
  };
  std::vector<bool> infeasible(n, false);
  for (int v = 1; v + 1 < n; ++v) infeasible[v] = rejects(0, v);

  std::vector<double> disc(static_cast<std::size_t>(n) * n, 0.0);
  for (int u = 0; u + 1 < n; ++u) {
    if (infeasible[u]) continue;
    for (int v = 1; v < n; ++v) {
      if (v == u || infeasible[v]) continue;
      const DistanceHistogram h = edges.predict({task_id, verts[u], verts[v]});
      if (tau_feasibility(h, T - 1) <= 0.0) continue;
      if (u != 0 && rejects(u, v)) continue;
      disc[static_cast<std::size_t>(u) * n + v] = expected_discount(h, config.gamma, config.tau);
    }
  }

  // Keep what the current state reaches through positive discounts, plus the goal.
  std::vector<bool> keep(n, false);
  keep[0] = true;
  std::deque<int> frontier{0};
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop_front();
    for (int v = 0; v < n; ++v) {
      if (!keep[v] && disc[static_cast<std::size_t>(u) * n + v] > 0.0) {
        keep[v] = true;
        frontier.push_back(v);
      }
    }
  }
  keep[n - 1] = true;

  PlanGraph g;
  g.goal_reward = config.goal_reward;
  std::vector<int> remap(n, -1);
  for (int v = 0; v < n; ++v) {
    if (!keep[v]) continue;
    remap[v] = g.size();
    g.vertices.push_back(verts[v]);
    g.source_candidate.push_back(origin[v]);
    g.infeasible.push_back(infeasible[v]);
  }
  const int m = g.size();
  g.discount.assign(static_cast<std::size_t>(m) * m, 0.0);
  for (int u = 0; u < n; ++u) {
    if (remap[u] < 0) continue;
    for (int v = 0; v < n; ++v) {
      if (remap[v] < 0) continue;
      g.edge(remap[u], remap[v]) = disc[static_cast<std::size_t>(u) * n + v];
    }
  }
  return g;
}

Selection plan_and_select(const PlanGraph& graph) {
  const int n = graph.size();
  const int goal = graph.goal();
  Selection sel;
  sel.values.assign(n, 0.0);
  sel.values[goal] = graph.goal_reward;
  for (int sweep = 0; sweep < n; ++sweep) {
    bool changed = false;
    for (int v = 0; v < n; ++v) {
      if (v == goal) continue;
      double best = 0.0;
      for (int w = 0; w < n; ++w) {
        if (w != v) best = std::max(best, graph.edge(v, w) * sel.values[w]);
      }
      if (best != sel.values[v]) {
        sel.values[v] = best;
        changed = true;
      }
    }
    ++sel.sweeps;
    if (!changed) break;
  }
  int best_w = -1;
  double best = 0.0;
  for (int w = 1; w < n; ++w) {
    const double u = graph.edge(0, w) * sel.values[w];
    if (u > best) {
      best = u;
      best_w = w;
    }
  }
  if (best_w < 0 || best_w == goal) {
    sel.vertex = goal;
    sel.target = graph.vertices[goal];
    sel.direct_goal = true;
  } else {
    sel.vertex = best_w;
    sel.target = graph.vertices[best_w];
    sel.direct_goal = false;
  }
  return sel;
}

Action goal_policy_action(const Evaluator& evaluator, std::uint64_t task_id, const EnvState& s,
                          const Embedding& target) {
  return min_distance_action(evaluator, {task_id, s.embedding(), target});
}

// ---------------------------------------------------------------------------

PlannerAgent::PlannerAgent(PlannerConfig config, CandidateGenerator& generator,
                           const Evaluator& edges, const Evaluator& policy,
                           const Evaluator* plus, int radius)
    : config_(config),
      generator_(generator),
      edges_(edges),
      policy_(policy),
      plus_(plus),
      radius_(radius) {}

EpisodeResult PlannerAgent::run_episode(const GridTask& task, const EnvState& start,
                                        int max_steps, Rng& rng) {
  EpisodeResult result;
  EnvState s = start;
  const Embedding goal = task.goal_embedding();
  while (result.steps < max_steps && !s.terminal) {
    const auto cands = generator_.candidates(task.task_id(), s, config_.candidates, rng);
    std::vector<Target> targets;
    targets.reserve(cands.size());
    for (const auto& c : cands) targets.push_back(c.target);
    const PlanGraph graph =
        build_plan_graph(task.task_id(), s.embedding(), targets, goal, edges_, plus_, config_);
    const Selection sel = plan_and_select(graph);

    PlanRecord rec;
    rec.task_id = task.task_id();
    rec.source = s;
    rec.direct_goal = sel.direct_goal;
    rec.target = sel.direct_goal ? Target{goal, 0} : Target{sel.target, radius_};
    if (!sel.direct_goal) rec.injected = cands[graph.source_candidate[sel.vertex]].category;
    result.plans.push_back(rec);

    for (int k = 0; k < config_.tau && result.steps < max_steps; ++k) {
      const Action a = goal_policy_action(policy_, task.task_id(), s, rec.target.embedding);
      const StepResult r = step(task, s, a);
      result.ret += r.reward;
      ++result.steps;
      s = r.state;
      if (r.terminal) {
        result.success = r.state.success;
        break;
      }
      if (indicator(s, rec.target, rec.target.radius)) break;
    }
  }
  return result;
}

}  // namespace tfe
