#include "tfe/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <ostream>

namespace tfe {

std::string_view category_name(TargetCategory c) {
  switch (c) {
    case TargetCategory::G0: return "G0";
    case TargetCategory::G1: return "G1";
    case TargetCategory::G2: return "G2";
  }
  return "?";
}

PolicySpec PolicySpec::from_table(std::vector<ActionProbs> table) {
  for (const auto& row : table) {
    double s = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative action probability");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw Error(ErrorCode::InvalidArgument, "policy row does not sum to 1");
    }
  }
  return {Kind::Table, std::move(table)};
}

std::string PolicySpec::tag() const {
  switch (kind) {
    case Kind::UniformRandom: return "uniform_random";
    case Kind::GreedyToTarget: return "greedy_to_target";
    case Kind::Table: return "table";
  }
  return "?";
}

PolicySpec parse_policy(std::string_view name) {
  if (name == "uniform_random" || name == "uniform") return PolicySpec::uniform_random();
  if (name == "greedy_to_target" || name == "greedy") return PolicySpec::greedy_to_target();
  throw Error(ErrorCode::InvalidArgument, "unknown policy '" + std::string(name) + "'");
}

std::vector<bool> match_mask(const StateSpace& space, std::span<const Target> members) {
  std::vector<bool> mask(space.size(), false);
  for (const auto& s : space.states()) {
    for (const auto& m : members) {
      if (indicator(s.features, m, m.radius)) {
        mask[s.index] = true;
        break;
      }
    }
  }
  return mask;
}

std::vector<bool> match_mask(const StateSpace& space, const Target& target) {
  return match_mask(space, std::span<const Target>(&target, 1));
}

std::vector<int> hit_distances(const StateSpace& space, const std::vector<bool>& match) {
  const int n = space.size();
  std::vector<std::vector<int>> predecessors(n);
  std::vector<int> dist(n, -1);
  std::deque<int> frontier;
  for (int i = 0; i < n; ++i) {
    if (space.terminal(i)) continue;
    for (Action a : kAllActions) {
      const int j = space.successor(i, a);
      if (j == StateSpace::kDead) continue;
      if (match[j]) {
        if (dist[i] < 0) {
          dist[i] = 1;
          frontier.push_back(i);
        }
      } else if (!space.terminal(j)) {
        predecessors[j].push_back(i);
      }
    }
  }
  while (!frontier.empty()) {
    const int j = frontier.front();
    frontier.pop_front();
    for (int i : predecessors[j]) {
      if (dist[i] >= 0) continue;
      dist[i] = dist[j] + 1;
      frontier.push_back(i);
    }
  }
  return dist;
}

std::vector<ActionProbs> resolve_policy(const StateSpace& space, const PolicySpec& policy,
                                        const std::vector<bool>& match) {
  const int n = space.size();
  switch (policy.kind) {
    case PolicySpec::Kind::UniformRandom:
      return std::vector<ActionProbs>(n, ActionProbs{0.25, 0.25, 0.25, 0.25});
    case PolicySpec::Kind::Table:
      if (static_cast<int>(policy.table.size()) != n) {
        throw Error(ErrorCode::InvalidArgument, "policy table size does not match task");
      }
      return policy.table;
    case PolicySpec::Kind::GreedyToTarget: break;
  }
  const auto dist = hit_distances(space, match);
  std::vector<ActionProbs> out(n, ActionProbs{1.0, 0.0, 0.0, 0.0});
  for (int i = 0; i < n; ++i) {
    if (space.terminal(i) || dist[i] < 0) continue;
    int best = -1;
    int best_cost = 0;
    for (int a = 0; a < kNumActions; ++a) {
      const int j = space.successor(i, action_from_index(a));
      int cost;
      if (j == StateSpace::kDead) continue;
      if (match[j]) {
        cost = 1;
      } else if (space.terminal(j) || dist[j] < 0) {
        continue;
      } else {
        cost = 1 + dist[j];
      }
      if (best < 0 || cost < best_cost) {
        best = a;
        best_cost = cost;
      }
    }
    out[i] = ActionProbs{0.0, 0.0, 0.0, 0.0};
    out[i][best] = 1.0;
  }
  return out;
}

DistanceDistributionTable distance_distribution(const StateSpace& space,
                                                const PolicySpec& policy,
                                                const std::vector<bool>& match, int T) {
  if (T < 2) throw Error(ErrorCode::InvalidArgument, "T must be at least 2");
  const int n = space.size();
  const auto pi = resolve_policy(space, policy, match);

  // prev[s] = p(D = t-1 | s), cur[s] = p(D = t | s).
  std::vector<double> prev(n, 0.0), cur(n, 0.0);
  DistanceDistributionTable table;
  table.support_size = T;
  table.policy_tag = policy.tag();
  table.rows.assign(n, DistanceHistogram(T));
  for (int t = 1; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      double p = 0.0;
      if (!space.terminal(i)) {
        for (int a = 0; a < kNumActions; ++a) {
          if (pi[i][a] == 0.0) continue;
          const int j = space.successor(i, action_from_index(a));
          if (j == StateSpace::kDead) continue;
          if (t == 1) {
            if (match[j]) p += pi[i][a];
          } else if (!match[j] && !space.terminal(j)) {
            p += pi[i][a] * prev[j];
          }
        }
      }
      cur[i] = p;
      table.rows[i][t - 1] = p;
    }
    std::swap(prev, cur);
  }
  for (auto& row : table.rows) {
    double hit = 0.0;
    for (int k = 0; k < T - 1; ++k) hit += row[k];
    row[T - 1] = std::max(0.0, 1.0 - hit);
  }
  return table;
}

DistanceDistributionTable distance_distribution(const StateSpace& space,
                                                const PolicySpec& policy,
                                                const Target& target, int T) {
  return distance_distribution(space, policy, match_mask(space, target), T);
}

DistanceHistogram action_distribution(const StateSpace& space,
                                      const DistanceDistributionTable& table,
                                      const std::vector<bool>& match, int state, Action a) {
  const int T = table.support_size;
  if (space.terminal(state)) return DistanceHistogram::overflow(T);
  const int j = space.successor(state, a);
  if (j == StateSpace::kDead) return DistanceHistogram::overflow(T);
  return backup_target(match[j], space.terminal(j), table.at(j));
}

double tau_feasibility_exact(const DistanceDistributionTable& table, int state, int tau) {
  return tau_feasibility(table.at(state), tau);
}

TargetCategory categorize_target(const StateSpace& space, const std::vector<bool>& reachable,
                                 const Target& target) {
  bool any = false;
  for (const auto& s : space.states()) {
    if (!indicator(s.features, target, target.radius)) continue;
    if (reachable[s.index]) return TargetCategory::G0;
    any = true;
  }
  return any ? TargetCategory::G2 : TargetCategory::G1;
}

TargetCategory categorize_target(const StateSpace& space, int source, const Target& target) {
  return categorize_target(space, space.reachable_from(source), target);
}

std::vector<double> optimal_q(const StateSpace& space, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "gamma must lie in (0, 1]");
  }
  const int n = space.size();
  std::vector<double> q(static_cast<std::size_t>(n) * kNumActions, 0.0);
  std::vector<double> v(n, 0.0);
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double delta = 0.0;
    for (int i = 0; i < n; ++i) {
      if (space.terminal(i)) continue;
      for (int a = 0; a < kNumActions; ++a) {
        const Action act = action_from_index(a);
        const int j = space.successor(i, act);
        double target = space.reward(i, act);
        if (j != StateSpace::kDead && !space.terminal(j)) target += gamma * v[j];
        double& cell = q[static_cast<std::size_t>(i) * kNumActions + a];
        delta = std::max(delta, std::abs(target - cell));
        cell = target;
      }
    }
    for (int i = 0; i < n; ++i) {
      const double* row = &q[static_cast<std::size_t>(i) * kNumActions];
      v[i] = *std::max_element(row, row + kNumActions);
    }
    if (delta <= 1e-12) break;
  }
  return q;
}

Theorem1Result theorem1_check(const StateSpace& space, int source,
                              std::span<const Target> members, int tau,
                              const PolicySpec& policy, int T) {
  const auto reachable = space.reachable_from(source);
  std::vector<Target> reduced;
  for (const auto& m : members) {
    if (categorize_target(space, reachable, m) == TargetCategory::G0) reduced.push_back(m);
  }
  Theorem1Result r;
  r.removed_members = static_cast<int>(members.size() - reduced.size());

  const auto mixed_mask = match_mask(space, members);
  const auto reduced_mask = match_mask(space, reduced);
  bool mixed_reach = false, reduced_reach = false;
  for (int i = 0; i < space.size(); ++i) {
    if (!reachable[i]) continue;
    mixed_reach = mixed_reach || mixed_mask[i];
    reduced_reach = reduced_reach || reduced_mask[i];
  }
  r.reachability_equal = mixed_reach == reduced_reach;

  const auto mixed = distance_distribution(space, policy, mixed_mask, T);
  const auto red = distance_distribution(space, policy, reduced_mask, T);
  r.mixed_feasibility = tau_feasibility_exact(mixed, source, tau);
  r.reduced_feasibility = tau_feasibility_exact(red, source, tau);
  r.feasibility_equal = r.mixed_feasibility == r.reduced_feasibility;
  return r;
}

void write_oracle_csv(std::ostream& out, const DistanceDistributionTable& table,
                      EmbeddingKey target_key) {
  char buf[64];
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    out << i << ',' << target_key;
    for (double p : table.rows[i].probs()) {
      std::snprintf(buf, sizeof(buf), ",%.17g", p);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace tfe
