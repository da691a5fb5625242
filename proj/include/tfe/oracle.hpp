#ifndef TFE_ORACLE_HPP
#define TFE_ORACLE_HPP

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tfe/envs.hpp"
#include "tfe/histogram.hpp"

namespace tfe {

enum class TargetCategory : std::uint8_t { G0, G1, G2 };

std::string_view category_name(TargetCategory c);

using ActionProbs = std::array<double, kNumActions>;

struct PolicySpec {
  enum class Kind : std::uint8_t { UniformRandom, GreedyToTarget, Table };

  Kind kind = Kind::UniformRandom;
  std::vector<ActionProbs> table;  // per state index, Kind::Table only

  static PolicySpec uniform_random() { return {}; }
  static PolicySpec greedy_to_target() { return {Kind::GreedyToTarget, {}}; }
  static PolicySpec from_table(std::vector<ActionProbs> table);

  std::string tag() const;
};

PolicySpec parse_policy(std::string_view name);

// Enumerated states matched by any member of a target set.
std::vector<bool> match_mask(const StateSpace& space, std::span<const Target> members);
std::vector<bool> match_mask(const StateSpace& space, const Target& target);

// Fewest steps (>= 1) until the first hit of the matched set; -1 when no
// policy can hit it. Terminal sources are -1.
std::vector<int> hit_distances(const StateSpace& space, const std::vector<bool>& match);

// Per-state action distribution a policy spec resolves to for one target.
// greedy_to_target follows shortest hit paths, ties broken by action index;
// states that cannot hit the target take action 0.
std::vector<ActionProbs> resolve_policy(const StateSpace& space, const PolicySpec& policy,
                                        const std::vector<bool>& match);

struct DistanceDistributionTable {
  int support_size = 0;
  std::string policy_tag;
  std::vector<DistanceHistogram> rows;  // indexed by state index

  const DistanceHistogram& at(int state) const { return rows[state]; }
};

DistanceDistributionTable distance_distribution(const StateSpace& space,
                                                const PolicySpec& policy,
                                                const std::vector<bool>& match, int T);
DistanceDistributionTable distance_distribution(const StateSpace& space,
                                                const PolicySpec& policy,
                                                const Target& target, int T);

// D(s, a) = 1 + D(s') with the hit / terminal branches, read off a state table.
DistanceHistogram action_distribution(const StateSpace& space,
                                      const DistanceDistributionTable& table,
                                      const std::vector<bool>& match, int state, Action a);

double tau_feasibility_exact(const DistanceDistributionTable& table, int state, int tau);

// G1: no enumerated state is matched. G2: matched states exist but none is
// reachable from the source (the source itself counts). G0 otherwise.
TargetCategory categorize_target(const StateSpace& space, int source, const Target& target);
TargetCategory categorize_target(const StateSpace& space, const std::vector<bool>& reachable,
                                 const Target& target);

// Q*(s, a) by value iteration, indexed s * kNumActions + a. Terminal states and
// states that cannot reach success are 0.
std::vector<double> optimal_q(const StateSpace& space, double gamma);

struct Theorem1Result {
  bool reachability_equal = false;
  bool feasibility_equal = false;
  double mixed_feasibility = 0.0;
  double reduced_feasibility = 0.0;
  int removed_members = 0;

  bool holds() const { return reachability_equal && feasibility_equal; }
};

// Compares feasibility of a mixed target set with the same set after every
// G1/G2 member is removed, both as reachability and as p(D <= tau) under the
// given policy.
Theorem1Result theorem1_check(const StateSpace& space, int source,
                              std::span<const Target> members, int tau,
                              const PolicySpec& policy, int T);

void write_oracle_csv(std::ostream& out, const DistanceDistributionTable& table,
                      EmbeddingKey target_key);

}  // namespace tfe

#endif  // TFE_ORACLE_HPP
