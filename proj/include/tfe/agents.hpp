#ifndef TFE_AGENTS_HPP
#define TFE_AGENTS_HPP

#include <unordered_map>
#include <vector>

#include "tfe/catalog.hpp"
#include "tfe/evaluator.hpp"
#include "tfe/generator.hpp"
#include "tfe/relabel.hpp"

namespace tfe {

// Q-values keyed by (task, embedding), so simulated successors that are not
// states of the task still have a (zero-initialized) value to bootstrap on.
class QTable {
 public:
  QTable(double alpha, double gamma);

  double alpha() const { return alpha_; }
  double gamma() const { return gamma_; }

  double q(std::uint64_t task_id, const Embedding& s, Action a) const;
  double value(std::uint64_t task_id, const Embedding& s) const;
  Action greedy(std::uint64_t task_id, const Embedding& s) const;  // ties to the lowest index

  // Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') * [not terminal] - Q(s,a))
  void update(std::uint64_t task_id, const Embedding& s, Action a, double reward,
              const Embedding& next, bool terminal);
  void update(const Transition& tr);

  // Values over a task's enumerated states, indexed s * kNumActions + a.
  std::vector<double> dense(const StateSpace& space) const;
  std::size_t size() const { return table_.size(); }

  friend bool operator==(const QTable& a, const QTable& b) {
    return a.alpha_ == b.alpha_ && a.gamma_ == b.gamma_ && a.table_ == b.table_;
  }

 // Null when the state has no row yet.
  const std::array<double, kNumActions>* find(std::uint64_t task_id, const Embedding& s) const;

 private:
  struct Key {
    std::uint64_t task;
    std::uint32_t cell;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return static_cast<std::size_t>(derive_seed(k.task, k.cell));
    }
  };
  static Key key(std::uint64_t task_id, const Embedding& s);

  double alpha_;
  double gamma_;
  std::unordered_map<Key, std::array<double, kNumActions>, KeyHash> table_;
};

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::int64_t steps = 10000;

  double at(std::int64_t step) const;
};

struct DynaConfig {
  int n_sim = 10;
  double threshold = 0.0;  // 0 never rejects: plain Dyna
  double alpha = 0.5;
  double gamma = 0.95;
  EpsilonSchedule epsilon;
};

struct DynaStats {
  std::int64_t applied = 0;
  std::int64_t rejected = 0;
  std::int64_t abstained = 0;
  // Oracle tallies, filled when a certifying catalog is attached.
  std::int64_t infeasible = 0;
  std::int64_t infeasible_rejected = 0;
  std::int64_t feasible = 0;
  std::int64_t feasible_rejected = 0;

  DynaStats& operator+=(const DynaStats& o);
};

// One-step Dyna. With a gate evaluator and a positive threshold, simulated
// successors whose estimated p(D <= 1) falls below the threshold are skipped.
class DynaAgent {
 public:
  DynaAgent(DynaConfig config, OneStepModel& model, const Evaluator* gate = nullptr,
            const TaskCatalog* certifier = nullptr);

  const DynaConfig& config() const { return config_; }
  QTable& q() { return q_; }
  const QTable& q() const { return q_; }

  // epsilon-greedy; the exploration draw comes from rng.
  Action act(std::uint64_t task_id, const EnvState& s, std::int64_t step, Rng& rng) const;

  // One real update followed by n_sim simulated ones drawn from the model's
  // observed pairs with sim_rng.
  DynaStats dyna_step(const Transition& real, Rng& sim_rng);

 private:
  DynaConfig config_;
  QTable q_;
  OneStepModel& model_;
  const Evaluator* gate_;
  const TaskCatalog* certifier_;
};

// ---------------------------------------------------------------------------

struct PlannerConfig {
  int candidates = 8;
  int tau = 8;               // commitment budget and support-swap horizon
  double threshold = 0.05;   // "+" rejection threshold on p(D <= T-1)
  double gamma = 0.95;
  double goal_reward = 1.0;  // terminal value carried by the goal vertex
};

// Vertex 0 is the current state, the last vertex the task-goal proxy.
struct PlanGraph {
  std::vector<Embedding> vertices;
  std::vector<int> source_candidate;  // index into the candidate list, -1 for current/goal
  std::vector<bool> infeasible;       // flagged by the "+" evaluator
  std::vector<double> discount;       // row-major |V| x |V|, u -> v
  double goal_reward = 1.0;

  int size() const { return static_cast<int>(vertices.size()); }
  int goal() const { return size() - 1; }
  double edge(int u, int v) const { return discount[static_cast<std::size_t>(u) * size() + v]; }
  double& edge(int u, int v) { return discount[static_cast<std::size_t>(u) * size() + v]; }
};

// Duplicates are pruned first, then vertices the current state cannot reach
// through positive-discount edges. Edge discounts come from `edges` by the
// support swap; a non-null `plus` evaluator disconnects every edge into a
// vertex it rejects at horizon T-1.
PlanGraph build_plan_graph(std::uint64_t task_id, const Embedding& current,
                           std::span<const Target> candidates, const Embedding& goal,
                           const Evaluator& edges, const Evaluator* plus,
                           const PlannerConfig& config);

struct Selection {
  int vertex = 0;
  Embedding target;
  bool direct_goal = true;
  std::vector<double> values;
  int sweeps = 0;
};

// Value iteration over vertex values, then the first hop of the best path.
Selection plan_and_select(const PlanGraph& graph);

// argmin_a of the expected clipped distance to the target.
Action goal_policy_action(const Evaluator& evaluator, std::uint64_t task_id,
                          const EnvState& s, const Embedding& target);

struct PlanRecord {
  std::uint64_t task_id = 0;
  EnvState source;
  Target target;
  bool direct_goal = false;
  TargetCategory injected = TargetCategory::G0;  // label the generator attached
};

struct EpisodeResult {
  double ret = 0.0;
  int steps = 0;
  bool success = false;
  std::vector<PlanRecord> plans;
};

// Decision-time planner: proposes candidates, plans over them, and follows the
// selected target with the low-level policy until h fires or tau steps pass.
class PlannerAgent {
 public:
  PlannerAgent(PlannerConfig config, CandidateGenerator& generator, const Evaluator& edges,
               const Evaluator& policy, const Evaluator* plus, int radius);

  EpisodeResult run_episode(const GridTask& task, const EnvState& start, int max_steps,
                            Rng& rng);

 private:
  PlannerConfig config_;
  CandidateGenerator& generator_;
  const Evaluator& edges_;
  const Evaluator& policy_;
  const Evaluator* plus_;
  int radius_;
};

}  // namespace tfe

#endif  // TFE_AGENTS_HPP
