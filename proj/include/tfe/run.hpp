#ifndef TFE_RUN_HPP
#define TFE_RUN_HPP

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tfe/agents.hpp"
#include "tfe/evaluator.hpp"
#include "tfe/metrics.hpp"
#include "tfe/relabel.hpp"

namespace tfe {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kOutputRootEnv = "TFE_OUTPUT_ROOT";

enum class AgentKind : std::uint8_t { Random, Dyna, DynaPlus, Planner, PlannerPlus };

std::string_view agent_name(AgentKind k);
AgentKind parse_agent(std::string_view name);

struct RunConfig {
  std::string run_id = "run";
  AgentKind agent = AgentKind::DynaPlus;
  Family family = Family::SSM;
  int width = 8;
  int height = 8;
  double difficulty = 0.4;
  int n_train_tasks = 50;
  std::uint64_t task_seed = 0;
  std::int64_t total_steps = 50000;
  std::int64_t snapshot_every = 5000;
  int max_episode_steps = 100;
  std::vector<std::uint64_t> seeds{0};
  int threads = 1;
  std::string output_dir = "out";

  EvaluatorConfig evaluator;
  int batch_size = 32;
  int train_every = 1;
  int radius = 0;

  RelabelMix mix = RelabelMix::fepg();
  std::size_t replay_capacity = 100000;
  // Whether episode/future relabeling may pick an episode's final successor.
  bool relabel_final_successor = true;

  double p_g1 = 0.03;
  double p_g2 = 0.05;

  DynaConfig dyna{10, 0.05, 0.5, 0.95, {1.0, 0.05, 10000}};
  PlannerConfig planner;
  int planner_eval_episodes = 10;
  // Relabeling of the planners' own edge estimator.
  RelabelMix planner_edge_mix = RelabelMix::only(Strategy::Future);

  std::size_t probe_pairs = 500;

  // Evaluation (cmd_eval): OOD difficulties and tasks per difficulty.
  std::vector<double> eval_difficulties{0.25, 0.35, 0.45, 0.55};
  int eval_tasks_per_difficulty = 20;
  std::uint64_t eval_seed = 1000;

  // Throws Validation with the offending field path.
  void validate() const;
};

// Strict JSON config: schema_version must match, unknown keys are rejected.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

// The training task set, identical for every seed of a run.
std::vector<GridTask> training_tasks(const RunConfig& config);

struct SeedSummary {
  std::uint64_t seed = 0;
  double final_train_return = 0.0;
  double final_q_error = 0.0;
  // Dyna agents: mean return of one greedy episode per training task.
  double final_greedy_return = 0.0;
  std::map<std::string, double> final_e0;
  double final_e1 = 0.0;
  double final_e2 = 0.0;
  double final_delusion = 0.0;
  DynaStats dyna;
  std::int64_t injector_fallbacks = 0;
};

struct SeedRun {
  SeedSummary summary;
  std::vector<MetricsRow> rows;
  std::unique_ptr<Evaluator> evaluator;  // null for plain Dyna
  std::unique_ptr<Evaluator> edges;      // planners only
};

// One seed of cmd_train: acting, relabeled evaluator training, agent updates,
// and metric snapshots. Deterministic given (config, seed).
SeedRun run_seed(const RunConfig& config, std::uint64_t seed);

struct TrainResult {
  std::vector<SeedSummary> seeds;
  std::filesystem::path metrics_csv;
};

// Runs every seed (in parallel up to config.threads), merges rows, writes
// <output>/<run_id>/metrics.csv and one evaluator checkpoint per seed
// (evaluator_seed<N>.json, plus edges_seed<N>.json for planners).
TrainResult cmd_train(const RunConfig& config);

std::vector<std::filesystem::path> cmd_gen_tasks(const RunConfig& config);

// OOD protocol with a planner driven by the checkpointed evaluator ("+" when
// the config's agent is a "+" variant). A sibling edges_*.json, when present,
// supplies the planner's own edge estimator. Writes <output>/<run_id>/ood.csv.
std::filesystem::path cmd_eval(const std::filesystem::path& checkpoint, const RunConfig& config);

// Exact distance tables of every state toward every enumerated state's
// embedding, as rows "state,target_key,p_1,...,p_T".
void cmd_oracle(const GridTask& task, const PolicySpec& policy, int support_size, int radius,
                std::ostream& out);

struct SelftestLine {
  std::string name;
  bool passed = false;
  std::string detail;
};
std::vector<SelftestLine> cmd_selftest();

// Output directory for a run, honoring the output-root environment variable
// for relative paths.
std::filesystem::path resolve_output_dir(const RunConfig& config);

}  // namespace tfe

#endif  // TFE_RUN_HPP
