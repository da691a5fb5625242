#ifndef TFE_METRICS_HPP
#define TFE_METRICS_HPP

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tfe/agents.hpp"
#include "tfe/catalog.hpp"
#include "tfe/evaluator.hpp"

namespace tfe {

struct MetricsRow {
  std::string run_id;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::string metric;
  std::string key;
  double value = 0.0;
};

inline constexpr const char* kMetricsHeader = "run_id,seed,step,metric,key,value";

// Sorts by (run_id, seed, step, metric, key) and writes with 9 significant
// digits. Throws ContractViolation on a repeated key tuple.
void write_metrics_csv(std::ostream& out, std::vector<MetricsRow> rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

// A (source, target) pair with its oracle category and clipped true distance.
struct ProbePair {
  std::uint64_t task_id = 0;
  int source = 0;
  Embedding target;
  TargetCategory category = TargetCategory::G0;
  double true_distance = 0.0;
};

// Sources are the spawnable states of each task; targets range over the whole
// embedding space. At most max_per_category pairs are kept per category,
// chosen uniformly with rng. True distances follow the greedy oracle policy.
std::vector<ProbePair> build_probe_set(const TaskCatalog& catalog,
                                       std::span<const std::uint64_t> tasks, int support_size,
                                       std::size_t max_per_category, Rng& rng);

// Bucket label of a clipped true distance for E0 at support size T, empty
// when the distance falls outside every bucket.
std::string e0_bucket(double true_distance, int support_size);

// Mean |E[D_hat] - D_true| per bucket over pairs of one category. E0 buckets
// by true distance, E1/E2 use the single bucket "all". Empty buckets are absent.
std::map<std::string, double> e_error(const Evaluator& evaluator, const TaskCatalog& catalog,
                                      std::span<const ProbePair> pairs, TargetCategory category);

// Fraction of plan records whose target the oracle places in G1 or G2.
double delusion_frequency(std::span<const PlanRecord> log, const TaskCatalog& catalog);

// Mean over non-terminal (s, a) of |Q - Q*|.
double q_error(const QTable& q, const StateSpace& space, std::span<const double> q_star);

// Return of one evaluation episode on a fresh task from its start state.
using EpisodeRunner =
    std::function<double(const GridTask& task, const EnvState& start, Rng& rng)>;

struct OodResult {
  std::vector<double> difficulties;
  std::vector<double> mean_return;  // per difficulty
  std::vector<int> episodes;        // per difficulty
  double pooled = 0.0;
};

// n_per new tasks per difficulty, one episode each from the fixed-farthest start.
OodResult ood_protocol(const EpisodeRunner& run, Family family, int width, int height,
                       std::span<const double> difficulties, int n_per, std::uint64_t seed);

}  // namespace tfe

#endif  // TFE_METRICS_HPP
