#ifndef TFE_CATALOG_HPP
#define TFE_CATALOG_HPP

#include <map>
#include <memory>
#include <span>
#include <tuple>
#include <vector>

#include "tfe/envs.hpp"
#include "tfe/oracle.hpp"

namespace tfe {

// Oracle-side bookkeeping for a set of tasks under one indicator radius:
// state spaces, target matches, reachability closures, and categorizations.
// Caches are filled lazily, so one instance must not be shared across threads.
class TaskCatalog {
 public:
  explicit TaskCatalog(int radius = 0);

  int radius() const { return radius_; }

  void add(const GridTask& task);
  bool has(std::uint64_t task_id) const { return entries_.count(task_id) != 0; }
  const GridTask& task(std::uint64_t task_id) const { return space(task_id).task(); }
  const StateSpace& space(std::uint64_t task_id) const;

  // State indices matched by the target embedding; empty when off-grid or G1.
  std::span<const int> matches(std::uint64_t task_id, const Embedding& target) const;
  std::vector<bool> match_mask(std::uint64_t task_id, const Embedding& target) const;

  const std::vector<bool>& reachable(std::uint64_t task_id, int source) const;

  TargetCategory categorize(std::uint64_t task_id, int source, const Embedding& target) const;

  // On-grid embeddings that match no state of the task.
  std::span<const EmbeddingKey> g1_keys(std::uint64_t task_id) const;
  // Embeddings that match states, none of which is reachable from source.
  std::vector<EmbeddingKey> g2_keys(std::uint64_t task_id, int source) const;
  // Embeddings of states reachable from source (the source included).
  std::vector<EmbeddingKey> g0_keys(std::uint64_t task_id, int source) const;

  // Exact distance table toward one target under the given policy; cached for
  // greedy_to_target.
  const DistanceDistributionTable& table(std::uint64_t task_id, const Embedding& target,
                                         int support_size) const;
  void clear_tables() const { tables_.clear(); }

 private:
  struct Entry {
    std::unique_ptr<StateSpace> space;
    std::vector<std::vector<int>> matches;  // by embedding key
    std::vector<EmbeddingKey> g1;
    mutable std::map<int, std::vector<bool>> reachable;
  };
  const Entry& entry(std::uint64_t task_id) const;

  int radius_;
  std::map<std::uint64_t, Entry> entries_;
  mutable std::map<std::tuple<std::uint64_t, EmbeddingKey, int>, DistanceDistributionTable>
      tables_;
};

}  // namespace tfe

#endif  // TFE_CATALOG_HPP
