#include "tfe/catalog.hpp"

namespace tfe {

TaskCatalog::TaskCatalog(int radius) : radius_(radius) {
  if (radius < 0 || radius > 1) throw Error(ErrorCode::InvalidArgument, "radius must be 0 or 1");
}

void TaskCatalog::add(const GridTask& task) {
  if (has(task.task_id())) return;
  Entry e;
  e.space = std::make_unique<StateSpace>(task);
  e.matches.resize(task.embedding_space_size());
  for (EmbeddingKey k = 0; k < task.embedding_space_size(); ++k) {
    const Target target{task.embedding_of(k), radius_};
    for (const auto& s : e.space->states()) {
      if (indicator(s.features, target, radius_)) e.matches[k].push_back(s.index);
    }
    if (e.matches[k].empty()) e.g1.push_back(k);
  }
  entries_.emplace(task.task_id(), std::move(e));
}

const TaskCatalog::Entry& TaskCatalog::entry(std::uint64_t task_id) const {
  const auto it = entries_.find(task_id);
  if (it == entries_.end()) throw Error(ErrorCode::InvalidArgument, "task not in catalog");
  return it->second;
}

const StateSpace& TaskCatalog::space(std::uint64_t task_id) const {
  return *entry(task_id).space;
}

std::span<const int> TaskCatalog::matches(std::uint64_t task_id, const Embedding& target) const {
  const Entry& e = entry(task_id);
  if (!e.space->task().contains(target)) return {};
  return e.matches[e.space->task().key_of(target)];
}

std::vector<bool> TaskCatalog::match_mask(std::uint64_t task_id, const Embedding& target) const {
  std::vector<bool> mask(space(task_id).size(), false);
  for (int i : matches(task_id, target)) mask[i] = true;
  return mask;
}

const std::vector<bool>& TaskCatalog::reachable(std::uint64_t task_id, int source) const {
  const Entry& e = entry(task_id);
  auto it = e.reachable.find(source);
  if (it == e.reachable.end()) {
    it = e.reachable.emplace(source, e.space->reachable_from(source)).first;
  }
  return it->second;
}

TargetCategory TaskCatalog::categorize(std::uint64_t task_id, int source,
                                       const Embedding& target) const {
  const auto m = matches(task_id, target);
  if (m.empty()) return TargetCategory::G1;
  const auto& r = reachable(task_id, source);
  for (int i : m) {
    if (r[i]) return TargetCategory::G0;
  }
  return TargetCategory::G2;
}

std::span<const EmbeddingKey> TaskCatalog::g1_keys(std::uint64_t task_id) const {
  return entry(task_id).g1;
}

std::vector<EmbeddingKey> TaskCatalog::g2_keys(std::uint64_t task_id, int source) const {
  const Entry& e = entry(task_id);
  const auto& r = reachable(task_id, source);
  std::vector<EmbeddingKey> out;
  for (EmbeddingKey k = 0; k < static_cast<EmbeddingKey>(e.matches.size()); ++k) {
    const auto& m = e.matches[k];
    if (m.empty()) continue;
    bool any = false;
    for (int i : m) any = any || r[i];
    if (!any) out.push_back(k);
  }
  return out;
}

std::vector<EmbeddingKey> TaskCatalog::g0_keys(std::uint64_t task_id, int source) const {
  const Entry& e = entry(task_id);
  const auto& r = reachable(task_id, source);
  std::vector<EmbeddingKey> out;
  for (const auto& s : e.space->states()) {
    if (r[s.index]) out.push_back(e.space->task().key_of(s.features));
  }
  return out;
}

const DistanceDistributionTable& TaskCatalog::table(std::uint64_t task_id,
                                                    const Embedding& target,
                                                    int support_size) const {
  const StateSpace& sp = space(task_id);
  const EmbeddingKey key = sp.task().contains(target) ? sp.task().key_of(target) : -1;
  const auto id = std::make_tuple(task_id, key, support_size);
  auto it = tables_.find(id);
  if (it == tables_.end()) {
    it = tables_
             .emplace(id, distance_distribution(sp, PolicySpec::greedy_to_target(),
                                                match_mask(task_id, target), support_size))
             .first;
  }
  return it->second;
}

}  // namespace tfe
