#ifndef TFE_RELABEL_HPP
#define TFE_RELABEL_HPP

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tfe/envs.hpp"
#include "tfe/evaluator.hpp"

namespace tfe {

struct Transition {
  std::uint64_t task_id = 0;
  std::int64_t episode_id = 0;
  int t = 0;
  EnvState state;
  Action action = Action::Up;
  double reward = 0.0;
  EnvState next;
  bool terminal = false;
};

enum class Strategy : std::uint8_t { Future, Episode, PerTask, Generate };

inline constexpr int kNumStrategies = 4;

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

// Weights over the four strategies; they must sum to 1.
struct RelabelMix {
  std::array<double, kNumStrategies> weights{};

  double weight(Strategy s) const { return weights[static_cast<int>(s)]; }

  static RelabelMix only(Strategy s);
  static RelabelMix fepg();  // 50% episode, 25% pertask, 25% generate
  // Parses "episode:0.5,pertask:0.25,generate:0.25".
  static RelabelMix parse(std::string_view text);
  std::string to_string() const;
  void validate() const;
};

struct RelabeledSample {
  Transition transition;
  Target target;
  bool hit = false;  // h(s', target)
  Strategy strategy = Strategy::Episode;
  // Time index of the state the target came from for future/episode, -1 otherwise.
  int source_time = -1;

  BackupSample backup() const;
};

// Target producer for the generate strategy, conditioned on the transition's
// source state and action. nullopt means the generator abstains.
class TargetGenerator {
 public:
  virtual ~TargetGenerator() = default;
  virtual std::optional<Target> generate(const Transition& tr, Rng& rng) = 0;
};

// Transitions grouped by episode, evicted a whole episode at a time, plus a
// per-task index of the distinct states experienced under each task: every
// transition source and every non-lava terminal successor. Episode and future
// relabeling index the episode's states s_0..s_L, where s_L is the final
// successor; T_bot is L, or L-1 when the episode ended in lava (a dead state
// matches no target). With final_successor off, T_bot is always L-1, the
// last transition's source.
class ReplayStore {
 public:
  ReplayStore(std::size_t capacity, int radius, bool final_successor = true);

  // Throws ContractViolation when t is not the next index of its episode or
  // the episode already terminated.
  void push(const Transition& tr);

  std::size_t size() const { return transitions_.size(); }
  std::size_t capacity() const { return capacity_; }
  int radius() const { return radius_; }
  bool final_successor() const { return final_successor_; }
  std::size_t episode_count() const { return episodes_.size(); }
  const Transition& at(std::size_t i) const { return transitions_[i]; }

  // Transitions of the episode holding transition i.
  std::vector<Transition> episode_of(std::size_t i) const;
  std::size_t episode_length(std::int64_t episode_id) const;

  // Distinct experienced embeddings of a task (empty when unknown).
  std::vector<Embedding> task_states(std::uint64_t task_id) const;
  std::size_t task_state_count(std::uint64_t task_id) const;

  struct Relabel {
    Target target;
    int source_time = -1;
  };
  // Time index of the last state episode/future relabeling may pick for the
  // episode holding transition i.
  int final_time(std::size_t i) const;

  // Throws FutureEmpty for Future when no state follows the transition and MissingGenerator
  // for Generate without a generator; nullopt when the generator abstains.
  std::optional<Relabel> relabel(std::size_t i, Strategy strategy, TargetGenerator* generator,
                                 Rng& rng) const;

  // Uniform transitions, each with a strategy drawn from the mix. Future on a
  // final transition falls back to episode; when the generator abstains the
  // strategy is redrawn from the remaining weights.
  std::vector<RelabeledSample> sample_batch(const RelabelMix& mix, std::size_t batch_size,
                                            TargetGenerator* generator, Rng& rng) const;

 private:
  struct EpisodeSpan {
    std::int64_t id;
    std::uint64_t first;  // global sequence number of the first transition
    std::size_t length;
    bool closed;
  };
  struct TaskIndex {
    std::vector<Embedding> states;
    std::unordered_map<EmbeddingKey, std::pair<std::size_t, int>> slot;  // key -> (pos, refs)
  };
  static EmbeddingKey packed_key(const Embedding& e) {
    return (e.y << 10 | e.x) << 2 | e.flag_class();
  }
  void add_state(std::uint64_t task, const Embedding& e);
  void remove_state(std::uint64_t task, const Embedding& e);
  void evict_front();

  std::size_t capacity_;
  int radius_;
  bool final_successor_;
  std::deque<Transition> transitions_;
  std::deque<EpisodeSpan> episodes_;
  std::uint64_t base_ = 0;  // global sequence number of transitions_.front()
  std::map<std::uint64_t, TaskIndex> tasks_;
  std::unordered_map<std::int64_t, std::size_t> lengths_;
};

}  // namespace tfe

#endif  // TFE_RELABEL_HPP
