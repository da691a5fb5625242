#ifndef TFE_ENVS_HPP
#define TFE_ENVS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tfe/common.hpp"

namespace tfe {

// RDS is navigation-only (agent always holds both items); SSM is
// sword/shield/monster.
enum class Family : std::uint8_t { RDS, SSM };

enum class CellKind : std::uint8_t { Floor, Lava, Sword, Shield, Monster, Goal };

enum class InitMode : std::uint8_t { AllNonterminal, FixedFarthest };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);

struct Position {
  int x = 0;
  int y = 0;
  friend bool operator==(const Position&, const Position&) = default;
};

inline int manhattan(Position a, Position b) {
  return (a.x > b.x ? a.x - b.x : b.x - a.x) + (a.y > b.y ? a.y - b.y : b.y - a.y);
}

// Structured form of a state: what g maps a state to, and what the evaluator
// consumes as features. Any on-grid combination is representable, including
// ones that correspond to no state of the task.
struct Embedding {
  int x = 0;
  int y = 0;
  bool has_sword = false;
  bool has_shield = false;

  Position position() const { return {x, y}; }
  int flag_class() const { return (has_sword ? 2 : 0) + (has_shield ? 1 : 0); }
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

// Dense key over the W*H*4 embedding space.
using EmbeddingKey = std::int32_t;

struct Target {
  Embedding embedding;
  int radius = 0;  // 0: exact match, 1: Manhattan neighborhood with equal flags
  friend bool operator==(const Target&, const Target&) = default;
};

struct EnvState {
  int x = 0;
  int y = 0;
  bool has_sword = false;
  bool has_shield = false;
  bool terminal = false;
  bool success = false;
  // Agent stepped onto lava. Such a state is terminal, is not part of the
  // enumerated state set, and is matched by no target.
  bool dead = false;

  Embedding embedding() const { return {x, y, has_sword, has_shield}; }
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct StateEncoding {
  int index = -1;
  Embedding features;
};

class GridTask {
 public:
  GridTask() = default;
  GridTask(Family family, int width, int height, double difficulty,
           std::uint64_t seed, std::vector<CellKind> cells);

  Family family() const { return family_; }
  int width() const { return width_; }
  int height() const { return height_; }
  double difficulty() const { return difficulty_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t task_id() const { return task_id_; }
  std::span<const CellKind> cells() const { return cells_; }

  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  CellKind at(int x, int y) const { return cells_[y * width_ + x]; }
  CellKind at(Position p) const { return at(p.x, p.y); }

  // Monster (SSM) or goal (RDS) cell.
  Position success_cell() const { return success_cell_; }
  std::optional<Position> sword_cell() const { return sword_; }
  std::optional<Position> shield_cell() const { return shield_; }

  int lava_count() const;
  int embedding_space_size() const { return width_ * height_ * 4; }
  EmbeddingKey key_of(const Embedding& e) const {
    return ((e.y * width_ + e.x) << 2) | e.flag_class();
  }
  Embedding embedding_of(EmbeddingKey key) const;
  bool contains(const Embedding& e) const { return in_bounds(e.x, e.y); }

  // Structured embedding of the task's success state; the planner's goal proxy.
  Embedding goal_embedding() const {
    return {success_cell_.x, success_cell_.y, true, true};
  }

  friend bool operator==(const GridTask& a, const GridTask& b) {
    return a.family_ == b.family_ && a.width_ == b.width_ &&
           a.height_ == b.height_ && a.difficulty_ == b.difficulty_ &&
           a.seed_ == b.seed_ && a.cells_ == b.cells_;
  }

 private:
  Family family_ = Family::RDS;
  int width_ = 0;
  int height_ = 0;
  double difficulty_ = 0.0;
  std::uint64_t seed_ = 0;
  std::uint64_t task_id_ = 0;
  std::vector<CellKind> cells_;
  Position success_cell_;
  std::optional<Position> sword_;
  std::optional<Position> shield_;
};

inline constexpr int kMaxGenerationAttempts = 10000;

// Throws Error(GenerationExhausted) when no solvable layout was found.
GridTask generate_task(Family family, int width, int height, double difficulty,
                       std::uint64_t seed);

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool terminal = false;
};

StepResult step(const GridTask& task, const EnvState& state, Action action);

inline Target target_of(const EnvState& state, int radius = 0) {
  return {state.embedding(), radius};
}

bool indicator(const Embedding& state, const Target& target, int radius);
bool indicator(const EnvState& state, const Target& target, int radius);

// The enumerable state graph of a task: every (position, flags) combination
// consistent with the layout, plus the deterministic transition table.
class StateSpace {
 public:
  static constexpr int kDead = -1;

  explicit StateSpace(const GridTask& task);

  const GridTask& task() const { return task_; }
  int size() const { return static_cast<int>(states_.size()); }
  std::span<const StateEncoding> states() const { return states_; }
  const StateEncoding& encoding(int index) const { return states_[index]; }
  EnvState state(int index) const;

  // -1 when the embedding names no state of the task.
  int index_of(const Embedding& e) const;
  int index_of(const EnvState& s) const;

  bool terminal(int index) const { return terminal_[index]; }
  bool success(int index) const { return success_[index]; }
  // Successor index, or kDead when the move enters lava.
  int successor(int index, Action a) const {
    return next_[index * kNumActions + action_index(a)];
  }
  double reward(int index, Action a) const {
    return reward_[index * kNumActions + action_index(a)];
  }

  // Shortest number of steps to a success terminal (-1 if unreachable).
  std::span<const int> steps_to_success() const { return steps_to_success_; }

  // Non-terminal states from which success is reachable: the training spawn set.
  std::span<const int> spawnable() const { return spawnable_; }

  // States reachable from `source` in zero or more steps, never leaving a
  // terminal state.
  std::vector<bool> reachable_from(int source) const;

 private:
  GridTask task_;
  std::vector<StateEncoding> states_;
  std::vector<int> index_by_key_;
  std::vector<bool> terminal_;
  std::vector<bool> success_;
  std::vector<int> next_;
  std::vector<double> reward_;
  std::vector<int> steps_to_success_;
  std::vector<int> spawnable_;
};

std::vector<StateEncoding> enumerate_states(const GridTask& task);

EnvState reset(const GridTask& task, InitMode mode, Rng& rng);
EnvState reset(const StateSpace& space, InitMode mode, Rng& rng);

void save_task(const GridTask& task, const std::filesystem::path& path);
GridTask load_task(const std::filesystem::path& path);
std::string format_task(const GridTask& task);
GridTask parse_task(std::string_view text);

}  // namespace tfe

#endif  // TFE_ENVS_HPP
