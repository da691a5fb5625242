#include "tfe/envs.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <numeric>

namespace tfe {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::GenerationExhausted: return "GenerationExhausted";
    case ErrorCode::SteppedTerminal: return "SteppedTerminal";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Validation: return "ValidationError";
    case ErrorCode::FutureEmpty: return "FutureEmpty";
    case ErrorCode::MissingGenerator: return "MissingGenerator";
    case ErrorCode::EmptyStore: return "EmptyStore";
    case ErrorCode::UnseenPair: return "UnseenPair";
    case ErrorCode::G2Unavailable: return "G2Unavailable";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ContractViolation: return "ContractViolation";
    case ErrorCode::Io: return "IoError";
  }
  return "Unknown";
}

std::string_view family_name(Family f) { return f == Family::SSM ? "SSM" : "RDS"; }

Family parse_family(std::string_view name) {
  if (name == "SSM" || name == "ssm") return Family::SSM;
  if (name == "RDS" || name == "rds") return Family::RDS;
  throw Error(ErrorCode::Parse, "unknown family '" + std::string(name) + "'");
}

namespace {

std::uint64_t hash_task_fields(Family family, int width, int height,
                               double difficulty, std::uint64_t seed) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &difficulty, sizeof(bits));
  std::uint64_t h = derive_seed(seed, static_cast<std::uint64_t>(family));
  h = derive_seed(h, static_cast<std::uint64_t>(width) << 32 |
                         static_cast<std::uint32_t>(height));
  return derive_seed(h, bits);
}

}  // namespace

GridTask::GridTask(Family family, int width, int height, double difficulty,
                   std::uint64_t seed, std::vector<CellKind> cells)
    : family_(family),
      width_(width),
      height_(height),
      difficulty_(difficulty),
      seed_(seed),
      cells_(std::move(cells)) {
  if (width < 4 || height < 4) {
    throw Error(ErrorCode::Validation, "grid must be at least 4x4");
  }
  if (!(difficulty >= 0.0 && difficulty <= 1.0)) {
    throw Error(ErrorCode::Validation, "difficulty outside [0,1]");
  }
  if (cells_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::Validation, "cell count does not match grid size");
  }
  int swords = 0, shields = 0, monsters = 0, goals = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      switch (at(x, y)) {
        case CellKind::Sword: ++swords; sword_ = Position{x, y}; break;
        case CellKind::Shield: ++shields; shield_ = Position{x, y}; break;
        case CellKind::Monster: ++monsters; success_cell_ = {x, y}; break;
        case CellKind::Goal: ++goals; success_cell_ = {x, y}; break;
        default: break;
      }
    }
  }
  if (family == Family::SSM) {
    if (swords != 1 || shields != 1 || monsters != 1 || goals != 0) {
      throw Error(ErrorCode::Validation,
                  "SSM task needs exactly one sword, shield and monster and no goal");
    }
  } else if (goals != 1 || swords + shields + monsters != 0) {
    throw Error(ErrorCode::Validation,
                "RDS task needs exactly one goal and no items or monster");
  }
  task_id_ = hash_task_fields(family, width, height, difficulty, seed);
}

int GridTask::lava_count() const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(), CellKind::Lava));
}

Embedding GridTask::embedding_of(EmbeddingKey key) const {
  const int cell = key >> 2;
  return {cell % width_, cell / width_, (key & 2) != 0, (key & 1) != 0};
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kDx[kNumActions] = {0, 0, -1, 1};
constexpr int kDy[kNumActions] = {-1, 1, 0, 0};

// Flag classes a family can occupy, in enumeration order.
std::span<const int> flag_classes(Family f) {
  static constexpr int kSsm[] = {0, 1, 2, 3};
  static constexpr int kRds[] = {3};
  if (f == Family::SSM) return kSsm;
  return kRds;
}

bool valid_placement(const GridTask& task, const Embedding& e) {
  if (!task.in_bounds(e.x, e.y)) return false;
  const CellKind c = task.at(e.x, e.y);
  if (c == CellKind::Lava) return false;
  if (task.family() == Family::RDS) return e.has_sword && e.has_shield;
  // An item still on the board cannot be under the agent.
  if (c == CellKind::Sword && !e.has_sword) return false;
  if (c == CellKind::Shield && !e.has_shield) return false;
  return true;
}

}  // namespace

StepResult step(const GridTask& task, const EnvState& state, Action action) {
  if (state.terminal) {
    throw Error(ErrorCode::SteppedTerminal, "step called on a terminal state");
  }
  const int a = action_index(action);
  EnvState next = state;
  const int nx = state.x + kDx[a];
  const int ny = state.y + kDy[a];
  if (task.in_bounds(nx, ny)) {
    next.x = nx;
    next.y = ny;
  }
  StepResult out;
  switch (task.at(next.x, next.y)) {
    case CellKind::Lava:
      next.terminal = true;
      next.dead = true;
      break;
    case CellKind::Sword: next.has_sword = true; break;
    case CellKind::Shield: next.has_shield = true; break;
    case CellKind::Monster:
      next.terminal = true;
      next.success = next.has_sword && next.has_shield;
      break;
    case CellKind::Goal:
      next.terminal = true;
      next.success = true;
      break;
    case CellKind::Floor: break;
  }
  out.state = next;
  out.terminal = next.terminal;
  out.reward = next.success ? 1.0 : 0.0;
  return out;
}

bool indicator(const Embedding& state, const Target& target, int radius) {
  const Embedding& g = target.embedding;
  if (state.has_sword != g.has_sword || state.has_shield != g.has_shield) return false;
  if (radius <= 0) return state.x == g.x && state.y == g.y;
  return manhattan(state.position(), g.position()) <= radius;
}

bool indicator(const EnvState& state, const Target& target, int radius) {
  if (state.dead) return false;
  return indicator(state.embedding(), target, radius);
}

std::vector<StateEncoding> enumerate_states(const GridTask& task) {
  std::vector<StateEncoding> out;
  for (int cls : flag_classes(task.family())) {
    for (int y = 0; y < task.height(); ++y) {
      for (int x = 0; x < task.width(); ++x) {
        Embedding e{x, y, (cls & 2) != 0, (cls & 1) != 0};
        if (!valid_placement(task, e)) continue;
        out.push_back({static_cast<int>(out.size()), e});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

StateSpace::StateSpace(const GridTask& task)
    : task_(task), states_(enumerate_states(task)) {
  const int n = size();
  index_by_key_.assign(task.embedding_space_size(), -1);
  for (const auto& s : states_) index_by_key_[task.key_of(s.features)] = s.index;

  terminal_.resize(n);
  success_.resize(n);
  next_.assign(static_cast<std::size_t>(n) * kNumActions, kDead);
  reward_.assign(static_cast<std::size_t>(n) * kNumActions, 0.0);
  for (int i = 0; i < n; ++i) {
    const EnvState s = state(i);
    terminal_[i] = s.terminal;
    success_[i] = s.success;
  }
  std::vector<std::vector<int>> predecessors(n);
  for (int i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * kNumActions;
    if (terminal_[i]) {
      for (int a = 0; a < kNumActions; ++a) next_[base + a] = i;
      continue;
    }
    const EnvState s = state(i);
    for (int a = 0; a < kNumActions; ++a) {
      const StepResult r = step(task_, s, action_from_index(a));
      reward_[base + a] = r.reward;
      if (r.state.dead) continue;
      const int j = index_of(r.state.embedding());
      next_[base + a] = j;
      predecessors[j].push_back(i);
    }
  }

  steps_to_success_.assign(n, -1);
  std::deque<int> frontier;
  for (int i = 0; i < n; ++i) {
    if (success_[i]) {
      steps_to_success_[i] = 0;
      frontier.push_back(i);
    }
  }
  while (!frontier.empty()) {
    const int j = frontier.front();
    frontier.pop_front();
    for (int i : predecessors[j]) {
      if (steps_to_success_[i] >= 0) continue;
      steps_to_success_[i] = steps_to_success_[j] + 1;
      frontier.push_back(i);
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!terminal_[i] && steps_to_success_[i] > 0) spawnable_.push_back(i);
  }
}

EnvState StateSpace::state(int index) const {
  const Embedding& e = states_[index].features;
  EnvState s{e.x, e.y, e.has_sword, e.has_shield, false, false, false};
  if (e.position() == task_.success_cell()) {
    s.terminal = true;
    s.success = task_.family() == Family::RDS || (e.has_sword && e.has_shield);
  }
  return s;
}

int StateSpace::index_of(const Embedding& e) const {
  if (!task_.contains(e)) return -1;
  return index_by_key_[task_.key_of(e)];
}

int StateSpace::index_of(const EnvState& s) const {
  if (s.dead) return -1;
  return index_of(s.embedding());
}

std::vector<bool> StateSpace::reachable_from(int source) const {
  std::vector<bool> seen(size(), false);
  std::deque<int> frontier{source};
  seen[source] = true;
  while (!frontier.empty()) {
    const int i = frontier.front();
    frontier.pop_front();
    if (terminal_[i]) continue;
    for (int a = 0; a < kNumActions; ++a) {
      const int j = next_[static_cast<std::size_t>(i) * kNumActions + a];
      if (j == kDead || seen[j]) continue;
      seen[j] = true;
      frontier.push_back(j);
    }
  }
  return seen;
}

// ---------------------------------------------------------------------------

namespace {

int fixed_farthest_index(const StateSpace& space) {
  const int wanted = space.task().family() == Family::SSM ? 0 : 3;
  int best = -1;
  int best_dist = -1;
  const auto dist = space.steps_to_success();
  for (int i = 0; i < space.size(); ++i) {
    if (space.terminal(i) || space.encoding(i).features.flag_class() != wanted) continue;
    if (dist[i] > best_dist) {
      best_dist = dist[i];
      best = i;
    }
  }
  return best_dist > 0 ? best : -1;
}

bool solvable(const GridTask& task) {
  const StateSpace space(task);
  return fixed_farthest_index(space) >= 0;
}

}  // namespace

GridTask generate_task(Family family, int width, int height, double difficulty,
                       std::uint64_t seed) {
  if (width < 4 || height < 4) {
    throw Error(ErrorCode::InvalidArgument, "grid must be at least 4x4");
  }
  if (!(difficulty >= 0.0 && difficulty <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "difficulty outside [0,1]");
  }
  const int n_cells = width * height;
  const int n_special = family == Family::SSM ? 3 : 1;
  const int eligible = n_cells - n_special;
  const int n_lava = static_cast<int>(std::lround(difficulty * eligible));

  std::vector<int> order(n_cells);
  for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates: first n_special cells are items, next n_lava are lava.
    const int n_draw = n_special + n_lava;
    for (int i = 0; i < n_draw; ++i) {
      const int j = i + static_cast<int>(uniform_index(rng, n_cells - i));
      std::swap(order[i], order[j]);
    }
    std::vector<CellKind> cells(n_cells, CellKind::Floor);
    if (family == Family::SSM) {
      cells[order[0]] = CellKind::Sword;
      cells[order[1]] = CellKind::Shield;
      cells[order[2]] = CellKind::Monster;
    } else {
      cells[order[0]] = CellKind::Goal;
    }
    for (int i = n_special; i < n_draw; ++i) cells[order[i]] = CellKind::Lava;

    GridTask task(family, width, height, difficulty, seed, std::move(cells));
    if (solvable(task)) return task;
  }
  throw Error(ErrorCode::GenerationExhausted,
              "no solvable layout after " + std::to_string(kMaxGenerationAttempts) +
                  " attempts (difficulty too high for the grid)");
}

EnvState reset(const StateSpace& space, InitMode mode, Rng& rng) {
  if (mode == InitMode::FixedFarthest) {
    const int i = fixed_farthest_index(space);
    if (i < 0) throw Error(ErrorCode::Validation, "task has no solvable start");
    return space.state(i);
  }
  const auto spawn = space.spawnable();
  if (spawn.empty()) throw Error(ErrorCode::Validation, "task has no solvable start");
  return space.state(spawn[uniform_index(rng, spawn.size())]);
}

EnvState reset(const GridTask& task, InitMode mode, Rng& rng) {
  return reset(StateSpace(task), mode, rng);
}

}  // namespace tfe
