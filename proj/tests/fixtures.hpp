// Shared helpers for the unit tests.
#ifndef TFE_TESTS_FIXTURES_HPP
#define TFE_TESTS_FIXTURES_HPP

#include <string>
#include <vector>

#include "tfe/envs.hpp"

namespace tfe::testing {

// Builds a task from glyph rows ('.', 'L', 'S', 'H', 'M', 'G').
inline GridTask grid(Family family, const std::vector<std::string>& rows,
                     std::uint64_t seed = 0) {
  std::string text = "family: " + std::string(family_name(family)) +
                     "\nwidth: " + std::to_string(rows.front().size()) +
                     "\nheight: " + std::to_string(rows.size()) +
                     "\ndifficulty: 0\nseed: " + std::to_string(seed) + "\ncells:\n";
  for (const auto& r : rows) text += r + "\n";
  return parse_task(text);
}

// 4x4 open room with the goal in the bottom-right corner.
inline GridTask open_room() {
  return grid(Family::RDS, {"....", "....", "....", "...G"});
}

inline Embedding rds(int x, int y) { return {x, y, true, true}; }

}  // namespace tfe::testing

#endif  // TFE_TESTS_FIXTURES_HPP
