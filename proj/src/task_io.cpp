#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "tfe/envs.hpp"

namespace tfe {

namespace {

char glyph(CellKind c) {
  switch (c) {
    case CellKind::Floor: return '.';
    case CellKind::Lava: return 'L';
    case CellKind::Sword: return 'S';
    case CellKind::Shield: return 'H';
    case CellKind::Monster: return 'M';
    case CellKind::Goal: return 'G';
  }
  return '?';
}

std::optional<CellKind> cell_from_glyph(char g) {
  switch (g) {
    case '.': return CellKind::Floor;
    case 'L': return CellKind::Lava;
    case 'S': return CellKind::Sword;
    case 'H': return CellKind::Shield;
    case 'M': return CellKind::Monster;
    case 'G': return CellKind::Goal;
    default: return std::nullopt;
  }
}

[[noreturn]] void parse_fail(int line, const std::string& msg) {
  throw Error(ErrorCode::Parse, "line " + std::to_string(line) + ": " + msg);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

template <class T>
T parse_number(std::string_view text, int line, const char* field) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    parse_fail(line, std::string("field '") + field + "': not a number: '" +
                         std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::string format_task(const GridTask& task) {
  char difficulty[64];
  std::snprintf(difficulty, sizeof(difficulty), "%.17g", task.difficulty());
  std::ostringstream out;
  out << "family: " << family_name(task.family()) << '\n'
      << "width: " << task.width() << '\n'
      << "height: " << task.height() << '\n'
      << "difficulty: " << difficulty << '\n'
      << "seed: " << task.seed() << '\n'
      << "cells:\n";
  for (int y = 0; y < task.height(); ++y) {
    for (int x = 0; x < task.width(); ++x) out << glyph(task.at(x, y));
    out << '\n';
  }
  return out.str();
}

GridTask parse_task(std::string_view text) {
  std::map<std::string, std::pair<std::string, int>> fields;
  std::vector<std::pair<std::string, int>> rows;
  bool in_cells = false;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (in_cells) {
      if (!line.empty()) rows.emplace_back(std::string(line), line_no);
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) parse_fail(line_no, "expected 'key: value'");
    const std::string key(trim(line.substr(0, colon)));
    const std::string value(trim(line.substr(colon + 1)));
    if (key == "cells") {
      if (!value.empty()) parse_fail(line_no, "'cells:' must be followed by rows");
      in_cells = true;
      continue;
    }
    if (key != "family" && key != "width" && key != "height" && key != "difficulty" &&
        key != "seed") {
      parse_fail(line_no, "unknown field '" + key + "'");
    }
    if (fields.count(key)) parse_fail(line_no, "duplicate field '" + key + "'");
    fields[key] = {value, line_no};
  }
  for (const char* required : {"family", "width", "height", "difficulty", "seed"}) {
    if (!fields.count(required)) {
      parse_fail(line_no, std::string("missing field '") + required + "'");
    }
  }
  if (!in_cells) parse_fail(line_no, "missing 'cells:' section");

  const auto& [fam_text, fam_line] = fields["family"];
  Family family;
  try {
    family = parse_family(fam_text);
  } catch (const Error& e) {
    parse_fail(fam_line, e.what());
  }
  const int width = parse_number<int>(fields["width"].first, fields["width"].second, "width");
  const int height =
      parse_number<int>(fields["height"].first, fields["height"].second, "height");
  const double difficulty = parse_number<double>(
      fields["difficulty"].first, fields["difficulty"].second, "difficulty");
  const auto seed = parse_number<std::uint64_t>(fields["seed"].first,
                                                fields["seed"].second, "seed");
  if (!(difficulty >= 0.0 && difficulty <= 1.0)) {
    throw Error(ErrorCode::Validation, "line " + std::to_string(fields["difficulty"].second) +
                                           ": difficulty outside [0,1]");
  }
  if (width < 4 || height < 4) {
    throw Error(ErrorCode::Validation, "grid must be at least 4x4");
  }
  if (static_cast<int>(rows.size()) != height) {
    parse_fail(line_no, "expected " + std::to_string(height) + " cell rows, found " +
                            std::to_string(rows.size()));
  }
  std::vector<CellKind> cells;
  cells.reserve(static_cast<std::size_t>(width) * height);
  for (const auto& [row, row_line] : rows) {
    if (static_cast<int>(row.size()) != width) {
      parse_fail(row_line, "row has " + std::to_string(row.size()) + " cells, expected " +
                               std::to_string(width));
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      const auto c = cell_from_glyph(row[i]);
      if (!c) parse_fail(row_line, std::string("unknown glyph '") + row[i] + "'");
      cells.push_back(*c);
    }
  }
  return GridTask(family, width, height, difficulty, seed, std::move(cells));
}

void save_task(const GridTask& task, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << format_task(task);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

GridTask load_task(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_task(buf.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace tfe
