#include "tfe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <tuple>

namespace tfe {

namespace {

auto row_key(const MetricsRow& r) {
  return std::tie(r.run_id, r.seed, r.step, r.metric, r.key);
}

void check_field(const std::string& s, const char* name) {
  if (s.find_first_of(",\n\r\"") != std::string::npos) {
    throw Error(ErrorCode::InvalidArgument,
                std::string("metrics ") + name + " must not contain commas, quotes or newlines");
  }
}

}  // namespace

void write_metrics_csv(std::ostream& out, std::vector<MetricsRow> rows) {
  std::sort(rows.begin(), rows.end(),
            [](const MetricsRow& a, const MetricsRow& b) { return row_key(a) < row_key(b); });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (row_key(rows[i - 1]) == row_key(rows[i])) {
      throw Error(ErrorCode::ContractViolation, "duplicate metrics row for " + rows[i].metric +
                                                    "/" + rows[i].key + " at step " +
                                                    std::to_string(rows[i].step));
    }
  }
  out << kMetricsHeader << '\n';
  char buf[64];
  for (const auto& r : rows) {
    check_field(r.run_id, "run_id");
    check_field(r.metric, "metric");
    check_field(r.key, "key");
    std::snprintf(buf, sizeof(buf), "%.9g", r.value);
    out << r.run_id << ',' << r.seed << ',' << r.step << ',' << r.metric << ',' << r.key << ','
        << buf << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw Error(ErrorCode::Parse, "metrics CSV: missing or wrong header");
  }
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) {
      throw Error(ErrorCode::Parse, "metrics CSV line " + std::to_string(line_no) +
                                        ": expected 6 fields, got " + std::to_string(f.size()));
    }
    MetricsRow r;
    try {
      r.run_id = f[0];
      r.seed = std::stoull(f[1]);
      r.step = std::stoll(f[2]);
      r.metric = f[3];
      r.key = f[4];
      r.value = std::stod(f[5]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, "metrics CSV line " + std::to_string(line_no) + ": bad number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<ProbePair> build_probe_set(const TaskCatalog& catalog,
                                       std::span<const std::uint64_t> tasks, int support_size,
                                       std::size_t max_per_category, Rng& rng) {
  // Reservoir sampling per category keeps the choice uniform in one pass.
  std::array<std::vector<ProbePair>, 3> reservoir;
  std::array<std::uint64_t, 3> seen{};
  for (const std::uint64_t id : tasks) {
    const StateSpace& space = catalog.space(id);
    const GridTask& task = space.task();
    for (const int source : space.spawnable()) {
      for (EmbeddingKey k = 0; k < task.embedding_space_size(); ++k) {
        ProbePair p;
        p.task_id = id;
        p.source = source;
        p.target = task.embedding_of(k);
        p.category = catalog.categorize(id, source, p.target);
        const int c = static_cast<int>(p.category);
        auto& res = reservoir[c];
        ++seen[c];
        if (res.size() < max_per_category) {
          res.push_back(p);
        } else {
          const std::size_t j = uniform_index(rng, seen[c]);
          if (j < max_per_category) res[j] = p;
        }
      }
    }
  }
  std::vector<ProbePair> out;
  for (auto& res : reservoir) {
    std::sort(res.begin(), res.end(), [](const ProbePair& a, const ProbePair& b) {
      return std::make_tuple(a.task_id, a.target.y, a.target.x, a.target.flag_class(), a.source) <
             std::make_tuple(b.task_id, b.target.y, b.target.x, b.target.flag_class(), b.source);
    });
    out.insert(out.end(), res.begin(), res.end());
  }
  // Exact distances for G0 pairs, one oracle table per distinct target.
  std::size_t i = 0;
  while (i < out.size()) {
    std::size_t j = i;
    while (j < out.size() && out[j].task_id == out[i].task_id && out[j].target == out[i].target &&
           out[j].category == out[i].category) {
      ++j;
    }
    if (out[i].category == TargetCategory::G0) {
      const StateSpace& space = catalog.space(out[i].task_id);
      const auto table = distance_distribution(space, PolicySpec::greedy_to_target(),
                                               catalog.match_mask(out[i].task_id, out[i].target),
                                               support_size);
      for (std::size_t k = i; k < j; ++k) {
        out[k].true_distance = table.at(out[k].source).expected_distance();
      }
    } else {
      for (std::size_t k = i; k < j; ++k) out[k].true_distance = support_size;
    }
    i = j;
  }
  return out;
}

std::string e0_bucket(double d, int T) {
  if (d < 1.0 || d > T - 1) return "";
  if (d <= 2.0) return "1-2";
  if (d <= 4.0) return "3-4";
  if (d <= 8.0) return "5-8";
  return "9-" + std::to_string(T - 1);
}

std::map<std::string, double> e_error(const Evaluator& evaluator, const TaskCatalog& catalog,
                                      std::span<const ProbePair> pairs, TargetCategory category) {
  std::map<std::string, std::pair<double, std::int64_t>> acc;
  const int T = evaluator.support_size();
  for (const auto& p : pairs) {
    if (p.category != category) continue;
    const std::string bucket = category == TargetCategory::G0 ? e0_bucket(p.true_distance, T) : "all";
    if (bucket.empty()) continue;
    const Embedding source = catalog.space(p.task_id).encoding(p.source).features;
    const double est = evaluator.predict({p.task_id, source, p.target}).expected_distance();
    auto& a = acc[bucket];
    a.first += std::abs(est - p.true_distance);
    ++a.second;
  }
  std::map<std::string, double> out;
  for (const auto& [k, a] : acc) out[k] = a.first / static_cast<double>(a.second);
  return out;
}

double delusion_frequency(std::span<const PlanRecord> log, const TaskCatalog& catalog) {
  if (log.empty()) return 0.0;
  std::size_t deluded = 0;
  for (const auto& r : log) {
    const int source = catalog.space(r.task_id).index_of(r.source);
    if (catalog.categorize(r.task_id, source, r.target.embedding) != TargetCategory::G0) ++deluded;
  }
  return static_cast<double>(deluded) / static_cast<double>(log.size());
}

double q_error(const QTable& q, const StateSpace& space, std::span<const double> q_star) {
  const auto est = q.dense(space);
  if (q_star.size() != est.size()) {
    throw Error(ErrorCode::InvalidArgument, "optimal Q table does not match the task");
  }
  double total = 0.0;
  std::int64_t n = 0;
  for (int s = 0; s < space.size(); ++s) {
    if (space.terminal(s)) continue;
    for (int a = 0; a < kNumActions; ++a) {
      const std::size_t k = static_cast<std::size_t>(s) * kNumActions + a;
      total += std::abs(est[k] - q_star[k]);
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

OodResult ood_protocol(const EpisodeRunner& run, Family family, int width, int height,
                       std::span<const double> difficulties, int n_per, std::uint64_t seed) {
  if (n_per < 1) throw Error(ErrorCode::InvalidArgument, "n_per must be at least 1");
  OodResult r;
  double total = 0.0;
  int count = 0;
  for (std::size_t d = 0; d < difficulties.size(); ++d) {
    double sum = 0.0;
    for (int i = 0; i < n_per; ++i) {
      const std::uint64_t task_seed = derive_seed(seed, d * 100003 + i);
      const GridTask task = generate_task(family, width, height, difficulties[d], task_seed);
      Rng rng(derive_seed(task_seed, 0xE7A1));
      const EnvState start = reset(task, InitMode::FixedFarthest, rng);
      sum += run(task, start, rng);
    }
    r.difficulties.push_back(difficulties[d]);
    r.mean_return.push_back(sum / n_per);
    r.episodes.push_back(n_per);
    total += sum;
    count += n_per;
  }
  r.pooled = count ? total / count : 0.0;
  return r;
}

}  // namespace tfe
