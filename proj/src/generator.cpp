#include "tfe/generator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace tfe {

namespace {

std::uint32_t pack(const Embedding& e) {
  return static_cast<std::uint32_t>((e.y << 10 | e.x) << 2 | e.flag_class());
}

Embedding unpack(std::uint32_t k) {
  const int cell = static_cast<int>(k >> 2);
  return {cell & 1023, cell >> 10, (k & 2) != 0, (k & 1) != 0};
}

int structural_distance(const Embedding& a, const Embedding& b) {
  return manhattan(a.position(), b.position()) +
         std::popcount(static_cast<unsigned>(a.flag_class() ^ b.flag_class()));
}

// Uniform among the keys closest to base.
Embedding nearest(const GridTask& task, std::span<const EmbeddingKey> keys,
                  const Embedding& base, Rng& rng) {
  int best = -1;
  std::vector<EmbeddingKey> ties;
  for (EmbeddingKey k : keys) {
    const int d = structural_distance(task.embedding_of(k), base);
    if (best < 0 || d < best) {
      best = d;
      ties.assign(1, k);
    } else if (d == best) {
      ties.push_back(k);
    }
  }
  return task.embedding_of(ties[uniform_index(rng, ties.size())]);
}

}  // namespace

// ---------------------------------------------------------------------------

HallucinationInjector::HallucinationInjector(const TaskCatalog& catalog, double p_g1,
                                             double p_g2, bool strict)
    : catalog_(catalog), p_g1_(p_g1), p_g2_(p_g2), strict_(strict) {
  if (!(p_g1 >= 0.0 && p_g2 >= 0.0 && p_g1 + p_g2 <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "hallucination rates must be in [0,1] and sum <= 1");
  }
}

Embedding HallucinationInjector::uniform_g0(std::uint64_t task_id, int source, Rng& rng) const {
  const auto keys = catalog_.g0_keys(task_id, source);
  return catalog_.task(task_id).embedding_of(keys[uniform_index(rng, keys.size())]);
}

Injection HallucinationInjector::inject(std::uint64_t task_id, int source, Rng& rng) {
  const Embedding base = uniform_g0(task_id, source, rng);
  return inject(task_id, source, base, rng);
}

Injection HallucinationInjector::inject(std::uint64_t task_id, int source, const Embedding& base,
                                        Rng& rng) {
  const double u = uniform01(rng);
  if (u < p_g1_) return corrupt(task_id, source, base, TargetCategory::G1, rng);
  if (u < p_g1_ + p_g2_) return corrupt(task_id, source, base, TargetCategory::G2, rng);
  return {Target{base, catalog_.radius()}, TargetCategory::G0, false};
}

Injection HallucinationInjector::corrupt(std::uint64_t task_id, int source, const Embedding& base,
                                         TargetCategory kind, Rng& rng) {
  const GridTask& task = catalog_.task(task_id);
  const int radius = catalog_.radius();
  if (kind == TargetCategory::G1) {
    const auto keys = catalog_.g1_keys(task_id);
    if (!keys.empty()) {
      return {Target{nearest(task, keys, base, rng), radius}, TargetCategory::G1, false};
    }
    // With a radius-1 indicator every embedding may sit next to some state.
    if (strict_) {
      throw Error(ErrorCode::InvalidArgument, "task has no permanently infeasible target");
    }
    ++fallbacks_;
    return {Target{base, radius}, TargetCategory::G0, true};
  }
  if (kind == TargetCategory::G2) {
    // Item removal first: the same position in a lower semantic class.
    std::vector<Embedding> downgrades;
    for (int flags = 0; flags < 4; ++flags) {
      if (flags == base.flag_class() || (flags & base.flag_class()) != flags) continue;
      const Embedding e{base.x, base.y, (flags & 2) != 0, (flags & 1) != 0};
      if (catalog_.categorize(task_id, source, e) == TargetCategory::G2) downgrades.push_back(e);
    }
    if (!downgrades.empty()) {
      return {Target{downgrades[uniform_index(rng, downgrades.size())], radius},
              TargetCategory::G2, false};
    }
    const auto keys = catalog_.g2_keys(task_id, source);
    if (!keys.empty()) {
      return {Target{nearest(task, keys, base, rng), radius}, TargetCategory::G2, false};
    }
    if (strict_) {
      throw Error(ErrorCode::G2Unavailable, "no temporarily infeasible target for this source");
    }
    ++fallbacks_;
    return {Target{base, radius}, TargetCategory::G0, true};
  }
  return {Target{base, radius}, TargetCategory::G0, false};
}

// ---------------------------------------------------------------------------

OneStepModel::OneStepModel(const TaskCatalog* catalog, double p_g1, double p_g2)
    : catalog_(catalog) {
  if (p_g1 > 0.0 || p_g2 > 0.0) {
    if (!catalog) throw Error(ErrorCode::InvalidArgument, "corruption needs a task catalog");
    injector_.emplace(*catalog, p_g1, p_g2);
  }
}

void OneStepModel::fit(const Transition& tr) {
  const auto key = std::make_tuple(tr.task_id, pack(tr.state.embedding()), action_index(tr.action));
  auto [it, inserted] = table_.try_emplace(key);
  if (inserted) pairs_.push_back({tr.task_id, tr.state.embedding(), tr.action});
  const Embedding next = tr.next.embedding();
  for (auto& o : it->second) {
    if (o.outcome.next == next && o.outcome.terminal == tr.terminal &&
        o.outcome.reward == tr.reward) {
      ++o.count;
      return;
    }
  }
  SimOutcome outcome;
  outcome.next = next;
  outcome.reward = tr.reward;
  outcome.terminal = tr.terminal;
  it->second.push_back({outcome, 1});
}

bool OneStepModel::seen(std::uint64_t task_id, const Embedding& s, Action a) const {
  return table_.count(std::make_tuple(task_id, pack(s), action_index(a))) != 0;
}

std::optional<SimOutcome> OneStepModel::sample_next(std::uint64_t task_id, const Embedding& s,
                                                    Action a, Rng& rng) {
  const auto it = table_.find(std::make_tuple(task_id, pack(s), action_index(a)));
  if (it == table_.end()) return std::nullopt;
  const auto& observed = it->second;
  std::size_t pick = 0;
  if (observed.size() > 1) {
    std::vector<double> w;
    for (const auto& o : observed) w.push_back(static_cast<double>(o.count));
    pick = sample_categorical(rng, w);
  }
  SimOutcome out = observed[pick].outcome;
  if (!injector_) return out;
  const double u = uniform01(rng);
  TargetCategory kind = TargetCategory::G0;
  if (u < injector_->p_g1()) {
    kind = TargetCategory::G1;
  } else if (u < injector_->p_g1() + injector_->p_g2()) {
    kind = TargetCategory::G2;
  }
  if (kind == TargetCategory::G0) return out;
  const int source = catalog_->space(task_id).index_of(s);
  const Injection inj = injector_->corrupt(task_id, source, out.next, kind, rng);
  if (inj.fallback) return out;
  out.next = inj.target.embedding;
  out.reward = 0.0;
  out.terminal = false;
  out.corrupted = true;
  out.category = inj.category;
  return out;
}

// ---------------------------------------------------------------------------

ConditionalTargetSampler::ConditionalTargetSampler(double temperature)
    : temperature_(temperature) {
  if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
}

void ConditionalTargetSampler::fit(std::uint64_t task_id, const Embedding& source,
                                   const Embedding& target) {
  ++counts_[{task_id, pack(source)}][pack(target)];
}

void ConditionalTargetSampler::fit_future(std::span<const Transition> episode) {
  for (std::size_t t = 0; t < episode.size(); ++t) {
    for (std::size_t u = t + 1; u < episode.size(); ++u) {
      fit(episode[t].task_id, episode[t].state.embedding(), episode[u].state.embedding());
    }
  }
}

bool ConditionalTargetSampler::knows(std::uint64_t task_id, const Embedding& source) const {
  return counts_.count({task_id, pack(source)}) != 0;
}

std::vector<double> ConditionalTargetSampler::weights(
    const std::map<std::uint32_t, std::int64_t>& counts) const {
  std::vector<double> w;
  w.reserve(counts.size());
  if (temperature_ <= 1e-9) {
    std::int64_t best = 0;
    for (const auto& [k, c] : counts) best = std::max(best, c);
    bool taken = false;  // mode, ties to the lowest key
    for (const auto& [k, c] : counts) {
      w.push_back(!taken && c == best ? 1.0 : 0.0);
      taken = taken || c == best;
    }
    return w;
  }
  for (const auto& [k, c] : counts) w.push_back(std::pow(static_cast<double>(c), 1.0 / temperature_));
  return w;
}

double ConditionalTargetSampler::probability(std::uint64_t task_id, const Embedding& source,
                                             const Embedding& target) const {
  const auto it = counts_.find({task_id, pack(source)});
  if (it == counts_.end()) return 0.0;
  const auto w = weights(it->second);
  double total = 0.0, hit = 0.0;
  std::size_t i = 0;
  for (const auto& [k, c] : it->second) {
    total += w[i];
    if (k == pack(target)) hit = w[i];
    ++i;
  }
  return hit / total;
}

std::vector<Embedding> ConditionalTargetSampler::sample(std::uint64_t task_id,
                                                        const Embedding& source, int k,
                                                        Rng& rng) const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  const auto it = counts_.find({task_id, pack(source)});
  if (it == counts_.end()) return {};
  const auto w = weights(it->second);
  std::vector<std::uint32_t> keys;
  keys.reserve(it->second.size());
  for (const auto& [key, c] : it->second) keys.push_back(key);
  std::vector<Embedding> out;
  out.reserve(k);
  for (int n = 0; n < k; ++n) out.push_back(unpack(keys[sample_categorical(rng, w)]));
  return out;
}

// ---------------------------------------------------------------------------

CandidateGenerator::CandidateGenerator(const TaskCatalog& catalog,
                                       const ConditionalTargetSampler* sampler,
                                       HallucinationInjector& injector)
    : catalog_(catalog), sampler_(sampler), injector_(injector) {}

std::vector<Injection> CandidateGenerator::candidates(std::uint64_t task_id,
                                                      const EnvState& state, int k, Rng& rng) {
  const int source = catalog_.space(task_id).index_of(state);
  if (source < 0) throw Error(ErrorCode::InvalidArgument, "candidate source is not a state");
  std::vector<Embedding> bases;
  if (sampler_) bases = sampler_->sample(task_id, state.embedding(), k, rng);
  while (static_cast<int>(bases.size()) < k) {
    bases.push_back(injector_.uniform_g0(task_id, source, rng));
  }
  std::vector<Injection> out;
  out.reserve(k);
  for (const auto& b : bases) out.push_back(injector_.inject(task_id, source, b, rng));
  return out;
}

std::optional<Target> CandidateGenerator::generate(const Transition& tr, Rng& rng) {
  return candidates(tr.task_id, tr.state, 1, rng).front().target;
}

std::optional<Target> ModelTargetGenerator::generate(const Transition& tr, Rng& rng) {
  const auto out = model_.sample_next(tr.task_id, tr.state.embedding(), tr.action, rng);
  if (!out) return std::nullopt;
  return Target{out->next, 0};
}

}  // namespace tfe
