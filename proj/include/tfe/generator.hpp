#ifndef TFE_GENERATOR_HPP
#define TFE_GENERATOR_HPP

#include <map>
#include <optional>
#include <vector>

#include "tfe/catalog.hpp"
#include "tfe/relabel.hpp"

namespace tfe {

struct Injection {
  Target target;
  TargetCategory category = TargetCategory::G0;
  bool fallback = false;  // the requested kind does not exist for the source
};

// Emits targets with prescribed G1/G2 rates. Hallucinated targets are drawn
// from the catalog's certified sets, structurally close to the valid base
// target: G1 from the nearest non-member embeddings, G2 by removing items
// from the base where that yields an unreachable state, else the nearest
// unreachable state.
class HallucinationInjector {
 public:
  HallucinationInjector(const TaskCatalog& catalog, double p_g1, double p_g2,
                        bool strict = false);

  double p_g1() const { return p_g1_; }
  double p_g2() const { return p_g2_; }

  // base must be a G0 embedding for the source.
  Injection inject(std::uint64_t task_id, int source, const Embedding& base, Rng& rng);
  // Draws the G0 base uniformly over states reachable from the source.
  Injection inject(std::uint64_t task_id, int source, Rng& rng);

  // A hallucination of the requested kind. With strict=false a missing kind
  // falls back to the base and is counted; strict=true throws (G2Unavailable
  // for G2).
  Injection corrupt(std::uint64_t task_id, int source, const Embedding& base,
                    TargetCategory kind, Rng& rng);

  Embedding uniform_g0(std::uint64_t task_id, int source, Rng& rng) const;

  std::int64_t fallbacks() const { return fallbacks_; }

 private:
  const TaskCatalog& catalog_;
  double p_g1_;
  double p_g2_;
  bool strict_;
  std::int64_t fallbacks_ = 0;
};

struct SimOutcome {
  Embedding next;
  double reward = 0.0;
  bool terminal = false;
  bool corrupted = false;
  TargetCategory category = TargetCategory::G0;  // intended category of a corruption
};

// Empirical one-step model with a structured corruption channel. Corrupted
// successors carry reward 0 and are non-terminal.
class OneStepModel {
 public:
  // catalog may be null when both rates are 0.
  OneStepModel(const TaskCatalog* catalog = nullptr, double p_g1 = 0.0, double p_g2 = 0.0);

  void fit(const Transition& tr);
  bool seen(std::uint64_t task_id, const Embedding& s, Action a) const;

  // nullopt for an unseen (s, a).
  std::optional<SimOutcome> sample_next(std::uint64_t task_id, const Embedding& s, Action a,
                                        Rng& rng);

  struct Pair {
    std::uint64_t task_id;
    Embedding state;
    Action action;
  };
  // Distinct observed pairs in first-seen order.
  const std::vector<Pair>& pairs() const { return pairs_; }

  const HallucinationInjector* injector() const {
    return injector_ ? &*injector_ : nullptr;
  }

 private:
  struct Observed {
    SimOutcome outcome;
    std::int64_t count;
  };
  std::map<std::tuple<std::uint64_t, std::uint32_t, int>, std::vector<Observed>> table_;
  std::vector<Pair> pairs_;
  const TaskCatalog* catalog_;
  std::optional<HallucinationInjector> injector_;
};

// Conditional categorical over target embeddings given a source, fit from
// future-relabeled pairs.
class ConditionalTargetSampler {
 public:
  explicit ConditionalTargetSampler(double temperature = 1.0);

  void fit(std::uint64_t task_id, const Embedding& source, const Embedding& target);
  // Every (s_t, s_t') with t < t' among the episode's source states.
  void fit_future(std::span<const Transition> episode);

  bool knows(std::uint64_t task_id, const Embedding& source) const;
  double probability(std::uint64_t task_id, const Embedding& source,
                     const Embedding& target) const;

  // Empty when the source was never observed.
  std::vector<Embedding> sample(std::uint64_t task_id, const Embedding& source, int k,
                                Rng& rng) const;

 private:
  std::vector<double> weights(const std::map<std::uint32_t, std::int64_t>& counts) const;

  double temperature_;
  std::map<std::pair<std::uint64_t, std::uint32_t>, std::map<std::uint32_t, std::int64_t>>
      counts_;
};

// Candidate producer for planning and for generate-relabeling: a learned
// sampler supplies the valid base (uniform reachable state when it has not
// seen the source), the injector overlays hallucinations.
class CandidateGenerator final : public TargetGenerator {
 public:
  CandidateGenerator(const TaskCatalog& catalog, const ConditionalTargetSampler* sampler,
                     HallucinationInjector& injector);

  std::vector<Injection> candidates(std::uint64_t task_id, const EnvState& state, int k,
                                    Rng& rng);
  std::optional<Target> generate(const Transition& tr, Rng& rng) override;

 private:
  const TaskCatalog& catalog_;
  const ConditionalTargetSampler* sampler_;
  HallucinationInjector& injector_;
};

// Generate-relabeling through a one-step model: the target is the model's
// (possibly corrupted) prediction of s' for the transition's (s, a).
class ModelTargetGenerator final : public TargetGenerator {
 public:
  explicit ModelTargetGenerator(OneStepModel& model) : model_(model) {}
  std::optional<Target> generate(const Transition& tr, Rng& rng) override;

 private:
  OneStepModel& model_;
};

}  // namespace tfe

#endif  // TFE_GENERATOR_HPP
