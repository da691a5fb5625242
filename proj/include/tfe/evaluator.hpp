#ifndef TFE_EVALUATOR_HPP
#define TFE_EVALUATOR_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "tfe/envs.hpp"
#include "tfe/histogram.hpp"
#include "tfe/oracle.hpp"

namespace tfe {

enum class Backend : std::uint8_t { Tabular, Feedforward };

// How the continuation action a' is chosen when bootstrapping, and how
// action-free queries are answered.
//   Control: greedy min-expected-distance action under the target network.
//   Evaluation: expectation under a supplied policy.
enum class ContinuationForm : std::uint8_t { Control, Evaluation };

std::string_view backend_name(Backend b);
Backend parse_backend(std::string_view name);

struct EvaluatorConfig {
  Backend backend = Backend::Tabular;
  int support_size = 16;
  ContinuationForm form = ContinuationForm::Control;
  // Tabular: step size of the per-cell averaging. Feedforward: Adam step size.
  double learning_rate = 0.5;
  // Target network refresh period in train_batch calls; 1 bootstraps on the
  // online parameters.
  int sync_period = 1;
  int hidden_layers = 3;
  int hidden_width = 128;
  // Feature scale for the feedforward backend (positions divided by extent-1).
  int grid_width = 8;
  int grid_height = 8;
  std::uint64_t seed = 0;
};

// One source-target query. The target's radius is a property of the
// training data (it decides when h fires), not of the query.
struct EvalQuery {
  std::uint64_t task_id = 0;
  Embedding source;
  Embedding target;
};

// The fields of a relabeled transition the backup needs.
struct BackupSample {
  std::uint64_t task_id = 0;
  Embedding source;
  Action action = Action::Up;
  Embedding next;
  bool next_terminal = false;
  bool hit = false;  // h(s', target)
  Embedding target;
};

struct ActionQuery {
  EvalQuery query;
  Action action = Action::Up;
};

// Action distribution used by the evaluation form, keyed by the successor.
using ContinuationPolicy =
    std::function<ActionProbs(std::uint64_t task_id, const Embedding& state)>;

class Evaluator {
 public:
  explicit Evaluator(EvaluatorConfig config);
  virtual ~Evaluator() = default;
  Evaluator(const Evaluator&) = delete;
  Evaluator& operator=(const Evaluator&) = delete;

  const EvaluatorConfig& config() const { return config_; }
  int support_size() const { return config_.support_size; }

  void set_continuation_policy(ContinuationPolicy policy) { policy_ = std::move(policy); }

  DistanceHistogram predict(const EvalQuery& q, Action a) const {
    return predict_impl(q, a, false);
  }
  // Action-marginal: the greedy action's histogram in control form, the
  // policy mixture in evaluation form.
  DistanceHistogram predict(const EvalQuery& q) const { return marginal(q, false); }

  DistanceHistogram backup(const BackupSample& sample) const;

  // Returns the mean cross-entropy before the update.
  double train_batch(std::span<const BackupSample> samples);

  std::int64_t steps() const { return steps_; }

  virtual void save(const std::filesystem::path& path) const = 0;

 protected:
  virtual DistanceHistogram predict_impl(const EvalQuery& q, Action a,
                                         bool target_net) const = 0;
  virtual double apply_update(std::span<const BackupSample> samples,
                              std::span<const DistanceHistogram> targets) = 0;
  // Batched predict_impl; backends that can share work override it.
  virtual std::vector<DistanceHistogram> predict_many(std::span<const ActionQuery> queries,
                                                      bool target_net) const;
  virtual void sync_target() {}

  DistanceHistogram marginal(const EvalQuery& q, bool target_net) const;
  // Combines the per-action histograms of q (indexed by action) into the marginal.
  DistanceHistogram combine(const EvalQuery& q, std::span<const DistanceHistogram> per_action) const;

  EvaluatorConfig config_;
  ContinuationPolicy policy_;
  std::int64_t steps_ = 0;
};

// Per-cell histograms keyed by (task, source, action, target). Unseen cells
// read as uniform.
class TabularEvaluator final : public Evaluator {
 public:
  explicit TabularEvaluator(EvaluatorConfig config);

  void save(const std::filesystem::path& path) const override;
  static std::unique_ptr<TabularEvaluator> load(const std::filesystem::path& path);

  std::size_t cell_count() const { return index_.size(); }
  bool has_cell(const EvalQuery& q, Action a) const;

  friend bool operator==(const TabularEvaluator& a, const TabularEvaluator& b);

 protected:
  DistanceHistogram predict_impl(const EvalQuery& q, Action a,
                                 bool target_net) const override;
  double apply_update(std::span<const BackupSample> samples,
                      std::span<const DistanceHistogram> targets) override;
  void sync_target() override;

 private:
  struct CellKey {
    std::uint64_t task;
    std::uint64_t cell;
    friend bool operator==(const CellKey&, const CellKey&) = default;
  };
  struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const noexcept {
      return static_cast<std::size_t>(derive_seed(k.task, k.cell));
    }
  };
  static CellKey make_key(const EvalQuery& q, Action a);
  std::size_t row_of(const CellKey& key);

  std::unordered_map<CellKey, std::size_t, CellKeyHash> index_;
  std::vector<double> pool_;
  std::vector<double> target_pool_;
  bool target_is_online_ = true;
};

// Dense network used by the feedforward backend: ReLU hidden layers and a
// softmax output over the T supports.
class Mlp {
 public:
  Mlp(int inputs, int hidden_layers, int hidden_width, int outputs, std::uint64_t seed);

  int inputs() const { return sizes_.front(); }
  int outputs() const { return sizes_.back(); }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  // Row-major batch: features is batch x inputs, result is batch x outputs.
  std::vector<double> forward(std::span<const double> features, int batch) const;

  // Mean cross-entropy of softmax(outputs) against target rows; fills grad
  // (same layout as parameters) when non-null.
  double loss_and_gradient(std::span<const double> features,
                           std::span<const double> targets, int batch,
                           std::vector<double>* grad) const;

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;  // weight offset per layer; bias follows weights
  std::vector<double> params_;
};

class FeedforwardEvaluator final : public Evaluator {
 public:
  explicit FeedforwardEvaluator(EvaluatorConfig config);

  static constexpr int kFeatureCount = 12;
  std::array<double, kFeatureCount> features(const EvalQuery& q, Action a) const;

  Mlp& network() { return online_; }
  const Mlp& network() const { return online_; }

  void save(const std::filesystem::path& path) const override;
  static std::unique_ptr<FeedforwardEvaluator> load(const std::filesystem::path& path);

 protected:
  DistanceHistogram predict_impl(const EvalQuery& q, Action a,
                                 bool target_net) const override;
  std::vector<DistanceHistogram> predict_many(std::span<const ActionQuery> queries,
                                              bool target_net) const override;
  double apply_update(std::span<const BackupSample> samples,
                      std::span<const DistanceHistogram> targets) override;
  void sync_target() override { target_ = online_; }

 private:
  Mlp online_;
  Mlp target_;
  std::vector<double> adam_m_;
  std::vector<double> adam_v_;
  std::int64_t adam_t_ = 0;
};

// Exact distance distributions from the dynamic-programming oracle, behind
// the evaluator interface. Sources that are not states of the task read as
// overflow. Training is a no-op.
class OracleEvaluator final : public Evaluator {
 public:
  OracleEvaluator(EvaluatorConfig config, int radius,
                  PolicySpec policy = PolicySpec::greedy_to_target());

  void add_task(const GridTask& task);
  void save(const std::filesystem::path& path) const override;

 protected:
  DistanceHistogram predict_impl(const EvalQuery& q, Action a,
                                 bool target_net) const override;
  double apply_update(std::span<const BackupSample>,
                      std::span<const DistanceHistogram>) override {
    return 0.0;
  }

 private:
  struct Entry {
    std::vector<bool> match;
    DistanceDistributionTable table;
  };
  const Entry& entry(const StateSpace& space, const Embedding& target) const;

  int radius_;
  PolicySpec policy_spec_;
  std::map<std::uint64_t, std::unique_ptr<StateSpace>> spaces_;
  mutable std::map<std::pair<std::uint64_t, EmbeddingKey>, Entry> cache_;
};

std::unique_ptr<Evaluator> make_evaluator(const EvaluatorConfig& config);
std::unique_ptr<Evaluator> load_evaluator(const std::filesystem::path& path);

// argmin over actions of the expected distance, ties to the lowest index.
Action min_distance_action(const Evaluator& evaluator, const EvalQuery& q);

}  // namespace tfe

#endif  // TFE_EVALUATOR_HPP
