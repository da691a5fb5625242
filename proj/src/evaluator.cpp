#include "tfe/evaluator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <Eigen/Dense>
#include <json.hpp>

namespace tfe {

using nlohmann::json;

std::string_view backend_name(Backend b) {
  return b == Backend::Tabular ? "tabular" : "feedforward";
}

Backend parse_backend(std::string_view name) {
  if (name == "tabular") return Backend::Tabular;
  if (name == "feedforward" || name == "mlp") return Backend::Feedforward;
  throw Error(ErrorCode::InvalidArgument, "unknown evaluator backend '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

Evaluator::Evaluator(EvaluatorConfig config) : config_(config) {
  if (config_.support_size < 2) {
    throw Error(ErrorCode::InvalidArgument, "support size T must be at least 2");
  }
  if (config_.sync_period < 1) config_.sync_period = 1;
}

std::vector<DistanceHistogram> Evaluator::predict_many(std::span<const ActionQuery> queries,
                                                       bool target_net) const {
  std::vector<DistanceHistogram> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(predict_impl(q.query, q.action, target_net));
  return out;
}

DistanceHistogram Evaluator::combine(const EvalQuery& q,
                                     std::span<const DistanceHistogram> per_action) const {
  if (config_.form == ContinuationForm::Control) {
    int best = 0;
    double best_cost = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
      const double cost = per_action[a].expected_distance();
      if (a == 0 || cost < best_cost) {
        best_cost = cost;
        best = a;
      }
    }
    return per_action[best];
  }
  const ActionProbs pi =
      policy_ ? policy_(q.task_id, q.source) : ActionProbs{0.25, 0.25, 0.25, 0.25};
  DistanceHistogram out(config_.support_size);
  for (int a = 0; a < kNumActions; ++a) {
    if (pi[a] == 0.0) continue;
    for (int k = 0; k < out.support_size(); ++k) out[k] += pi[a] * per_action[a][k];
  }
  return out;
}

DistanceHistogram Evaluator::marginal(const EvalQuery& q, bool target_net) const {
  std::array<ActionQuery, kNumActions> queries;
  for (int a = 0; a < kNumActions; ++a) queries[a] = {q, action_from_index(a)};
  return combine(q, predict_many(queries, target_net));
}

DistanceHistogram Evaluator::backup(const BackupSample& s) const {
  const int T = config_.support_size;
  if (s.hit) return DistanceHistogram::point_mass(T, 1);
  if (s.next_terminal) return DistanceHistogram::overflow(T);
  return shift_by_one(marginal({s.task_id, s.next, s.target}, true));
}

double Evaluator::train_batch(std::span<const BackupSample> samples) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "empty training batch");
  const int T = config_.support_size;
  // Same targets as backup(), with all bootstrap queries in one batch.
  std::vector<DistanceHistogram> targets(samples.size());
  std::vector<ActionQuery> pending;
  std::vector<std::size_t> owners;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.hit) {
      targets[i] = DistanceHistogram::point_mass(T, 1);
    } else if (s.next_terminal) {
      targets[i] = DistanceHistogram::overflow(T);
    } else {
      owners.push_back(i);
      for (int a = 0; a < kNumActions; ++a) {
        pending.push_back({{s.task_id, s.next, s.target}, action_from_index(a)});
      }
    }
  }
  if (!pending.empty()) {
    const auto preds = predict_many(pending, true);
    for (std::size_t k = 0; k < owners.size(); ++k) {
      const std::span<const DistanceHistogram> per_action(preds.data() + k * kNumActions, kNumActions);
      targets[owners[k]] = shift_by_one(combine(pending[k * kNumActions].query, per_action));
    }
  }
  const double loss = apply_update(samples, targets);
  if (!std::isfinite(loss)) {
    throw Error(ErrorCode::NonFiniteLoss,
                "non-finite evaluator loss at step " + std::to_string(steps_));
  }
  ++steps_;
  if (config_.sync_period > 1 && steps_ % config_.sync_period == 0) sync_target();
  return loss;
}

Action min_distance_action(const Evaluator& evaluator, const EvalQuery& q) {
  int best = 0;
  double best_cost = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    const double cost = evaluator.predict(q, action_from_index(a)).expected_distance();
    if (a == 0 || cost < best_cost) {
      best = a;
      best_cost = cost;
    }
  }
  return action_from_index(best);
}

// ---------------------------------------------------------------------------

namespace {

json config_to_json(const EvaluatorConfig& c) {
  return {{"backend", backend_name(c.backend)},
          {"support_size", c.support_size},
          {"form", c.form == ContinuationForm::Control ? "control" : "evaluation"},
          {"learning_rate", c.learning_rate},
          {"sync_period", c.sync_period},
          {"hidden_layers", c.hidden_layers},
          {"hidden_width", c.hidden_width},
          {"grid_width", c.grid_width},
          {"grid_height", c.grid_height},
          {"seed", c.seed}};
}

EvaluatorConfig config_from_json(const json& j) {
  EvaluatorConfig c;
  c.backend = parse_backend(j.at("backend").get<std::string>());
  c.support_size = j.at("support_size").get<int>();
  c.form = j.at("form").get<std::string>() == "control" ? ContinuationForm::Control
                                                        : ContinuationForm::Evaluation;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.sync_period = j.at("sync_period").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.hidden_width = j.at("hidden_width").get<int>();
  c.grid_width = j.at("grid_width").get<int>();
  c.grid_height = j.at("grid_height").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

constexpr const char* kCheckpointFormat = "tfe-evaluator";
constexpr int kCheckpointVersion = 1;

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump();
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

json read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat) {
    throw Error(ErrorCode::Parse, path.string() + ": not an evaluator checkpoint");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw Error(ErrorCode::Parse, path.string() + ": unsupported checkpoint version");
  }
  return j;
}

std::uint64_t pack_embedding(const Embedding& e) {
  return static_cast<std::uint64_t>(e.x & 0xff) | static_cast<std::uint64_t>(e.y & 0xff) << 8 |
         static_cast<std::uint64_t>(e.flag_class()) << 16;
}

}  // namespace

// ---------------------------------------------------------------------------

TabularEvaluator::TabularEvaluator(EvaluatorConfig config) : Evaluator(config) {
  config_.backend = Backend::Tabular;
  target_is_online_ = config_.sync_period <= 1;
}

TabularEvaluator::CellKey TabularEvaluator::make_key(const EvalQuery& q, Action a) {
  return {q.task_id, pack_embedding(q.source) | pack_embedding(q.target) << 18 |
                         static_cast<std::uint64_t>(action_index(a)) << 36};
}

std::size_t TabularEvaluator::row_of(const CellKey& key) {
  const auto [it, inserted] = index_.try_emplace(key, pool_.size());
  if (inserted) {
    const int T = config_.support_size;
    pool_.insert(pool_.end(), T, 1.0 / T);
    if (!target_is_online_) target_pool_.insert(target_pool_.end(), T, 1.0 / T);
  }
  return it->second;
}

bool TabularEvaluator::has_cell(const EvalQuery& q, Action a) const {
  return index_.count(make_key(q, a)) != 0;
}

DistanceHistogram TabularEvaluator::predict_impl(const EvalQuery& q, Action a,
                                                 bool target_net) const {
  const int T = config_.support_size;
  const auto it = index_.find(make_key(q, a));
  if (it == index_.end()) return DistanceHistogram::uniform(T);
  const auto& pool = (target_net && !target_is_online_) ? target_pool_ : pool_;
  const auto first = pool.begin() + static_cast<std::ptrdiff_t>(it->second);
  return DistanceHistogram(std::vector<double>(first, first + T));
}

double TabularEvaluator::apply_update(std::span<const BackupSample> samples,
                                      std::span<const DistanceHistogram> targets) {
  const int T = config_.support_size;
  const double alpha = config_.learning_rate;
  std::vector<std::size_t> rows(samples.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    rows[i] = row_of(make_key({s.task_id, s.source, s.target}, s.action));
    const DistanceHistogram current(
        std::vector<double>(pool_.begin() + static_cast<std::ptrdiff_t>(rows[i]),
                            pool_.begin() + static_cast<std::ptrdiff_t>(rows[i]) + T));
    loss += cross_entropy(targets[i], current);
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double* row = pool_.data() + rows[i];
    for (int k = 0; k < T; ++k) row[k] += alpha * (targets[i][k] - row[k]);
  }
  return loss / static_cast<double>(samples.size());
}

void TabularEvaluator::sync_target() { target_pool_ = pool_; }

bool operator==(const TabularEvaluator& a, const TabularEvaluator& b) {
  if (a.config_.support_size != b.config_.support_size || a.steps_ != b.steps_ ||
      a.index_.size() != b.index_.size() || a.target_is_online_ != b.target_is_online_) {
    return false;
  }
  const int T = a.config_.support_size;
  for (const auto& [key, row] : a.index_) {
    const auto it = b.index_.find(key);
    if (it == b.index_.end()) return false;
    if (!std::equal(a.pool_.begin() + row, a.pool_.begin() + row + T,
                    b.pool_.begin() + it->second)) {
      return false;
    }
    if (!a.target_is_online_ &&
        !std::equal(a.target_pool_.begin() + row, a.target_pool_.begin() + row + T,
                    b.target_pool_.begin() + it->second)) {
      return false;
    }
  }
  return true;
}

void TabularEvaluator::save(const std::filesystem::path& path) const {
  std::vector<std::pair<CellKey, std::size_t>> cells(index_.begin(), index_.end());
  std::sort(cells.begin(), cells.end(), [](const auto& x, const auto& y) {
    return x.first.task != y.first.task ? x.first.task < y.first.task
                                        : x.first.cell < y.first.cell;
  });
  const int T = config_.support_size;
  json rows = json::array();
  for (const auto& [key, row] : cells) {
    json entry = {key.task, key.cell,
                  std::vector<double>(pool_.begin() + row, pool_.begin() + row + T)};
    if (!target_is_online_) {
      entry.push_back(
          std::vector<double>(target_pool_.begin() + row, target_pool_.begin() + row + T));
    }
    rows.push_back(std::move(entry));
  }
  write_json(path, {{"format", kCheckpointFormat},
                    {"version", kCheckpointVersion},
                    {"config", config_to_json(config_)},
                    {"steps", steps_},
                    {"cells", std::move(rows)}});
}

std::unique_ptr<TabularEvaluator> TabularEvaluator::load(const std::filesystem::path& path) {
  const json j = read_checkpoint(path);
  auto model = std::make_unique<TabularEvaluator>(config_from_json(j.at("config")));
  if (model->config_.backend != Backend::Tabular) {
    throw Error(ErrorCode::Parse, path.string() + ": checkpoint is not tabular");
  }
  model->steps_ = j.at("steps").get<std::int64_t>();
  const int T = model->config_.support_size;
  for (const auto& entry : j.at("cells")) {
    const CellKey key{entry.at(0).get<std::uint64_t>(), entry.at(1).get<std::uint64_t>()};
    const auto probs = entry.at(2).get<std::vector<double>>();
    if (static_cast<int>(probs.size()) != T) {
      throw Error(ErrorCode::Parse, path.string() + ": histogram size mismatch");
    }
    model->index_.emplace(key, model->pool_.size());
    model->pool_.insert(model->pool_.end(), probs.begin(), probs.end());
    if (!model->target_is_online_) {
      const auto tp = entry.at(3).get<std::vector<double>>();
      model->target_pool_.insert(model->target_pool_.end(), tp.begin(), tp.end());
    }
  }
  return model;
}

// ---------------------------------------------------------------------------

Mlp::Mlp(int inputs, int hidden_layers, int hidden_width, int outputs, std::uint64_t seed) {
  sizes_.push_back(inputs);
  for (int i = 0; i < hidden_layers; ++i) sizes_.push_back(hidden_width);
  sizes_.push_back(outputs);
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    const std::size_t n = static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1];
    for (std::size_t i = 0; i < n; ++i) {
      params_[offsets_[l] + i] = bound * (2.0 * uniform01(rng) - 1.0);
    }
  }
}

namespace {

using Matrix = Eigen::MatrixXd;
using ConstMap = Eigen::Map<const Matrix>;

// Features arrive row-major (batch x inputs), which is inputs x batch column-major.
ConstMap as_columns(std::span<const double> features, int inputs, int batch) {
  return ConstMap(features.data(), inputs, batch);
}

// Column-wise log-softmax in place.
void log_softmax_columns(Matrix& z) {
  const Eigen::RowVectorXd m = z.colwise().maxCoeff();
  z.rowwise() -= m;
  const Eigen::RowVectorXd lse = z.array().exp().colwise().sum().log().matrix();
  z.rowwise() -= lse;
}

}  // namespace

// Weights of layer l are stored column-major as out x in, followed by out biases.
std::vector<double> Mlp::forward(std::span<const double> features, int batch) const {
  const int layers = static_cast<int>(sizes_.size()) - 1;
  Matrix a = as_columns(features, inputs(), batch);
  for (int l = 0; l < layers; ++l) {
    const int in = sizes_[l], o = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l];
    const ConstMap W(w, o, in);
    const Eigen::Map<const Eigen::VectorXd> b(w + static_cast<std::size_t>(in) * o, o);
    Matrix z = W * a;
    z.colwise() += b;
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    a.swap(z);
  }
  log_softmax_columns(a);
  std::vector<double> out(static_cast<std::size_t>(batch) * outputs());
  Eigen::Map<Matrix>(out.data(), outputs(), batch) = a.array().exp().matrix();
  return out;
}

double Mlp::loss_and_gradient(std::span<const double> features,
                              std::span<const double> targets, int batch,
                              std::vector<double>* grad) const {
  const int layers = static_cast<int>(sizes_.size()) - 1;
  std::vector<Matrix> acts(layers + 1);
  acts[0] = as_columns(features, inputs(), batch);
  for (int l = 0; l < layers; ++l) {
    const int in = sizes_[l], o = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l];
    acts[l + 1] = ConstMap(w, o, in) * acts[l];
    acts[l + 1].colwise() += Eigen::Map<const Eigen::VectorXd>(w + static_cast<std::size_t>(in) * o, o);
    if (l + 1 < layers) acts[l + 1] = acts[l + 1].cwiseMax(0.0);
  }
  Matrix& logp = acts[layers];
  log_softmax_columns(logp);
  const ConstMap t(targets.data(), outputs(), batch);
  // Zero-probability targets contribute nothing even where logp is -inf.
  const double loss = -(t.array() > 0.0).select(t.array() * logp.array(), 0.0).sum();
  if (!grad) return loss / batch;

  grad->assign(params_.size(), 0.0);
  // dL/dz for the output layer: softmax - target, averaged over the batch.
  Matrix delta = (logp.array().exp().matrix() - t) / static_cast<double>(batch);
  for (int l = layers - 1; l >= 0; --l) {
    const int in = sizes_[l], o = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l];
    double* gw = grad->data() + offsets_[l];
    Eigen::Map<Matrix>(gw, o, in).noalias() = delta * acts[l].transpose();
    Eigen::Map<Eigen::VectorXd>(gw + static_cast<std::size_t>(in) * o, o) = delta.rowwise().sum();
    if (l == 0) break;
    Matrix prev = ConstMap(w, o, in).transpose() * delta;
    delta = (acts[l].array() > 0.0).select(prev, 0.0);  // ReLU gate
  }
  return loss / batch;
}

// ---------------------------------------------------------------------------

FeedforwardEvaluator::FeedforwardEvaluator(EvaluatorConfig config)
    : Evaluator(config),
      online_(kFeatureCount, config.hidden_layers, config.hidden_width, config.support_size,
              config.seed),
      target_(online_),
      adam_m_(online_.parameter_count(), 0.0),
      adam_v_(online_.parameter_count(), 0.0) {
  config_.backend = Backend::Feedforward;
}

std::array<double, FeedforwardEvaluator::kFeatureCount> FeedforwardEvaluator::features(
    const EvalQuery& q, Action a) const {
  const double sx = config_.grid_width > 1 ? 1.0 / (config_.grid_width - 1) : 1.0;
  const double sy = config_.grid_height > 1 ? 1.0 / (config_.grid_height - 1) : 1.0;
  std::array<double, kFeatureCount> f{};
  f[0] = q.source.x * sx;
  f[1] = q.source.y * sy;
  f[2] = q.source.has_sword ? 1.0 : 0.0;
  f[3] = q.source.has_shield ? 1.0 : 0.0;
  f[4] = q.target.x * sx;
  f[5] = q.target.y * sy;
  f[6] = q.target.has_sword ? 1.0 : 0.0;
  f[7] = q.target.has_shield ? 1.0 : 0.0;
  f[8 + action_index(a)] = 1.0;
  return f;
}

DistanceHistogram FeedforwardEvaluator::predict_impl(const EvalQuery& q, Action a,
                                                     bool target_net) const {
  const auto f = features(q, a);
  const Mlp& net = (target_net && config_.sync_period > 1) ? target_ : online_;
  return DistanceHistogram(net.forward(f, 1));
}

std::vector<DistanceHistogram> FeedforwardEvaluator::predict_many(
    std::span<const ActionQuery> queries, bool target_net) const {
  const int T = config_.support_size;
  const int n = static_cast<int>(queries.size());
  std::vector<double> x(static_cast<std::size_t>(n) * kFeatureCount);
  for (int i = 0; i < n; ++i) {
    const auto f = features(queries[i].query, queries[i].action);
    std::copy(f.begin(), f.end(), x.begin() + static_cast<std::ptrdiff_t>(i) * kFeatureCount);
  }
  const Mlp& net = (target_net && config_.sync_period > 1) ? target_ : online_;
  const auto probs = net.forward(x, n);
  std::vector<DistanceHistogram> out;
  out.reserve(queries.size());
  for (int i = 0; i < n; ++i) {
    out.emplace_back(std::vector<double>(probs.begin() + static_cast<std::ptrdiff_t>(i) * T,
                                         probs.begin() + static_cast<std::ptrdiff_t>(i + 1) * T));
  }
  return out;
}

double FeedforwardEvaluator::apply_update(std::span<const BackupSample> samples,
                                          std::span<const DistanceHistogram> targets) {
  const int T = config_.support_size;
  const int batch = static_cast<int>(samples.size());
  std::vector<double> x(static_cast<std::size_t>(batch) * kFeatureCount);
  std::vector<double> y(static_cast<std::size_t>(batch) * T);
  for (int n = 0; n < batch; ++n) {
    const auto& s = samples[n];
    const auto f = features({s.task_id, s.source, s.target}, s.action);
    std::copy(f.begin(), f.end(), x.begin() + static_cast<std::ptrdiff_t>(n) * kFeatureCount);
    const auto p = targets[n].probs();
    std::copy(p.begin(), p.end(), y.begin() + static_cast<std::ptrdiff_t>(n) * T);
  }
  std::vector<double> grad;
  const double loss = online_.loss_and_gradient(x, y, batch, &grad);
  if (!std::isfinite(loss)) return loss;

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++adam_t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_t_));
  auto params = online_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_m_[i] = kBeta1 * adam_m_[i] + (1.0 - kBeta1) * grad[i];
    adam_v_[i] = kBeta2 * adam_v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    params[i] -= config_.learning_rate * (adam_m_[i] / c1) / (std::sqrt(adam_v_[i] / c2) + kEps);
  }
  return loss;
}

void FeedforwardEvaluator::save(const std::filesystem::path& path) const {
  auto vec = [](std::span<const double> s) { return std::vector<double>(s.begin(), s.end()); };
  write_json(path, {{"format", kCheckpointFormat},
                    {"version", kCheckpointVersion},
                    {"config", config_to_json(config_)},
                    {"steps", steps_},
                    {"params", vec(online_.parameters())},
                    {"target_params", vec(target_.parameters())},
                    {"adam_m", adam_m_},
                    {"adam_v", adam_v_},
                    {"adam_t", adam_t_}});
}

std::unique_ptr<FeedforwardEvaluator> FeedforwardEvaluator::load(
    const std::filesystem::path& path) {
  const json j = read_checkpoint(path);
  auto model = std::make_unique<FeedforwardEvaluator>(config_from_json(j.at("config")));
  if (model->config_.backend != Backend::Feedforward) {
    throw Error(ErrorCode::Parse, path.string() + ": checkpoint is not feedforward");
  }
  auto fill = [&](std::span<double> dst, const json& src) {
    const auto v = src.get<std::vector<double>>();
    if (v.size() != dst.size()) {
      throw Error(ErrorCode::Parse, path.string() + ": parameter count mismatch");
    }
    std::copy(v.begin(), v.end(), dst.begin());
  };
  model->steps_ = j.at("steps").get<std::int64_t>();
  fill(model->online_.parameters(), j.at("params"));
  fill(model->target_.parameters(), j.at("target_params"));
  fill(model->adam_m_, j.at("adam_m"));
  fill(model->adam_v_, j.at("adam_v"));
  model->adam_t_ = j.at("adam_t").get<std::int64_t>();
  return model;
}

// ---------------------------------------------------------------------------

OracleEvaluator::OracleEvaluator(EvaluatorConfig config, int radius, PolicySpec policy)
    : Evaluator(config), radius_(radius), policy_spec_(std::move(policy)) {}

void OracleEvaluator::add_task(const GridTask& task) {
  spaces_[task.task_id()] = std::make_unique<StateSpace>(task);
}

const OracleEvaluator::Entry& OracleEvaluator::entry(const StateSpace& space,
                                                     const Embedding& target) const {
  const auto key = std::make_pair(space.task().task_id(), space.task().key_of(target));
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    Entry e;
    e.match = match_mask(space, Target{target, radius_});
    e.table = distance_distribution(space, policy_spec_, e.match, config_.support_size);
    it = cache_.emplace(key, std::move(e)).first;
  }
  return it->second;
}

DistanceHistogram OracleEvaluator::predict_impl(const EvalQuery& q, Action a, bool) const {
  const int T = config_.support_size;
  const auto it = spaces_.find(q.task_id);
  if (it == spaces_.end()) {
    throw Error(ErrorCode::InvalidArgument, "oracle evaluator has no such task");
  }
  const StateSpace& space = *it->second;
  const int source = space.index_of(q.source);
  if (source < 0 || space.terminal(source) || !space.task().contains(q.target)) {
    return DistanceHistogram::overflow(T);
  }
  const Entry& e = entry(space, q.target);
  return action_distribution(space, e.table, e.match, source, a);
}

void OracleEvaluator::save(const std::filesystem::path&) const {
  throw Error(ErrorCode::InvalidArgument, "the oracle evaluator has no parameters to save");
}

// ---------------------------------------------------------------------------

std::unique_ptr<Evaluator> make_evaluator(const EvaluatorConfig& config) {
  if (config.backend == Backend::Tabular) return std::make_unique<TabularEvaluator>(config);
  return std::make_unique<FeedforwardEvaluator>(config);
}

std::unique_ptr<Evaluator> load_evaluator(const std::filesystem::path& path) {
  const json j = read_checkpoint(path);
  if (parse_backend(j.at("config").at("backend").get<std::string>()) == Backend::Tabular) {
    return TabularEvaluator::load(path);
  }
  return FeedforwardEvaluator::load(path);
}

}  // namespace tfe
