#include "tfe/run.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace tfe {

using nlohmann::json;

std::string_view agent_name(AgentKind k) {
  switch (k) {
    case AgentKind::Random: return "random";
    case AgentKind::Dyna: return "dyna";
    case AgentKind::DynaPlus: return "dyna+";
    case AgentKind::Planner: return "planner";
    case AgentKind::PlannerPlus: return "planner+";
  }
  return "?";
}

AgentKind parse_agent(std::string_view name) {
  for (auto k : {AgentKind::Random, AgentKind::Dyna, AgentKind::DynaPlus, AgentKind::Planner,
                 AgentKind::PlannerPlus}) {
    if (agent_name(k) == name) return k;
  }
  throw Error(ErrorCode::Validation, "agent: unknown agent '" + std::string(name) + "'");
}

namespace {

bool is_dyna(AgentKind k) { return k == AgentKind::Dyna || k == AgentKind::DynaPlus; }
bool is_planner(AgentKind k) { return k == AgentKind::Planner || k == AgentKind::PlannerPlus; }

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::Validation, path + ": " + what);
}

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) invalid(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  bool get(const std::string& key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return false;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      invalid(field(key), "wrong type");
    }
    return true;
  }

  const json* sub(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) invalid(field(k), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace

void RunConfig::validate() const {
  if (run_id.empty() || run_id.find_first_of(",/\\\n") != std::string::npos) {
    invalid("run_id", "must be non-empty without commas or slashes");
  }
  if (width < 4) invalid("width", "must be at least 4");
  if (height < 4) invalid("height", "must be at least 4");
  if (width > 255 || height > 255) invalid("width", "grids larger than 255 are not supported");
  if (!(difficulty >= 0.0 && difficulty <= 1.0)) invalid("difficulty", "must lie in [0,1]");
  if (n_train_tasks < 1) invalid("n_train_tasks", "must be at least 1");
  if (total_steps < 1) invalid("total_steps", "must be at least 1");
  if (snapshot_every < 1) invalid("snapshot_every", "must be at least 1");
  if (max_episode_steps < 1) invalid("max_episode_steps", "must be at least 1");
  if (seeds.empty()) invalid("seeds", "must list at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    invalid("seeds", "must be distinct");
  }
  if (threads < 1) invalid("threads", "must be at least 1");
  if (evaluator.support_size < 2) invalid("evaluator.support_size", "must be at least 2");
  if (!(evaluator.learning_rate > 0.0)) invalid("evaluator.learning_rate", "must be positive");
  if (evaluator.backend == Backend::Tabular && evaluator.learning_rate > 1.0) {
    invalid("evaluator.learning_rate", "tabular step size must lie in (0,1]");
  }
  if (evaluator.sync_period < 1) invalid("evaluator.sync_period", "must be at least 1");
  if (evaluator.hidden_layers < 1) invalid("evaluator.hidden_layers", "must be at least 1");
  if (evaluator.hidden_width < 1) invalid("evaluator.hidden_width", "must be at least 1");
  if (batch_size < 1) invalid("evaluator.batch_size", "must be at least 1");
  if (train_every < 1) invalid("evaluator.train_every", "must be at least 1");
  if (radius < 0 || radius > 1) invalid("evaluator.radius", "must be 0 or 1");
  if (is_dyna(agent) && radius != 0) invalid("evaluator.radius", "Dyna agents use radius 0");
  try {
    mix.validate();
  } catch (const Error& e) {
    invalid("relabel.mix", e.what());
  }
  try {
    planner_edge_mix.validate();
  } catch (const Error& e) {
    invalid("planner.edge_mix", e.what());
  }
  if (replay_capacity < 1) invalid("relabel.capacity", "must be at least 1");
  if (!(p_g1 >= 0.0 && p_g1 <= 1.0)) invalid("injector.p_g1", "must lie in [0,1]");
  if (!(p_g2 >= 0.0 && p_g2 <= 1.0)) invalid("injector.p_g2", "must lie in [0,1]");
  if (p_g1 + p_g2 > 1.0) invalid("injector", "p_g1 + p_g2 must not exceed 1");
  if (dyna.n_sim < 0) invalid("dyna.n_sim", "must be >= 0");
  if (!(dyna.threshold >= 0.0 && dyna.threshold < 1.0)) invalid("dyna.threshold", "must lie in [0,1)");
  if (!(dyna.alpha > 0.0 && dyna.alpha <= 1.0)) invalid("dyna.alpha", "must lie in (0,1]");
  if (!(dyna.gamma > 0.0 && dyna.gamma <= 1.0)) invalid("dyna.gamma", "must lie in (0,1]");
  if (!(dyna.epsilon.start >= 0.0 && dyna.epsilon.start <= 1.0)) invalid("dyna.epsilon_start", "must lie in [0,1]");
  if (!(dyna.epsilon.end >= 0.0 && dyna.epsilon.end <= 1.0)) invalid("dyna.epsilon_end", "must lie in [0,1]");
  if (dyna.epsilon.steps < 0) invalid("dyna.epsilon_steps", "must be >= 0");
  if (planner.candidates < 1) invalid("planner.candidates", "must be at least 1");
  if (planner.tau < 1 || planner.tau > evaluator.support_size - 1) {
    invalid("planner.tau", "must lie in [1, T-1]");
  }
  if (!(planner.threshold >= 0.0 && planner.threshold < 1.0)) invalid("planner.threshold", "must lie in [0,1)");
  if (!(planner.gamma > 0.0 && planner.gamma <= 1.0)) invalid("planner.gamma", "must lie in (0,1]");
  if (!(planner.goal_reward > 0.0)) invalid("planner.goal_reward", "must be positive");
  if (planner_eval_episodes < 0) invalid("planner.eval_episodes", "must be >= 0");
  if (probe_pairs < 1) invalid("metrics.probe_pairs", "must be at least 1");
  for (double d : eval_difficulties) {
    if (!(d >= 0.0 && d <= 1.0)) invalid("eval.difficulties", "entries must lie in [0,1]");
  }
  if (eval_tasks_per_difficulty < 1) invalid("eval.tasks_per_difficulty", "must be at least 1");
}

RelabelMix read_mix(const json& m, const std::string& path) {
  if (m.is_string()) {
    try {
      return RelabelMix::parse(m.get<std::string>());
    } catch (const Error& err) {
      invalid(path, err.what());
    }
  }
  ObjectReader mr(m, path);
  RelabelMix mix;
  for (int i = 0; i < kNumStrategies; ++i) {
    mr.get(std::string(strategy_name(static_cast<Strategy>(i))), mix.weights[i]);
  }
  mr.finish();
  return mix;
}

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("config: ") + e.what());
  }
  RunConfig c;
  ObjectReader root(j, "");
  int version = 0;
  if (!root.get("schema_version", version)) invalid("schema_version", "missing");
  if (version != kConfigSchemaVersion) {
    invalid("schema_version", "unsupported version " + std::to_string(version));
  }
  root.get("run_id", c.run_id);
  std::string s;
  if (root.get("agent", s)) c.agent = parse_agent(s);
  if (root.get("family", s)) {
    try {
      c.family = parse_family(s);
    } catch (const Error&) {
      invalid("family", "unknown family '" + s + "'");
    }
  }
  root.get("width", c.width);
  root.get("height", c.height);
  root.get("difficulty", c.difficulty);
  root.get("n_train_tasks", c.n_train_tasks);
  root.get("task_seed", c.task_seed);
  root.get("total_steps", c.total_steps);
  root.get("snapshot_every", c.snapshot_every);
  root.get("max_episode_steps", c.max_episode_steps);
  root.get("seeds", c.seeds);
  root.get("threads", c.threads);
  root.get("output_dir", c.output_dir);

  bool lr_given = false, sync_given = false;
  if (const json* e = root.sub("evaluator")) {
    ObjectReader r(*e, "evaluator");
    if (r.get("backend", s)) {
      try {
        c.evaluator.backend = parse_backend(s);
      } catch (const Error&) {
        invalid("evaluator.backend", "unknown backend '" + s + "'");
      }
    }
    r.get("support_size", c.evaluator.support_size);
    if (r.get("form", s)) {
      if (s == "control") c.evaluator.form = ContinuationForm::Control;
      else if (s == "evaluation") c.evaluator.form = ContinuationForm::Evaluation;
      else invalid("evaluator.form", "must be 'control' or 'evaluation'");
    }
    lr_given = r.get("learning_rate", c.evaluator.learning_rate);
    sync_given = r.get("sync_period", c.evaluator.sync_period);
    r.get("hidden_layers", c.evaluator.hidden_layers);
    r.get("hidden_width", c.evaluator.hidden_width);
    r.get("batch_size", c.batch_size);
    r.get("train_every", c.train_every);
    r.get("radius", c.radius);
    r.finish();
  }
  if (c.evaluator.backend == Backend::Feedforward) {
    if (!lr_given) c.evaluator.learning_rate = 1e-3;
    if (!sync_given) c.evaluator.sync_period = 1000;
  }
  if (const json* e = root.sub("relabel")) {
    ObjectReader r(*e, "relabel");
    if (const json* m = r.sub("mix")) c.mix = read_mix(*m, "relabel.mix");
    r.get("capacity", c.replay_capacity);
    r.get("final_successor", c.relabel_final_successor);
    r.finish();
  }
  if (const json* e = root.sub("injector")) {
    ObjectReader r(*e, "injector");
    r.get("p_g1", c.p_g1);
    r.get("p_g2", c.p_g2);
    r.finish();
  }
  if (const json* e = root.sub("dyna")) {
    ObjectReader r(*e, "dyna");
    r.get("n_sim", c.dyna.n_sim);
    r.get("threshold", c.dyna.threshold);
    r.get("alpha", c.dyna.alpha);
    r.get("gamma", c.dyna.gamma);
    r.get("epsilon_start", c.dyna.epsilon.start);
    r.get("epsilon_end", c.dyna.epsilon.end);
    r.get("epsilon_steps", c.dyna.epsilon.steps);
    r.finish();
  }
  if (const json* e = root.sub("planner")) {
    ObjectReader r(*e, "planner");
    r.get("candidates", c.planner.candidates);
    r.get("tau", c.planner.tau);
    r.get("threshold", c.planner.threshold);
    r.get("gamma", c.planner.gamma);
    r.get("goal_reward", c.planner.goal_reward);
    r.get("eval_episodes", c.planner_eval_episodes);
    if (const json* m = r.sub("edge_mix")) c.planner_edge_mix = read_mix(*m, "planner.edge_mix");
    r.finish();
  }
  if (const json* e = root.sub("metrics")) {
    ObjectReader r(*e, "metrics");
    r.get("probe_pairs", c.probe_pairs);
    r.finish();
  }
  if (const json* e = root.sub("eval")) {
    ObjectReader r(*e, "eval");
    r.get("difficulties", c.eval_difficulties);
    r.get("tasks_per_difficulty", c.eval_tasks_per_difficulty);
    r.get("seed", c.eval_seed);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& c) {
  auto mix_json = [](const RelabelMix& m) {
    json out = json::object();
    for (int i = 0; i < kNumStrategies; ++i) {
      if (m.weights[i] > 0.0) out[std::string(strategy_name(static_cast<Strategy>(i)))] = m.weights[i];
    }
    return out;
  };
  json j = {
      {"schema_version", kConfigSchemaVersion},
      {"run_id", c.run_id},
      {"agent", agent_name(c.agent)},
      {"family", family_name(c.family)},
      {"width", c.width},
      {"height", c.height},
      {"difficulty", c.difficulty},
      {"n_train_tasks", c.n_train_tasks},
      {"task_seed", c.task_seed},
      {"total_steps", c.total_steps},
      {"snapshot_every", c.snapshot_every},
      {"max_episode_steps", c.max_episode_steps},
      {"seeds", c.seeds},
      {"threads", c.threads},
      {"output_dir", c.output_dir},
      {"evaluator",
       {{"backend", backend_name(c.evaluator.backend)},
        {"support_size", c.evaluator.support_size},
        {"form", c.evaluator.form == ContinuationForm::Control ? "control" : "evaluation"},
        {"learning_rate", c.evaluator.learning_rate},
        {"sync_period", c.evaluator.sync_period},
        {"hidden_layers", c.evaluator.hidden_layers},
        {"hidden_width", c.evaluator.hidden_width},
        {"batch_size", c.batch_size},
        {"train_every", c.train_every},
        {"radius", c.radius}}},
      {"relabel", {{"mix", mix_json(c.mix)}, {"capacity", c.replay_capacity},
                   {"final_successor", c.relabel_final_successor}}},
      {"injector", {{"p_g1", c.p_g1}, {"p_g2", c.p_g2}}},
      {"dyna",
       {{"n_sim", c.dyna.n_sim},
        {"threshold", c.dyna.threshold},
        {"alpha", c.dyna.alpha},
        {"gamma", c.dyna.gamma},
        {"epsilon_start", c.dyna.epsilon.start},
        {"epsilon_end", c.dyna.epsilon.end},
        {"epsilon_steps", c.dyna.epsilon.steps}}},
      {"planner",
       {{"candidates", c.planner.candidates},
        {"tau", c.planner.tau},
        {"threshold", c.planner.threshold},
        {"gamma", c.planner.gamma},
        {"goal_reward", c.planner.goal_reward},
        {"eval_episodes", c.planner_eval_episodes},
        {"edge_mix", mix_json(c.planner_edge_mix)}}},
      {"metrics", {{"probe_pairs", c.probe_pairs}}},
      {"eval",
       {{"difficulties", c.eval_difficulties},
        {"tasks_per_difficulty", c.eval_tasks_per_difficulty},
        {"seed", c.eval_seed}}},
  };
  return j.dump(2) + "\n";
}

std::vector<GridTask> training_tasks(const RunConfig& c) {
  std::vector<GridTask> tasks;
  tasks.reserve(c.n_train_tasks);
  for (int i = 0; i < c.n_train_tasks; ++i) {
    tasks.push_back(generate_task(c.family, c.width, c.height, c.difficulty,
                                  derive_seed(c.task_seed, static_cast<std::uint64_t>(i))));
  }
  return tasks;
}

std::filesystem::path resolve_output_dir(const RunConfig& c) {
  std::filesystem::path p(c.output_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) p = std::filesystem::path(root) / p;
  }
  return p / c.run_id;
}

// ---------------------------------------------------------------------------

namespace {

void run_seed_into(const RunConfig& cfg, std::uint64_t seed, SeedRun& out) {
  const auto tasks = training_tasks(cfg);
  TaskCatalog catalog(cfg.radius);
  for (const auto& t : tasks) catalog.add(t);

  const bool dyna = is_dyna(cfg.agent);
  const bool needs_evaluator = cfg.agent != AgentKind::Dyna;

  EvaluatorConfig ec = cfg.evaluator;
  ec.seed = derive_seed(seed, 11);
  ec.grid_width = cfg.width;
  ec.grid_height = cfg.height;
  if (needs_evaluator) out.evaluator = make_evaluator(ec);
  Evaluator* evaluator = out.evaluator.get();
  // Planners carry their own edge estimator; the "+" variant adds the
  // evaluator above as a rejection gate.
  if (is_planner(cfg.agent)) {
    EvaluatorConfig edge_config = ec;
    edge_config.seed = derive_seed(seed, 12);
    out.edges = make_evaluator(edge_config);
  }
  Evaluator* edges = out.edges.get();

  ReplayStore store(cfg.replay_capacity, cfg.radius, cfg.relabel_final_successor);
  OneStepModel model(&catalog, dyna ? cfg.p_g1 : 0.0, dyna ? cfg.p_g2 : 0.0);
  HallucinationInjector injector(catalog, cfg.p_g1, cfg.p_g2);
  ConditionalTargetSampler sampler(1.0);
  CandidateGenerator candidates(catalog, &sampler, injector);
  ModelTargetGenerator model_targets(model);
  TargetGenerator* generator = dyna ? static_cast<TargetGenerator*>(&model_targets) : &candidates;

  DynaConfig dc = cfg.dyna;
  if (cfg.agent == AgentKind::Dyna) dc.threshold = 0.0;
  DynaAgent agent(dc, model, evaluator, &catalog);

  std::vector<std::vector<double>> q_star;
  if (dyna) {
    for (const auto& t : tasks) q_star.push_back(optimal_q(catalog.space(t.task_id()), dc.gamma));
  }

  Rng env_rng(derive_seed(seed, 1));
  Rng act_rng(derive_seed(seed, 2));
  Rng sim_rng(derive_seed(seed, 3));
  Rng relabel_rng(derive_seed(seed, 4));
  Rng plan_rng(derive_seed(seed, 5));
  Rng probe_rng(derive_seed(seed, 6));
  Rng edge_rng(derive_seed(seed, 7));

  std::vector<ProbePair> probes;
  if (evaluator) {
    std::vector<std::uint64_t> ids;
    for (std::size_t i = 0; i < tasks.size() && i < 5; ++i) ids.push_back(tasks[i].task_id());
    probes = build_probe_set(catalog, ids, ec.support_size, cfg.probe_pairs, probe_rng);
  }

  const std::string& run_id = cfg.run_id;
  auto emit = [&](std::int64_t step, const std::string& metric, const std::string& key, double v) {
    out.rows.push_back({run_id, seed, step, metric, key, v});
  };

  std::size_t task_index = 0;
  EnvState state;
  bool need_reset = true;
  std::int64_t episode_id = -1;
  int t = 0;
  double episode_return = 0.0;
  std::vector<Transition> episode;
  double window_return = 0.0;
  std::int64_t window_episodes = 0;
  double window_loss = 0.0;
  std::int64_t window_batches = 0;
  DynaStats totals;

  for (std::int64_t n = 0; n < cfg.total_steps; ++n) {
    if (need_reset) {
      task_index = uniform_index(env_rng, tasks.size());
      state = reset(tasks[task_index], InitMode::AllNonterminal, env_rng);
      ++episode_id;
      t = 0;
      episode_return = 0.0;
      episode.clear();
      need_reset = false;
    }
    const GridTask& task = tasks[task_index];
    const Action a = dyna ? agent.act(task.task_id(), state, n, act_rng)
                          : action_from_index(static_cast<int>(uniform_index(act_rng, kNumActions)));
    const StepResult r = step(task, state, a);
    Transition tr{task.task_id(), episode_id, t, state, a, r.reward, r.state, r.terminal};
    store.push(tr);
    episode.push_back(tr);
    episode_return += r.reward;
    if (dyna) {
      model.fit(tr);
      totals += agent.dyna_step(tr, sim_rng);
    }
    state = r.state;
    ++t;
    if (r.terminal || t >= cfg.max_episode_steps) {
      if (is_planner(cfg.agent)) sampler.fit_future(episode);
      window_return += episode_return;
      ++window_episodes;
      need_reset = true;
    }

    if (evaluator && (n + 1) % cfg.train_every == 0) {
      const auto batch = store.sample_batch(cfg.mix, cfg.batch_size, generator, relabel_rng);
      std::vector<BackupSample> samples;
      samples.reserve(batch.size());
      for (const auto& b : batch) samples.push_back(b.backup());
      window_loss += evaluator->train_batch(samples);
      ++window_batches;
      if (edges) {
        const auto eb = store.sample_batch(cfg.planner_edge_mix, cfg.batch_size, &candidates, edge_rng);
        samples.clear();
        for (const auto& b : eb) samples.push_back(b.backup());
        edges->train_batch(samples);
      }
    }

    const bool last = n + 1 == cfg.total_steps;
    if ((n + 1) % cfg.snapshot_every != 0 && !last) continue;
    const std::int64_t at = n + 1;
    emit(at, "episodes", "count", static_cast<double>(window_episodes));
    if (window_episodes > 0) {
      out.summary.final_train_return = window_return / static_cast<double>(window_episodes);
      emit(at, "train_return", "mean", out.summary.final_train_return);
    }
    window_return = 0.0;
    window_episodes = 0;
    if (dyna) {
      double qe = 0.0;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        qe += q_error(agent.q(), catalog.space(tasks[i].task_id()), q_star[i]);
      }
      out.summary.final_q_error = qe / static_cast<double>(tasks.size());
      emit(at, "q_error", "mean", out.summary.final_q_error);
      double greedy = 0.0;
      for (const auto& gt : tasks) {
        EnvState gs = reset(gt, InitMode::FixedFarthest, plan_rng);
        for (int k = 0; k < cfg.max_episode_steps && !gs.terminal; ++k) {
          const auto r = step(gt, gs, agent.q().greedy(gt.task_id(), gs.embedding()));
          greedy += r.reward;
          gs = r.state;
        }
      }
      out.summary.final_greedy_return = greedy / static_cast<double>(tasks.size());
      emit(at, "greedy_return", "mean", out.summary.final_greedy_return);
      emit(at, "sim_updates", "applied", static_cast<double>(totals.applied));
      emit(at, "sim_updates", "rejected", static_cast<double>(totals.rejected));
      emit(at, "sim_updates", "abstained", static_cast<double>(totals.abstained));
      if (totals.infeasible > 0) {
        emit(at, "reject_rate", "infeasible",
             static_cast<double>(totals.infeasible_rejected) / static_cast<double>(totals.infeasible));
      }
      if (totals.feasible > 0) {
        emit(at, "reject_rate", "feasible",
             static_cast<double>(totals.feasible_rejected) / static_cast<double>(totals.feasible));
      }
      out.summary.dyna = totals;
    }
    if (evaluator) {
      if (window_batches > 0) emit(at, "loss", "mean", window_loss / static_cast<double>(window_batches));
      window_loss = 0.0;
      window_batches = 0;
      out.summary.final_e0 = e_error(*evaluator, catalog, probes, TargetCategory::G0);
      for (const auto& [k, v] : out.summary.final_e0) emit(at, "e0", k, v);
      const auto e1 = e_error(*evaluator, catalog, probes, TargetCategory::G1);
      const auto e2 = e_error(*evaluator, catalog, probes, TargetCategory::G2);
      if (e1.count("all")) {
        out.summary.final_e1 = e1.at("all");
        emit(at, "e1", "all", out.summary.final_e1);
      }
      if (e2.count("all")) {
        out.summary.final_e2 = e2.at("all");
        emit(at, "e2", "all", out.summary.final_e2);
      }
    }
    if (is_planner(cfg.agent) && cfg.planner_eval_episodes > 0) {
      const Evaluator* plus = cfg.agent == AgentKind::PlannerPlus ? evaluator : nullptr;
      PlannerAgent planner(cfg.planner, candidates, *edges, *edges, plus, cfg.radius);
      std::vector<PlanRecord> log;
      double ret = 0.0;
      for (int e = 0; e < cfg.planner_eval_episodes; ++e) {
        const GridTask& et = tasks[static_cast<std::size_t>(e) % tasks.size()];
        const EnvState start = reset(et, InitMode::FixedFarthest, plan_rng);
        auto res = planner.run_episode(et, start, cfg.max_episode_steps, plan_rng);
        ret += res.ret;
        log.insert(log.end(), res.plans.begin(), res.plans.end());
      }
      out.summary.final_delusion = delusion_frequency(log, catalog);
      emit(at, "delusion", "all", out.summary.final_delusion);
      emit(at, "eval_return", "mean", ret / cfg.planner_eval_episodes);
    }
    out.summary.injector_fallbacks =
        injector.fallbacks() + (model.injector() ? model.injector()->fallbacks() : 0);
    emit(at, "injector", "fallbacks", static_cast<double>(out.summary.injector_fallbacks));
  }
}

void write_rows(const std::filesystem::path& path, std::vector<MetricsRow> rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_metrics_csv(f, std::move(rows));
}

}  // namespace

SeedRun run_seed(const RunConfig& config, std::uint64_t seed) {
  config.validate();
  SeedRun out;
  out.summary.seed = seed;
  run_seed_into(config, seed, out);
  return out;
}

TrainResult cmd_train(const RunConfig& config) {
  config.validate();
  const auto dir = resolve_output_dir(config);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "config.json");
    f << dump_run_config(config);
  }
  const std::size_t n = config.seeds.size();
  std::vector<SeedRun> runs(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      runs[i].summary.seed = config.seeds[i];
      try {
        run_seed_into(config, config.seeds[i], runs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::min<int>(config.threads, static_cast<int>(n));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  // Partial rows are flushed even when a seed failed.
  std::vector<MetricsRow> rows;
  TrainResult result;
  result.metrics_csv = dir / "metrics.csv";
  for (std::size_t i = 0; i < n; ++i) {
    rows.insert(rows.end(), runs[i].rows.begin(), runs[i].rows.end());
    result.seeds.push_back(runs[i].summary);
  }
  write_rows(result.metrics_csv, std::move(rows));
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::string tag = "_seed" + std::to_string(config.seeds[i]) + ".json";
    if (runs[i].evaluator) runs[i].evaluator->save(dir / ("evaluator" + tag));
    if (runs[i].edges) runs[i].edges->save(dir / ("edges" + tag));
  }
  return result;
}

std::vector<std::filesystem::path> cmd_gen_tasks(const RunConfig& config) {
  config.validate();
  const auto dir = resolve_output_dir(config) / "tasks";
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  const auto tasks = training_tasks(config);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "task_%03zu.txt", i);
    paths.push_back(dir / name);
    save_task(tasks[i], paths.back());
  }
  return paths;
}

std::filesystem::path cmd_eval(const std::filesystem::path& checkpoint, const RunConfig& config) {
  config.validate();
  const auto evaluator = load_evaluator(checkpoint);
  // A planner run's edge estimator sits next to the evaluator checkpoint.
  std::unique_ptr<Evaluator> own;
  std::string name = checkpoint.filename().string();
  if (name.rfind("evaluator", 0) == 0) {
    const auto sibling = checkpoint.parent_path() / ("edges" + name.substr(9));
    if (std::filesystem::exists(sibling)) own = load_evaluator(sibling);
  }
  const Evaluator& edges = own ? *own : *evaluator;
  const bool plus = config.agent == AgentKind::PlannerPlus || config.agent == AgentKind::DynaPlus;
  const EpisodeRunner runner = [&](const GridTask& task, const EnvState& start, Rng& rng) {
    TaskCatalog catalog(config.radius);
    catalog.add(task);
    HallucinationInjector injector(catalog, config.p_g1, config.p_g2);
    CandidateGenerator gen(catalog, nullptr, injector);
    PlannerAgent planner(config.planner, gen, edges, edges, plus ? evaluator.get() : nullptr,
                         config.radius);
    return planner.run_episode(task, start, config.max_episode_steps, rng).ret;
  };
  const OodResult r = ood_protocol(runner, config.family, config.width, config.height,
                                   config.eval_difficulties, config.eval_tasks_per_difficulty,
                                   config.eval_seed);
  std::vector<MetricsRow> rows;
  char key[32];
  for (std::size_t i = 0; i < r.difficulties.size(); ++i) {
    std::snprintf(key, sizeof(key), "%.2f", r.difficulties[i]);
    rows.push_back({config.run_id, config.eval_seed, 0, "ood_return", key, r.mean_return[i]});
  }
  rows.push_back({config.run_id, config.eval_seed, 0, "ood_return", "pooled", r.pooled});
  const auto dir = resolve_output_dir(config);
  std::filesystem::create_directories(dir);
  const auto path = dir / "ood.csv";
  write_rows(path, std::move(rows));
  return path;
}

void cmd_oracle(const GridTask& task, const PolicySpec& policy, int support_size, int radius,
                std::ostream& out) {
  const StateSpace space(task);
  out << "state,target_key";
  for (int k = 1; k < support_size; ++k) out << ",p_" << k;
  out << ",p_overflow\n";
  for (const auto& s : space.states()) {
    const auto mask = match_mask(space, Target{s.features, radius});
    const auto table = distance_distribution(space, policy, mask, support_size);
    write_oracle_csv(out, table, task.key_of(s.features));
  }
}

std::vector<SelftestLine> cmd_selftest() {
  std::vector<SelftestLine> lines;
  Rng rng(20240601);

  {  // Backup branches on random histograms.
    const int T = 16;
    bool ok = true;
    for (int n = 0; n < 1000 && ok; ++n) {
      std::vector<double> p(T);
      double total = 0.0;
      for (double& v : p) total += (v = uniform01(rng));
      for (double& v : p) v /= total;
      const DistanceHistogram succ(p);
      const auto hit = backup_target(true, false, succ);
      const auto term = backup_target(false, true, succ);
      const auto shifted = backup_target(false, false, succ);
      ok = hit == DistanceHistogram::point_mass(T, 1) && term == DistanceHistogram::overflow(T) &&
           shifted[0] == 0.0 && shifted[T - 1] == p[T - 2] + p[T - 1];
      for (int k = 1; k < T - 1 && ok; ++k) ok = shifted[k] == p[k - 1];
    }
    lines.push_back({"backup_shift", ok, "1000 random histograms"});
  }

  {  // Infeasible members never change feasibility.
    bool ok = true;
    int checked = 0;
    for (int n = 0; n < 20 && ok; ++n) {
      const Family fam = n % 2 ? Family::SSM : Family::RDS;
      const GridTask task = generate_task(fam, 6, 6, 0.25, derive_seed(77, n));
      const StateSpace space(task);
      const int source = space.spawnable()[uniform_index(rng, space.spawnable().size())];
      std::vector<Target> members;
      for (int m = 0; m < 4; ++m) {
        const Embedding e = task.embedding_of(
            static_cast<EmbeddingKey>(uniform_index(rng, task.embedding_space_size())));
        members.push_back({e, static_cast<int>(uniform_index(rng, 2))});
      }
      const int tau = 1 + static_cast<int>(uniform_index(rng, 15));
      ok = theorem1_check(space, source, members, tau, PolicySpec::uniform_random(), 16).holds();
      ++checked;
    }
    lines.push_back({"theorem1", ok, std::to_string(checked) + " random tuples"});
  }

  {  // Tabular predictions stay normalized under training.
    EvaluatorConfig ec;
    TabularEvaluator ev(ec);
    const GridTask task = generate_task(Family::RDS, 5, 5, 0.2, 3);
    const StateSpace space(task);
    std::vector<BackupSample> batch;
    bool ok = true;
    for (int it = 0; it < 200 && ok; ++it) {
      batch.clear();
      for (int b = 0; b < 16; ++b) {
        const int i = space.spawnable()[uniform_index(rng, space.spawnable().size())];
        const Action a = action_from_index(static_cast<int>(uniform_index(rng, kNumActions)));
        const auto st = space.state(i);
        const auto r = step(task, st, a);
        const auto tgt = space.encoding(static_cast<int>(uniform_index(rng, space.size()))).features;
        batch.push_back({task.task_id(), st.embedding(), a, r.state.embedding(), r.terminal,
                         indicator(r.state, Target{tgt, 0}, 0), tgt});
      }
      ev.train_batch(batch);
      for (const auto& s : batch) ok = ok && ev.predict({s.task_id, s.source, s.target}, s.action).is_normalized(1e-9);
    }
    lines.push_back({"normalization", ok, "200 tabular batches"});
  }
  return lines;
}

}  // namespace tfe
