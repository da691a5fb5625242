// Command-line front end. Talks to the library only through tfe.h.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tfe/tfe.h"

namespace {

int report(tfe_status s, const char* what) {
  if (s == TFE_OK) return 0;
  std::fprintf(stderr, "tfe %s: %s: %s\n", what, tfe_status_name(s), tfe_last_error());
  return static_cast<int>(s) < 100 ? static_cast<int>(s) + 1 : 101;
}

struct ConfigOptions {
  std::string path;
  std::string output_dir;
  std::vector<std::uint64_t> seeds;
  int threads = 0;

  void add(CLI::App* app, bool run_options) {
    app->add_option("-c,--config", path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    app->add_option("-o,--output-dir", output_dir, "Override the configured output directory");
    if (run_options) {
      app->add_option("--seeds", seeds, "Override the seed list")->delimiter(',');
      app->add_option("-j,--threads", threads, "Override the worker thread count")->check(CLI::PositiveNumber);
    }
  }

  // Loads and applies overrides; returns a process exit code.
  int load(tfe_config** cfg) const {
    if (int rc = report(tfe_config_load(path.c_str(), cfg), "config")) return rc;
    if (!output_dir.empty()) {
      if (int rc = report(tfe_config_set_output_dir(*cfg, output_dir.c_str()), "config")) return rc;
    }
    if (!seeds.empty()) {
      if (int rc = report(tfe_config_set_seeds(*cfg, seeds.data(), seeds.size()), "config")) return rc;
    }
    if (threads > 0) {
      if (int rc = report(tfe_config_set_threads(*cfg, threads), "config")) return rc;
    }
    return 0;
  }
};

int run_gen_tasks(const ConfigOptions& opt) {
  tfe_config* cfg = nullptr;
  int rc = opt.load(&cfg);
  size_t n = 0;
  if (!rc) rc = report(tfe_gen_tasks(cfg, &n), "gen-tasks");
  if (!rc) {
    char* dir = nullptr;
    if (tfe_config_output_dir(cfg, &dir) == TFE_OK) {
      std::printf("wrote %zu tasks under %s/tasks\n", n, dir);
      tfe_string_free(dir);
    }
  }
  tfe_config_free(cfg);
  return rc;
}

int run_train(const ConfigOptions& opt) {
  tfe_config* cfg = nullptr;
  int rc = opt.load(&cfg);
  tfe_train_result* res = nullptr;
  if (!rc) rc = report(tfe_train(cfg, &res), "train");
  if (!rc) {
    char* path = nullptr;
    if (tfe_train_result_metrics_path(res, &path) == TFE_OK) {
      std::printf("metrics: %s\n", path);
      tfe_string_free(path);
    }
    for (size_t i = 0; i < tfe_train_result_seed_count(res); ++i) {
      tfe_seed_summary s;
      if (tfe_train_result_seed(res, i, &s) != TFE_OK) continue;
      std::printf("seed %llu  return %.4f  greedy %.4f  q_error %.4f  e1 %.3f  e2 %.3f  delusion %.3f\n",
                  static_cast<unsigned long long>(s.seed), s.final_train_return, s.final_greedy_return,
                  s.final_q_error,
                  s.final_e1, s.final_e2, s.final_delusion);
    }
  }
  tfe_train_result_free(res);
  tfe_config_free(cfg);
  return rc;
}

int run_eval(const ConfigOptions& opt, const std::string& checkpoint) {
  tfe_config* cfg = nullptr;
  int rc = opt.load(&cfg);
  char* out = nullptr;
  if (!rc) rc = report(tfe_eval(cfg, checkpoint.c_str(), &out), "eval");
  if (!rc) std::printf("ood results: %s\n", out);
  tfe_string_free(out);
  tfe_config_free(cfg);
  return rc;
}

struct OracleOptions {
  std::string task_path;
  std::string family = "rds";
  int width = 8;
  int height = 8;
  double difficulty = 0.2;
  std::uint64_t seed = 0;
  std::string policy = "uniform";
  int support = 16;
  int radius = 0;
  std::string out;
};

int run_oracle(const OracleOptions& o) {
  tfe_task* task = nullptr;
  int rc = 0;
  if (!o.task_path.empty()) {
    rc = report(tfe_task_load(o.task_path.c_str(), &task), "oracle");
  } else {
    const tfe_family fam = o.family == "ssm" ? TFE_FAMILY_SSM : TFE_FAMILY_RDS;
    rc = report(tfe_task_generate(fam, o.width, o.height, o.difficulty, o.seed, &task), "oracle");
  }
  char* csv = nullptr;
  if (!rc) {
    const tfe_policy p = o.policy == "greedy" ? TFE_POLICY_GREEDY : TFE_POLICY_UNIFORM;
    rc = report(tfe_oracle(task, p, o.support, o.radius, &csv), "oracle");
  }
  if (!rc) {
    if (o.out.empty() || o.out == "-") {
      std::fputs(csv, stdout);
    } else {
      std::ofstream f(o.out, std::ios::binary);
      f << csv;
      if (!f) {
        std::fprintf(stderr, "tfe oracle: io: cannot write %s\n", o.out.c_str());
        rc = TFE_ERR_IO + 1;
      }
    }
  }
  tfe_string_free(csv);
  tfe_task_free(task);
  return rc;
}

int run_selftest() {
  tfe_selftest* st = nullptr;
  if (int rc = report(tfe_selftest_run(&st), "selftest")) return rc;
  bool all = true;
  for (size_t i = 0; i < tfe_selftest_count(st); ++i) {
    const char* name = nullptr;
    const char* detail = nullptr;
    int passed = 0;
    tfe_selftest_line(st, i, &name, &passed, &detail);
    std::printf("%s %s (%s)\n", passed ? "PASS" : "FAIL", name, detail);
    all = all && passed;
  }
  tfe_selftest_free(st);
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal-distance feasibility evaluators for generated targets"};
  app.require_subcommand(1);

  ConfigOptions gen_opt, train_opt, eval_opt;
  std::string checkpoint;
  OracleOptions oracle_opt;

  auto* gen = app.add_subcommand("gen-tasks", "Write the training task set");
  gen_opt.add(gen, false);

  auto* train = app.add_subcommand("train", "Train agents and evaluators, write metrics");
  train_opt.add(train, true);

  auto* eval = app.add_subcommand("eval", "Run the held-out task protocol with a checkpoint");
  eval_opt.add(eval, false);
  eval->add_option("--checkpoint", checkpoint, "Evaluator checkpoint")->required()->check(CLI::ExistingFile);

  auto* oracle = app.add_subcommand("oracle", "Print exact distance tables for one task");
  auto* task_opt = oracle->add_option("--task", oracle_opt.task_path, "Task file")->check(CLI::ExistingFile);
  oracle->add_option("--family", oracle_opt.family, "Generated task family")
      ->check(CLI::IsMember({"rds", "ssm"}))
      ->excludes(task_opt);
  oracle->add_option("--width", oracle_opt.width)->excludes(task_opt);
  oracle->add_option("--height", oracle_opt.height)->excludes(task_opt);
  oracle->add_option("--difficulty", oracle_opt.difficulty)->excludes(task_opt);
  oracle->add_option("--seed", oracle_opt.seed)->excludes(task_opt);
  oracle->add_option("--policy", oracle_opt.policy)->check(CLI::IsMember({"uniform", "greedy"}));
  oracle->add_option("--support", oracle_opt.support, "Support size T")->check(CLI::Range(2, 1024));
  oracle->add_option("--radius", oracle_opt.radius)->check(CLI::Range(0, 64));
  oracle->add_option("--out", oracle_opt.out, "Output file, '-' for stdout");

  auto* selftest = app.add_subcommand("selftest", "Run built-in consistency checks");

  CLI11_PARSE(app, argc, argv);

  if (*gen) return run_gen_tasks(gen_opt);
  if (*train) return run_train(train_opt);
  if (*eval) return run_eval(eval_opt, checkpoint);
  if (*oracle) return run_oracle(oracle_opt);
  if (*selftest) return run_selftest();
  return 1;
}
