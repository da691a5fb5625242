#include "tfe/tfe.h"

#include <cstdlib>
#include <cstring>
#include <sstream>
#include <string>

#include "tfe/run.hpp"

struct tfe_config {
  tfe::RunConfig c;
};
struct tfe_task {
  tfe::GridTask t;
};
struct tfe_evaluator {
  std::unique_ptr<tfe::Evaluator> e;
};
struct tfe_train_result {
  tfe::TrainResult r;
};
struct tfe_selftest {
  std::vector<tfe::SelftestLine> lines;
};

namespace {

thread_local std::string g_last_error;

tfe_status fail(tfe_status s, const char* what) {
  g_last_error = what;
  return s;
}

template <class F>
tfe_status guard(F&& f) {
  try {
    f();
    g_last_error.clear();
    return TFE_OK;
  } catch (const tfe::Error& e) {
    return fail(static_cast<tfe_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TFE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(TFE_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(TFE_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void require(const void* p, const char* name) {
  if (!p) throw tfe::Error(tfe::ErrorCode::InvalidArgument, std::string(name) + " is null");
}

tfe::Embedding to_embedding(const tfe_embedding& e) {
  return {e.x, e.y, e.has_sword != 0, e.has_shield != 0};
}

}  // namespace

extern "C" {

const char* tfe_last_error(void) { return g_last_error.c_str(); }

const char* tfe_status_name(tfe_status s) {
  switch (s) {
    case TFE_OK: return "ok";
    case TFE_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case TFE_ERR_GENERATION_EXHAUSTED: return "generation_exhausted";
    case TFE_ERR_STEPPED_TERMINAL: return "stepped_terminal";
    case TFE_ERR_PARSE: return "parse";
    case TFE_ERR_VALIDATION: return "validation";
    case TFE_ERR_FUTURE_EMPTY: return "future_empty";
    case TFE_ERR_MISSING_GENERATOR: return "missing_generator";
    case TFE_ERR_EMPTY_STORE: return "empty_store";
    case TFE_ERR_UNSEEN_PAIR: return "unseen_pair";
    case TFE_ERR_G2_UNAVAILABLE: return "g2_unavailable";
    case TFE_ERR_NON_FINITE_LOSS: return "non_finite_loss";
    case TFE_ERR_CONTRACT_VIOLATION: return "contract_violation";
    case TFE_ERR_IO: return "io";
    case TFE_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void tfe_string_free(char* s) { std::free(s); }

tfe_status tfe_config_parse(const char* json_text, tfe_config** out) {
  return guard([&] {
    require(json_text, "json_text");
    require(out, "out");
    *out = new tfe_config{tfe::parse_run_config(json_text)};
  });
}

tfe_status tfe_config_load(const char* path, tfe_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new tfe_config{tfe::load_run_config(path)};
  });
}

tfe_status tfe_config_set_output_dir(tfe_config* config, const char* dir) {
  return guard([&] {
    require(config, "config");
    require(dir, "dir");
    config->c.output_dir = dir;
  });
}

tfe_status tfe_config_set_threads(tfe_config* config, int threads) {
  return guard([&] {
    require(config, "config");
    auto c = config->c;
    c.threads = threads;
    c.validate();
    config->c = c;
  });
}

tfe_status tfe_config_set_seeds(tfe_config* config, const uint64_t* seeds, size_t n) {
  return guard([&] {
    require(config, "config");
    if (n) require(seeds, "seeds");
    auto c = config->c;
    c.seeds.assign(seeds, seeds + n);
    c.validate();
    config->c = c;
  });
}

tfe_status tfe_config_output_dir(const tfe_config* config, char** out) {
  return guard([&] {
    require(config, "config");
    require(out, "out");
    *out = dup_string(tfe::resolve_output_dir(config->c).string());
  });
}

tfe_status tfe_config_dump(const tfe_config* config, char** out) {
  return guard([&] {
    require(config, "config");
    require(out, "out");
    *out = dup_string(tfe::dump_run_config(config->c));
  });
}

void tfe_config_free(tfe_config* config) { delete config; }

tfe_status tfe_task_generate(tfe_family family, int width, int height, double difficulty,
                             uint64_t seed, tfe_task** out) {
  return guard([&] {
    require(out, "out");
    if (family != TFE_FAMILY_RDS && family != TFE_FAMILY_SSM) {
      throw tfe::Error(tfe::ErrorCode::InvalidArgument, "unknown family");
    }
    const auto f = family == TFE_FAMILY_RDS ? tfe::Family::RDS : tfe::Family::SSM;
    *out = new tfe_task{tfe::generate_task(f, width, height, difficulty, seed)};
  });
}

tfe_status tfe_task_load(const char* path, tfe_task** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new tfe_task{tfe::load_task(path)};
  });
}

tfe_status tfe_task_save(const tfe_task* task, const char* path) {
  return guard([&] {
    require(task, "task");
    require(path, "path");
    tfe::save_task(task->t, path);
  });
}

tfe_status tfe_task_id(const tfe_task* task, uint64_t* out) {
  return guard([&] {
    require(task, "task");
    require(out, "out");
    *out = task->t.task_id();
  });
}

void tfe_task_free(tfe_task* task) { delete task; }

tfe_status tfe_evaluator_load(const char* path, tfe_evaluator** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new tfe_evaluator{tfe::load_evaluator(path)};
  });
}

tfe_status tfe_evaluator_support_size(const tfe_evaluator* ev, int* out) {
  return guard([&] {
    require(ev, "evaluator");
    require(out, "out");
    *out = ev->e->support_size();
  });
}

tfe_status tfe_evaluator_predict(const tfe_evaluator* ev, uint64_t task_id, tfe_embedding source,
                                 tfe_embedding target, double* probs, size_t n) {
  return guard([&] {
    require(ev, "evaluator");
    require(probs, "probs");
    if (n != static_cast<size_t>(ev->e->support_size())) {
      throw tfe::Error(tfe::ErrorCode::InvalidArgument, "probs length must equal the support size");
    }
    const auto h = ev->e->predict({task_id, to_embedding(source), to_embedding(target)});
    for (size_t k = 0; k < n; ++k) probs[k] = h[static_cast<int>(k)];
  });
}

void tfe_evaluator_free(tfe_evaluator* ev) { delete ev; }

tfe_status tfe_gen_tasks(const tfe_config* config, size_t* n_written) {
  return guard([&] {
    require(config, "config");
    const auto paths = tfe::cmd_gen_tasks(config->c);
    if (n_written) *n_written = paths.size();
  });
}

tfe_status tfe_train(const tfe_config* config, tfe_train_result** out) {
  return guard([&] {
    require(config, "config");
    require(out, "out");
    *out = nullptr;
    auto r = tfe::cmd_train(config->c);
    *out = new tfe_train_result{std::move(r)};
  });
}

tfe_status tfe_train_result_metrics_path(const tfe_train_result* r, char** out) {
  return guard([&] {
    require(r, "result");
    require(out, "out");
    *out = dup_string(r->r.metrics_csv.string());
  });
}

size_t tfe_train_result_seed_count(const tfe_train_result* r) { return r ? r->r.seeds.size() : 0; }

tfe_status tfe_train_result_seed(const tfe_train_result* r, size_t i, tfe_seed_summary* out) {
  return guard([&] {
    require(r, "result");
    require(out, "out");
    if (i >= r->r.seeds.size()) throw tfe::Error(tfe::ErrorCode::InvalidArgument, "seed index out of range");
    const auto& s = r->r.seeds[i];
    *out = {s.seed,         s.final_train_return, s.final_q_error,   s.final_greedy_return,
            s.final_e1,     s.final_e2,           s.final_delusion,  s.dyna.applied,
            s.dyna.rejected, s.injector_fallbacks};
  });
}

void tfe_train_result_free(tfe_train_result* r) { delete r; }

tfe_status tfe_eval(const tfe_config* config, const char* checkpoint, char** out_path) {
  return guard([&] {
    require(config, "config");
    require(checkpoint, "checkpoint");
    const auto p = tfe::cmd_eval(checkpoint, config->c);
    if (out_path) *out_path = dup_string(p.string());
  });
}

tfe_status tfe_oracle(const tfe_task* task, tfe_policy policy, int support_size, int radius,
                      char** out_csv) {
  return guard([&] {
    require(task, "task");
    require(out_csv, "out_csv");
    if (support_size < 2) throw tfe::Error(tfe::ErrorCode::InvalidArgument, "support size must be at least 2");
    if (radius < 0) throw tfe::Error(tfe::ErrorCode::InvalidArgument, "radius must be >= 0");
    tfe::PolicySpec spec;
    if (policy == TFE_POLICY_UNIFORM) spec = tfe::PolicySpec::uniform_random();
    else if (policy == TFE_POLICY_GREEDY) spec = tfe::PolicySpec::greedy_to_target();
    else throw tfe::Error(tfe::ErrorCode::InvalidArgument, "unknown policy");
    std::ostringstream os;
    tfe::cmd_oracle(task->t, spec, support_size, radius, os);
    *out_csv = dup_string(os.str());
  });
}

tfe_status tfe_selftest_run(tfe_selftest** out) {
  return guard([&] {
    require(out, "out");
    *out = new tfe_selftest{tfe::cmd_selftest()};
  });
}

size_t tfe_selftest_count(const tfe_selftest* s) { return s ? s->lines.size() : 0; }

tfe_status tfe_selftest_line(const tfe_selftest* s, size_t i, const char** name, int* passed,
                             const char** detail) {
  return guard([&] {
    require(s, "selftest");
    if (i >= s->lines.size()) throw tfe::Error(tfe::ErrorCode::InvalidArgument, "line index out of range");
    const auto& l = s->lines[i];
    if (name) *name = l.name.c_str();
    if (passed) *passed = l.passed ? 1 : 0;
    if (detail) *detail = l.detail.c_str();
  });
}

void tfe_selftest_free(tfe_selftest* s) { delete s; }

}  // extern "C"
