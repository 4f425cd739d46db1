#include "ftgan/ftgan.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "ftgan/app.hpp"
#include "ftgan/error.hpp"

using namespace ftgan;
using nlohmann::json;

struct ftgan_config {
  io::RunConfig cfg;
  json overrides = json::object();
};

struct ftgan_dataset {
  std::vector<synth::Sample> samples;
};

struct ftgan_models {
  train::Models models;
  train::Stage stage = train::Stage::kFlow;
  nn::ArchConfig arch;
  std::uint64_t seed = 0;
  int iteration = 0;
};

namespace {

thread_local std::string g_last_error;

template <class F>
ftgan_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return FTGAN_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<ftgan_status>(static_cast<int>(e.kind()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown failure";
  }
  return FTGAN_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorKind::kInvalidArgument, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

train::Stage to_stage(int s) {
  require(s >= 0 && s <= 2, ErrorKind::kInvalidArgument, "unknown stage " + std::to_string(s));
  return static_cast<train::Stage>(s);
}

}  // namespace

extern "C" {

const char* ftgan_last_error(void) { return g_last_error.c_str(); }

const char* ftgan_status_name(ftgan_status status) {
  if (status == FTGAN_OK) return "ok";
  if (status == FTGAN_ERR_INTERNAL) return "internal";
  return error_kind_name(static_cast<ErrorKind>(static_cast<int>(status)));
}

void ftgan_string_free(char* s) { std::free(s); }

ftgan_status ftgan_config_create(const char* path, ftgan_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    auto c = std::make_unique<ftgan_config>();
    if (path) {
      c->overrides = json::parse(io::read_file(path), nullptr, false);
      require(!c->overrides.is_discarded(), ErrorKind::kInvalidArgument, std::string("config ") + path + " is not valid JSON");
      c->cfg = io::config_from_json(c->overrides);
    }
    *out = c.release();
  });
}

ftgan_status ftgan_config_set(ftgan_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    json v = json::parse(value, nullptr, false);
    require(!v.is_discarded(), ErrorKind::kInvalidArgument, std::string("value for '") + key + "' is not JSON");
    json next = cfg->overrides;
    next[key] = v;
    cfg->cfg = io::config_from_json(next);
    cfg->overrides = std::move(next);
  });
}

ftgan_status ftgan_config_set_seed(ftgan_config* cfg, uint64_t seed) {
  return guarded([&] {
    need(cfg, "config");
    cfg->overrides["seed"] = seed;
    cfg->cfg.train.seed = seed;
  });
}

ftgan_status ftgan_config_json(const ftgan_config* cfg, char** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = dup_string(io::config_to_json(cfg->cfg).dump(2) + "\n");
  });
}

ftgan_status ftgan_write_manifest(const ftgan_config* cfg, const char* command, const char* arguments_json,
                                  const char* out_dir) {
  return guarded([&] {
    need(cfg, "config");
    need(command, "command");
    need(out_dir, "out_dir");
    json args = arguments_json ? json::parse(arguments_json, nullptr, false) : json::object();
    require(!args.is_discarded(), ErrorKind::kInvalidArgument, "manifest arguments are not JSON");
    const json m{{"command", command}, {"arguments", args}, {"config", io::config_to_json(cfg->cfg)}};
    io::write_file_atomic(std::string(out_dir) + "/run_manifest.json", m.dump(2) + "\n");
  });
}

void ftgan_config_free(ftgan_config* cfg) { delete cfg; }

ftgan_status ftgan_dataset_generate(const ftgan_config* cfg, ftgan_dataset** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = nullptr;
    cfg->cfg.validate();
    *out = new ftgan_dataset{app::generate_dataset(cfg->cfg)};
  });
}

ftgan_status ftgan_dataset_load(const char* dir, ftgan_dataset** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = nullptr;
    *out = new ftgan_dataset{io::read_dataset(dir)};
  });
}

ftgan_status ftgan_dataset_save(const ftgan_dataset* data, const ftgan_config* cfg, const char* dir) {
  return guarded([&] {
    need(data, "dataset");
    need(cfg, "config");
    need(dir, "dir");
    io::write_dataset(dir, data->samples, io::config_to_json(cfg->cfg));
  });
}

ftgan_status ftgan_dataset_size(const ftgan_dataset* data, int* out) {
  return guarded([&] {
    need(data, "dataset");
    need(out, "out");
    *out = static_cast<int>(data->samples.size());
  });
}

void ftgan_dataset_free(ftgan_dataset* data) { delete data; }

ftgan_status ftgan_models_init(const ftgan_config* cfg, ftgan_stage stage, ftgan_models** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = nullptr;
    cfg->cfg.validate();
    const auto s = to_stage(stage);
    *out = new ftgan_models{train::Models::init(s, cfg->cfg.arch, cfg->cfg.train.seed), s, cfg->cfg.arch,
                            cfg->cfg.train.seed, 0};
  });
}

ftgan_status ftgan_models_load(const char* dir, int expected_stage, ftgan_models** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = nullptr;
    const auto ck = io::load_checkpoint(dir);
    std::optional<train::Stage> expected;
    if (expected_stage >= 0) expected = to_stage(expected_stage);
    *out = new ftgan_models{io::restore_models(ck, expected), ck.stage, ck.arch, ck.seed, ck.iteration};
  });
}

ftgan_status ftgan_models_load_pretrained(const char* flow_dir, const char* texture_dir, ftgan_models** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    require(flow_dir && texture_dir, ErrorKind::kPrecondition,
            "joint training needs both a pretrained flow checkpoint and a pretrained texture checkpoint");
    const auto f = io::load_checkpoint(flow_dir);
    const auto t = io::load_checkpoint(texture_dir);
    *out = new ftgan_models{io::combine_pretrained(f, t), train::Stage::kJoint, f.arch, f.seed, 0};
  });
}

ftgan_status ftgan_models_save(const ftgan_models* models, const char* dir) {
  return guarded([&] {
    need(models, "models");
    need(dir, "dir");
    io::save_checkpoint(dir, io::make_checkpoint(models->models, models->stage, models->iteration, models->seed,
                                                 models->arch));
  });
}

ftgan_status ftgan_models_stage(const ftgan_models* models, ftgan_stage* out) {
  return guarded([&] {
    need(models, "models");
    need(out, "out");
    *out = static_cast<ftgan_stage>(static_cast<int>(models->stage));
  });
}

void ftgan_models_free(ftgan_models* models) { delete models; }

ftgan_status ftgan_train(ftgan_models* models, const ftgan_dataset* data, const ftgan_config* cfg,
                         ftgan_stage stage, const char* out_dir, ftgan_progress_fn progress, void* user) {
  return guarded([&] {
    need(models, "models");
    need(data, "dataset");
    need(cfg, "config");
    need(out_dir, "out_dir");
    const auto s = to_stage(stage);
    require(models->arch == cfg->cfg.arch, ErrorKind::kPrecondition,
            "model architecture differs from the configuration");
    app::Progress p;
    const int total = cfg->cfg.train.total_iters;
    if (progress) p = [&](const train::TrainRecord& r) { progress(r.iter, total, r.loss_d, r.loss_g, user); };
    app::run_training(models->models, data->samples, cfg->cfg, s, out_dir, p);
    models->stage = s;
    models->iteration = total;
  });
}

ftgan_status ftgan_sample(ftgan_models* models, const ftgan_config* cfg, int n, const char* flow_file,
                          const char* out_dir) {
  return guarded([&] {
    need(models, "models");
    need(cfg, "config");
    need(out_dir, "out_dir");
    require(n >= 1, ErrorKind::kInvalidArgument, "sample count must be >= 1");
    require(models->arch == cfg->cfg.arch, ErrorKind::kPrecondition,
            "model architecture differs from the configuration");
    std::optional<FlowVideo> cond;
    if (flow_file) cond = app::condition_from_clip(io::read_clip(flow_file).volume, cfg->cfg);
    app::write_samples(app::generate_clips(models->models, n, cfg->cfg.train.seed, cond), cfg->cfg, out_dir);
  });
}

ftgan_status ftgan_eval(ftgan_models* models, const ftgan_dataset* data, const ftgan_config* cfg, const char* out_dir,
                        char** report_json) {
  return guarded([&] {
    need(models, "models");
    need(data, "dataset");
    need(cfg, "config");
    const auto r = app::run_eval(models->models, data->samples, cfg->cfg, out_dir ? out_dir : "");
    if (report_json) *report_json = dup_string(r.to_json());
  });
}

ftgan_status ftgan_baseline_warp(const ftgan_dataset* data, const ftgan_config* cfg, ftgan_models* models,
                                 const char* out_dir, char** report_json) {
  return guarded([&] {
    need(data, "dataset");
    need(cfg, "config");
    const auto r = app::run_baseline_warp(data->samples, cfg->cfg, models ? &models->models : nullptr,
                                          out_dir ? out_dir : "");
    if (report_json) *report_json = dup_string(r.to_json());
  });
}

}  // extern "C"
