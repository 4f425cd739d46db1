#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ftgan/ftgan.h"
#include "json.hpp"

namespace {

struct Failure {
  ftgan_status status;
};

void check(ftgan_status s, const char* what) {
  if (s == FTGAN_OK) return;
  std::fprintf(stderr, "ftgan: %s failed [%s]: %s\n", what, ftgan_status_name(s), ftgan_last_error());
  throw Failure{s};
}

[[noreturn]] void precondition(const std::string& msg) {
  std::fprintf(stderr, "ftgan: precondition failed: %s\n", msg.c_str());
  throw Failure{FTGAN_ERR_PRECONDITION};
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() {
    if (p) Free(p);
  }
};
using Config = Handle<ftgan_config, ftgan_config_free>;
using Dataset = Handle<ftgan_dataset, ftgan_dataset_free>;
using Models = Handle<ftgan_models, ftgan_models_free>;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string flow_ckpt;
  std::string texture_ckpt;
  std::string flow_from = "checkpoint";
  std::string flow_file;
  std::optional<int> n;
  bool untrained = false;
  int progress_every = 50;
};

void make_config(const Options& o, Config& cfg) {
  check(ftgan_config_create(o.config.empty() ? nullptr : o.config.c_str(), &cfg.p), "loading config");
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "ftgan: --set expects key=value, got '%s'\n", kv.c_str());
      throw Failure{FTGAN_ERR_INVALID_ARGUMENT};
    }
    check(ftgan_config_set(cfg.p, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "applying --set");
  }
  if (o.seed) check(ftgan_config_set_seed(cfg.p, *o.seed), "setting seed");
}

void write_manifest(const Config& cfg, const std::string& command, const Options& o) {
  nlohmann::json args;
  args["out"] = o.out;
  if (!o.config.empty()) args["config"] = o.config;
  if (o.seed) args["seed"] = *o.seed;
  if (!o.sets.empty()) args["set"] = o.sets;
  if (!o.data.empty()) args["data"] = o.data;
  if (!o.checkpoint.empty()) args["checkpoint"] = o.checkpoint;
  if (!o.flow_ckpt.empty()) args["flow_ckpt"] = o.flow_ckpt;
  if (!o.texture_ckpt.empty()) args["texture_ckpt"] = o.texture_ckpt;
  if (command == "sample") args["flow_from"] = o.flow_from;
  if (!o.flow_file.empty()) args["flow_file"] = o.flow_file;
  if (o.n) args["n"] = *o.n;
  if (o.untrained) args["untrained"] = true;
  check(ftgan_write_manifest(cfg.p, command.c_str(), args.dump().c_str(), o.out.c_str()), "writing manifest");
}

void load_dataset(const Options& o, Dataset& d) {
  if (o.data.empty()) precondition("--data <dir> is required (create one with gen-data)");
  check(ftgan_dataset_load(o.data.c_str(), &d.p), "loading dataset");
}

// --checkpoint takes any stage; otherwise a flow and a texture checkpoint are combined.
bool load_models(const Options& o, Models& m, bool texture_only_ok) {
  if (!o.checkpoint.empty()) {
    check(ftgan_models_load(o.checkpoint.c_str(), -1, &m.p), "loading checkpoint");
    return true;
  }
  if (!o.flow_ckpt.empty() && !o.texture_ckpt.empty()) {
    check(ftgan_models_load_pretrained(o.flow_ckpt.c_str(), o.texture_ckpt.c_str(), &m.p), "loading checkpoints");
    return true;
  }
  if (texture_only_ok && !o.texture_ckpt.empty()) {
    check(ftgan_models_load(o.texture_ckpt.c_str(), FTGAN_STAGE_TEXTURE, &m.p), "loading texture checkpoint");
    return true;
  }
  return false;
}

void progress(int iter, int total, double loss_d, double loss_g, void* user) {
  const int every = *static_cast<int*>(user);
  if (every > 0 && (iter % every == 0 || iter + 1 == total))
    std::fprintf(stderr, "iter %d/%d  L_D %.4f  L_G %.4f\n", iter + 1, total, loss_d, loss_g);
}

void print_and_free(char* s) {
  if (!s) return;
  std::fputs(s, stdout);
  ftgan_string_free(s);
}

int run(const std::string& command, Options& o) {
  Config cfg;
  make_config(o, cfg);
  write_manifest(cfg, command, o);

  if (command == "gen-data") {
    Dataset d;
    check(ftgan_dataset_generate(cfg.p, &d.p), "generating dataset");
    check(ftgan_dataset_save(d.p, cfg.p, o.out.c_str()), "writing dataset");
    int n = 0;
    check(ftgan_dataset_size(d.p, &n), "counting clips");
    std::printf("wrote %d clips to %s\n", n, o.out.c_str());
    return 0;
  }

  if (command == "train-flow" || command == "train-texture" || command == "train-joint") {
    Dataset d;
    load_dataset(o, d);
    Models m;
    ftgan_stage stage = FTGAN_STAGE_FLOW;
    if (command == "train-joint") {
      if (o.flow_ckpt.empty() || o.texture_ckpt.empty())
        precondition("train-joint needs --flow-ckpt and --texture-ckpt from the pretraining stages");
      check(ftgan_models_load_pretrained(o.flow_ckpt.c_str(), o.texture_ckpt.c_str(), &m.p), "loading checkpoints");
      stage = FTGAN_STAGE_JOINT;
    } else {
      stage = command == "train-flow" ? FTGAN_STAGE_FLOW : FTGAN_STAGE_TEXTURE;
      check(ftgan_models_init(cfg.p, stage, &m.p), "initializing networks");
    }
    check(ftgan_train(m.p, d.p, cfg.p, stage, o.out.c_str(), progress, &o.progress_every), "training");
    std::printf("checkpoint written to %s/checkpoint\n", o.out.c_str());
    return 0;
  }

  if (command == "sample") {
    Models m;
    const bool from_file = o.flow_from == "file";
    if (from_file && o.flow_file.empty()) precondition("--flow-from file needs --flow-file <clip>");
    if (!load_models(o, m, from_file))
      precondition("sample needs --checkpoint, or --flow-ckpt with --texture-ckpt");
    int n = 0;
    if (o.n) {
      n = *o.n;
    } else {
      char* js = nullptr;
      check(ftgan_config_json(cfg.p, &js), "reading config");
      n = nlohmann::json::parse(js).at("n_samples").get<int>();
      ftgan_string_free(js);
    }
    check(ftgan_sample(m.p, cfg.p, n, from_file ? o.flow_file.c_str() : nullptr, o.out.c_str()), "sampling");
    std::printf("wrote %d samples to %s\n", n, o.out.c_str());
    return 0;
  }

  if (command == "eval") {
    Dataset d;
    load_dataset(o, d);
    Models m;
    if (o.untrained) {
      check(ftgan_models_init(cfg.p, FTGAN_STAGE_JOINT, &m.p), "initializing networks");
    } else if (!load_models(o, m, false)) {
      precondition("eval needs --checkpoint, --flow-ckpt with --texture-ckpt, or --untrained");
    }
    char* report = nullptr;
    check(ftgan_eval(m.p, d.p, cfg.p, o.out.c_str(), &report), "evaluation");
    print_and_free(report);
    return 0;
  }

  if (command == "baseline-warp") {
    Dataset d;
    load_dataset(o, d);
    Models m;
    load_models(o, m, false);
    char* report = nullptr;
    check(ftgan_baseline_warp(d.p, cfg.p, m.p, o.out.c_str(), &report), "warp baseline");
    print_and_free(report);
    return 0;
  }
  return FTGAN_ERR_INVALID_ARGUMENT;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stream video GAN on synthetic moving shapes"};
  app.require_subcommand(1);
  Options o;
  std::map<std::string, CLI::App*> subs;

  const auto add = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", o.config, "flat JSON configuration file")->check(CLI::ExistingFile);
    s->add_option("--seed", o.seed, "seed overriding the configuration");
    s->add_option("--set", o.sets, "override one config key: key=json_value");
    s->add_option("--out", o.out, "output directory")->required();
    subs[name] = s;
    return s;
  };
  const auto model_args = [&](CLI::App* s) {
    s->add_option("--checkpoint", o.checkpoint, "checkpoint directory of any stage");
    s->add_option("--flow-ckpt", o.flow_ckpt, "flow-stage checkpoint directory");
    s->add_option("--texture-ckpt", o.texture_ckpt, "texture-stage checkpoint directory");
  };

  add("gen-data", "render the synthetic moving-shapes dataset");
  for (const char* name : {"train-flow", "train-texture", "train-joint"}) {
    auto* s = add(name, name == std::string("train-joint") ? "joint fine-tuning from both pretrained stages"
                                                           : "train one stage from scratch");
    s->add_option("--data", o.data, "dataset directory");
    s->add_option("--progress-every", o.progress_every, "print losses every N iterations (0 = quiet)");
    if (name == std::string("train-joint")) {
      s->add_option("--flow-ckpt", o.flow_ckpt, "flow-stage checkpoint directory");
      s->add_option("--texture-ckpt", o.texture_ckpt, "texture-stage checkpoint directory");
    }
  }
  auto* sample = add("sample", "generate clips, GIFs and flow/RGB panels");
  model_args(sample);
  sample->add_option("--flow-from", o.flow_from, "condition on generated flow or a flow clip file")
      ->check(CLI::IsMember({"checkpoint", "file"}));
  sample->add_option("--flow-file", o.flow_file, "flow clip for --flow-from file")->check(CLI::ExistingFile);
  sample->add_option("--n", o.n, "number of clips")->check(CLI::PositiveNumber);
  auto* ev = add("eval", "discriminator feature probe and generation statistics");
  model_args(ev);
  ev->add_option("--data", o.data, "dataset directory");
  ev->add_flag("--untrained", o.untrained, "probe freshly initialized networks");
  auto* bw = add("baseline-warp", "first-frame warping baseline");
  model_args(bw);
  bw->add_option("--data", o.data, "dataset directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return FTGAN_ERR_INVALID_ARGUMENT;
  }

  std::string command;
  for (const auto& [name, s] : subs)
    if (s->parsed()) command = name;
  try {
    return run(command, o);
  } catch (const Failure& f) {
    return static_cast<int>(f.status);
  }
}
