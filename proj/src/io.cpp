#include "ftgan/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <png.h>
#include <unistd.h>
#include <zlib.h>

#include "ftgan/core.hpp"
#include "ftgan/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ftgan::io {

namespace {

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::kInvalidArgument, "config key '" + key + "' has the wrong type");
  }
}

const char* fusion_name(eval::Fusion f) { return f == eval::Fusion::kConcat ? "concat" : "score_average"; }

eval::Fusion fusion_from(const std::string& s) {
  if (s == "concat") return eval::Fusion::kConcat;
  if (s == "score_average") return eval::Fusion::kScoreAverage;
  fail(ErrorKind::kInvalidArgument, "unknown fusion '" + s + "' (concat, score_average)");
}

json arch_to_json(const nn::ArchConfig& a) {
  return {{"frames", a.frames},           {"height", a.height},         {"width", a.width},
          {"base_channels", a.base_channels}, {"max_channels", a.max_channels}, {"n_levels", a.n_levels},
          {"leaky_slope", a.leaky_slope}, {"flow_scale", a.flow_scale}, {"skip_levels", a.skip_levels}};
}

// Applies the arch keys present in j and records them in used.
void arch_from_json(const json& j, nn::ArchConfig& a, std::set<std::string>& used) {
  const auto take = [&](const char* k, auto& field) {
    if (!j.contains(k)) return;
    field = get_as<std::remove_reference_t<decltype(field)>>(j.at(k), k);
    used.insert(k);
  };
  take("frames", a.frames);
  take("height", a.height);
  take("width", a.width);
  take("base_channels", a.base_channels);
  take("max_channels", a.max_channels);
  take("n_levels", a.n_levels);
  take("leaky_slope", a.leaky_slope);
  take("flow_scale", a.flow_scale);
  take("skip_levels", a.skip_levels);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : b_(bytes), what_(std::move(what)) {}
  void need(std::size_t n) const {
    require(pos_ + n <= b_.size(), ErrorKind::kFormat, what_ + ": truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }
  const std::string& what() const { return what_; }

 private:
  const std::string& b_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const char* p, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(p),
                                            static_cast<uInt>(n)));
}

std::string clip_name(std::size_t i, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "clip_%05zu.%s.ftcl", i, kind);
  return buf;
}

const char* network_names[] = {"gen_flow", "disc_flow", "gen_tex", "disc_tex"};

std::vector<std::pair<std::string, const nn::ParameterSet*>> networks_of(const train::Models& m) {
  std::vector<std::pair<std::string, const nn::ParameterSet*>> out;
  if (m.gen_flow) out.emplace_back(network_names[0], &m.gen_flow->params());
  if (m.disc_flow) out.emplace_back(network_names[1], &m.disc_flow->params());
  if (m.gen_tex) out.emplace_back(network_names[2], &m.gen_tex->params());
  if (m.disc_tex) out.emplace_back(network_names[3], &m.disc_tex->params());
  return out;
}

nn::ParameterSet* network_by_name(train::Models& m, const std::string& name) {
  if (name == network_names[0] && m.gen_flow) return &m.gen_flow->params();
  if (name == network_names[1] && m.disc_flow) return &m.disc_flow->params();
  if (name == network_names[2] && m.gen_tex) return &m.gen_tex->params();
  if (name == network_names[3] && m.disc_tex) return &m.disc_tex->params();
  return nullptr;
}

std::uint8_t to_byte(float v) {
  const double x = std::clamp((static_cast<double>(v) + 1.0) * 127.5, 0.0, 255.0);
  return static_cast<std::uint8_t>(std::lround(x));
}

}  // namespace

RunConfig RunConfig::for_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "micro") return c;
  if (name == "desk") {
    c.arch = nn::ArchConfig::desk();
    c.pipeline = train::DataPipeline{};
    c.windows = eval::ProbeWindows{32, 16};
    return c;
  }
  fail(ErrorKind::kInvalidArgument, "unknown preset '" + name + "' (micro, desk)");
}

void RunConfig::validate() const {
  train.validate();
  arch.validate();
  require(data.clips_per_class >= 1 && !data.classes.empty(), ErrorKind::kInvalidArgument,
          "dataset needs at least one class and one clip per class");
  require(pipeline.downsample >= 1 && pipeline.crop % pipeline.downsample == 0, ErrorKind::kInvalidArgument,
          "crop must be a multiple of downsample");
  require(pipeline.crop <= data.canvas, ErrorKind::kInvalidArgument, "crop exceeds the canvas");
  require(pipeline.crop / pipeline.downsample == arch.height && arch.height == arch.width,
          ErrorKind::kInvalidArgument, "crop / downsample must equal the network's height and width");
  require(data.n_frames >= arch.frames, ErrorKind::kInvalidArgument, "clips are shorter than the network input");
  require(windows.window == arch.frames && windows.stride >= 1, ErrorKind::kInvalidArgument,
          "probe window must equal the network's frame count");
  require(test_fraction > 0 && test_fraction < 1, ErrorKind::kInvalidArgument, "test_fraction must be in (0, 1)");
  require(n_samples >= 1, ErrorKind::kInvalidArgument, "n_samples must be >= 1");
  require(fps > 0, ErrorKind::kInvalidArgument, "fps must be positive");
}

RunConfig config_from_json(const json& j) {
  require(j.is_object(), ErrorKind::kInvalidArgument, "config must be a JSON object");
  std::set<std::string> used;
  RunConfig c;
  if (j.contains("preset")) {
    c = RunConfig::for_preset(get_as<std::string>(j.at("preset"), "preset"));
    used.insert("preset");
  }
  const auto take = [&](const char* k, auto& field) {
    if (!j.contains(k)) return;
    field = get_as<std::remove_reference_t<decltype(field)>>(j.at(k), k);
    used.insert(k);
  };
  take("seed", c.train.seed);
  take("lr_initial", c.train.lr_initial);
  take("joint_lr_flow", c.train.joint_lr_flow);
  take("joint_lr_texture", c.train.joint_lr_texture);
  take("beta1", c.train.beta1);
  take("beta2", c.train.beta2);
  take("adam_eps", c.train.adam_eps);
  take("batch_size", c.train.batch_size);
  take("total_iters", c.train.total_iters);
  take("lambda_joint", c.train.lambda_joint);
  take("lambda_mask", c.train.lambda_mask);
  take("checkpoint_every", c.train.checkpoint_every);
  arch_from_json(j, c.arch, used);
  if (j.contains("classes")) {
    c.data.classes.clear();
    for (const auto& s : get_as<std::vector<std::string>>(j.at("classes"), "classes"))
      c.data.classes.push_back(synth::motion_kind_from_string(s));
    used.insert("classes");
  }
  take("clips_per_class", c.data.clips_per_class);
  take("canvas", c.data.canvas);
  take("n_frames", c.data.n_frames);
  take("dataset_flow_scale", c.data.flow_scale);
  take("crop", c.pipeline.crop);
  take("downsample", c.pipeline.downsample);
  take("augment", c.pipeline.augment);
  take("window", c.windows.window);
  take("stride", c.windows.stride);
  take("test_fraction", c.test_fraction);
  if (j.contains("fusion")) {
    c.fusion = fusion_from(get_as<std::string>(j.at("fusion"), "fusion"));
    used.insert("fusion");
  }
  take("n_samples", c.n_samples);
  take("fps", c.fps);
  for (const auto& [k, v] : j.items())
    require(used.contains(k), ErrorKind::kInvalidArgument, "unknown config key '" + k + "'");
  return c;
}

RunConfig load_config(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidArgument, "config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const RunConfig& c) {
  json j = arch_to_json(c.arch);
  j["preset"] = c.preset;
  j["seed"] = c.train.seed;
  j["lr_initial"] = c.train.lr_initial;
  j["joint_lr_flow"] = c.train.joint_lr_flow;
  j["joint_lr_texture"] = c.train.joint_lr_texture;
  j["beta1"] = c.train.beta1;
  j["beta2"] = c.train.beta2;
  j["adam_eps"] = c.train.adam_eps;
  j["batch_size"] = c.train.batch_size;
  j["total_iters"] = c.train.total_iters;
  j["lambda_joint"] = c.train.lambda_joint;
  j["lambda_mask"] = c.train.lambda_mask;
  j["checkpoint_every"] = c.train.checkpoint_every;
  std::vector<std::string> classes;
  for (auto k : c.data.classes) classes.emplace_back(synth::to_string(k));
  j["classes"] = classes;
  j["clips_per_class"] = c.data.clips_per_class;
  j["canvas"] = c.data.canvas;
  j["n_frames"] = c.data.n_frames;
  j["dataset_flow_scale"] = c.data.flow_scale;
  j["crop"] = c.pipeline.crop;
  j["downsample"] = c.pipeline.downsample;
  j["augment"] = c.pipeline.augment;
  j["window"] = c.windows.window;
  j["stride"] = c.windows.stride;
  j["test_fraction"] = c.test_fraction;
  j["fusion"] = fusion_name(c.fusion);
  j["n_samples"] = c.n_samples;
  j["fps"] = c.fps;
  return j;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  const std::string tmp = path + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), ErrorKind::kIo, "cannot open " + tmp + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    require(static_cast<bool>(f), ErrorKind::kIo, "write failed: " + tmp);
  }
  fs::rename(tmp, p, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::kIo, "cannot rename into " + path);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string encode_clip(const Volume& v, std::optional<int> label) {
  std::string out = "FTCL";
  put_u32(out, kClipVersion);
  put_u32(out, static_cast<std::uint32_t>(v.frames()));
  put_u32(out, static_cast<std::uint32_t>(v.height()));
  put_u32(out, static_cast<std::uint32_t>(v.width()));
  put_u32(out, static_cast<std::uint32_t>(v.channels()));
  put_u32(out, 1);  // dtype: float32
  put_u32(out, label ? 1u : 0u);
  put_u32(out, static_cast<std::uint32_t>(label.value_or(0)));
  put_u64(out, static_cast<std::uint64_t>(v.size()) * 4);
  out.reserve(out.size() + v.size() * 4);
  for (float f : v.data()) put_f32(out, f);
  return out;
}

ClipData decode_clip(const std::string& bytes, const std::string& what) {
  Reader r(bytes, what);
  require(r.bytes(4) == "FTCL", ErrorKind::kFormat, what + ": not a clip file");
  const auto version = r.u32();
  require(version == kClipVersion, ErrorKind::kVersion,
          what + ": clip version " + std::to_string(version) + ", expected " + std::to_string(kClipVersion));
  const auto t = r.u32(), h = r.u32(), w = r.u32(), c = r.u32();
  require(r.u32() == 1, ErrorKind::kFormat, what + ": unsupported dtype");
  const bool has_label = r.u32() != 0;
  const auto label = static_cast<int>(r.u32());
  const auto payload = r.u64();
  const std::uint64_t expected = static_cast<std::uint64_t>(t) * h * w * c * 4;
  require(payload == expected, ErrorKind::kFormat, what + ": declared payload disagrees with the header shape");
  require(t > 0 && h > 0 && w > 0 && c > 0 && t < 65536 && h < 65536 && w < 65536 && c < 256,
          ErrorKind::kFormat, what + ": implausible shape");
  r.need(payload);
  ClipData d{Volume(static_cast<int>(t), static_cast<int>(h), static_cast<int>(w), static_cast<int>(c)),
             has_label ? std::optional<int>(label) : std::nullopt};
  for (float& f : d.volume.data()) f = r.f32();
  require(r.done(), ErrorKind::kFormat, what + ": trailing bytes after payload");
  return d;
}

void write_clip(const std::string& path, const Volume& v, std::optional<int> label) {
  write_file_atomic(path, encode_clip(v, label));
}

ClipData read_clip(const std::string& path) { return decode_clip(read_file(path), path); }

void write_dataset(const std::string& dir, const std::vector<synth::Sample>& samples, const json& config) {
  fs::create_directories(dir);
  std::vector<int> labels;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    write_clip((fs::path(dir) / clip_name(i, "video")).string(), samples[i].video, samples[i].label);
    write_clip((fs::path(dir) / clip_name(i, "flow")).string(), samples[i].flow, samples[i].label);
    labels.push_back(samples[i].label);
  }
  json m{{"format", "ftgan-dataset"}, {"schema_version", 1}, {"count", samples.size()}, {"labels", labels},
         {"config", config}};
  write_file_atomic((fs::path(dir) / "dataset.json").string(), m.dump(2) + "\n");
}

std::vector<synth::Sample> read_dataset(const std::string& dir) {
  const std::string mpath = (fs::path(dir) / "dataset.json").string();
  json m;
  try {
    m = json::parse(read_file(mpath));
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, mpath + ": " + e.what());
  }
  require(m.value("format", "") == "ftgan-dataset", ErrorKind::kFormat, mpath + ": not a dataset manifest");
  require(m.value("schema_version", 0) == 1, ErrorKind::kVersion, mpath + ": unsupported schema version");
  const auto labels = m.at("labels").get<std::vector<int>>();
  std::vector<synth::Sample> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto v = read_clip((fs::path(dir) / clip_name(i, "video")).string());
    auto f = read_clip((fs::path(dir) / clip_name(i, "flow")).string());
    require(v.volume.channels() == 3 && f.volume.channels() == 2 && v.volume.same_grid(f.volume),
            ErrorKind::kFormat, dir + ": clip " + std::to_string(i) + " has inconsistent video and flow");
    require(v.label == labels[i] && f.label == labels[i], ErrorKind::kIntegrity,
            dir + ": clip " + std::to_string(i) + " label disagrees with the manifest");
    out.push_back({std::move(v.volume), std::move(f.volume), labels[i]});
  }
  return out;
}

Checkpoint make_checkpoint(const train::Models& models, train::Stage stage, int iteration, std::uint64_t seed,
                           const nn::ArchConfig& arch) {
  Checkpoint ck;
  ck.stage = stage;
  ck.iteration = iteration;
  ck.seed = seed;
  ck.arch = arch;
  for (const auto& [net, ps] : networks_of(models)) {
    for (const auto& p : *ps) {
      NamedTensor t{net + "/" + p.name, p.value.shape(), {}};
      t.data.reserve(p.value.size());
      for (double v : p.value.data()) t.data.push_back(static_cast<float>(v));
      ck.tensors.push_back(std::move(t));
    }
  }
  return ck;
}

void save_checkpoint(const std::string& dir, const Checkpoint& ck) {
  std::string archive = "FTCK";
  put_u32(archive, static_cast<std::uint32_t>(ck.schema_version));
  put_u32(archive, static_cast<std::uint32_t>(ck.tensors.size()));
  json listing = json::array();
  for (const auto& t : ck.tensors) {
    require(nn::numel(t.shape) == t.data.size(), ErrorKind::kShape, "checkpoint tensor " + t.name + " size mismatch");
    std::string payload;
    payload.reserve(t.data.size() * 4);
    for (float f : t.data) put_f32(payload, f);
    const auto crc = crc32_of(payload.data(), payload.size());
    put_u32(archive, static_cast<std::uint32_t>(t.name.size()));
    archive += t.name;
    put_u32(archive, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(archive, static_cast<std::uint32_t>(d));
    put_u64(archive, payload.size());
    put_u32(archive, crc);
    archive += payload;
    listing.push_back({{"name", t.name}, {"shape", t.shape}, {"crc32", crc}});
  }
  json m{{"format", "ftgan-checkpoint"},
         {"schema_version", ck.schema_version},
         {"stage", train::to_string(ck.stage)},
         {"iteration", ck.iteration},
         {"seed", ck.seed},
         {"arch", arch_to_json(ck.arch)},
         {"tensors", listing}};
  fs::create_directories(dir);
  write_file_atomic((fs::path(dir) / "tensors.bin").string(), archive);
  write_file_atomic((fs::path(dir) / "manifest.json").string(), m.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& dir) {
  const std::string mpath = (fs::path(dir) / "manifest.json").string();
  const std::string apath = (fs::path(dir) / "tensors.bin").string();
  json m;
  try {
    m = json::parse(read_file(mpath));
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, mpath + ": " + e.what());
  }
  Checkpoint ck;
  try {
    require(m.at("format").get<std::string>() == "ftgan-checkpoint", ErrorKind::kFormat,
            mpath + ": not a checkpoint manifest");
    ck.schema_version = m.at("schema_version").get<int>();
    require(ck.schema_version == kCheckpointVersion, ErrorKind::kVersion,
            mpath + ": schema version " + std::to_string(ck.schema_version) + ", expected " +
                std::to_string(kCheckpointVersion));
    ck.stage = train::stage_from_string(m.at("stage").get<std::string>());
    ck.iteration = m.at("iteration").get<int>();
    ck.seed = m.at("seed").get<std::uint64_t>();
    std::set<std::string> used;
    arch_from_json(m.at("arch"), ck.arch, used);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, mpath + ": " + e.what());
  }

  const std::string bytes = read_file(apath);
  Reader r(bytes, apath);
  require(r.bytes(4) == "FTCK", ErrorKind::kFormat, apath + ": not a tensor archive");
  const auto version = r.u32();
  require(version == static_cast<std::uint32_t>(kCheckpointVersion), ErrorKind::kVersion,
          apath + ": archive version " + std::to_string(version));
  const auto count = r.u32();
  const auto& listing = m.at("tensors");
  require(listing.is_array() && listing.size() == count, ErrorKind::kFormat,
          dir + ": manifest lists " + std::to_string(listing.size()) + " tensors, archive holds " +
              std::to_string(count));
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.bytes(r.u32());
    const auto rank = r.u32();
    require(rank <= 8, ErrorKind::kFormat, apath + ": implausible rank for " + t.name);
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(static_cast<int>(r.u32()));
    const auto nbytes = r.u64();
    const auto crc = r.u32();
    require(nbytes == nn::numel(t.shape) * 4, ErrorKind::kFormat, apath + ": size mismatch for " + t.name);
    r.need(nbytes);
    const std::size_t start = r.pos();
    require(crc32_of(bytes.data() + start, nbytes) == crc, ErrorKind::kIntegrity,
            apath + ": checksum mismatch in tensor " + t.name);
    t.data.resize(nn::numel(t.shape));
    for (float& f : t.data) f = r.f32();
    const auto& entry = listing[i];
    require(entry.value("name", "") == t.name && entry.value("shape", nn::Shape{}) == t.shape &&
                entry.value("crc32", std::uint32_t{0}) == crc,
            ErrorKind::kFormat, dir + ": manifest entry " + std::to_string(i) + " does not match archive");
    ck.tensors.push_back(std::move(t));
  }
  require(r.done(), ErrorKind::kFormat, apath + ": trailing bytes");
  return ck;
}

train::Models restore_models(const Checkpoint& ck, std::optional<train::Stage> expected) {
  if (expected)
    require(*expected == ck.stage, ErrorKind::kStageMismatch,
            std::string("checkpoint is from the ") + train::to_string(ck.stage) + " stage, expected " +
                train::to_string(*expected));
  train::Models m = train::Models::init(ck.stage, ck.arch, ck.seed);
  std::set<std::string> seen;
  for (const auto& t : ck.tensors) {
    const auto slash = t.name.find('/');
    require(slash != std::string::npos, ErrorKind::kUnknownTensor, "unknown tensor '" + t.name + "'");
    nn::ParameterSet* ps = network_by_name(m, t.name.substr(0, slash));
    const std::string pname = t.name.substr(slash + 1);
    require(ps && ps->contains(pname), ErrorKind::kUnknownTensor,
            "unknown tensor '" + t.name + "' for a " + train::to_string(ck.stage) + "-stage model");
    auto& p = ps->get(pname);
    require(p.value.shape() == t.shape, ErrorKind::kShape,
            "tensor " + t.name + " has shape " + nn::to_string(t.shape) + ", model expects " +
                nn::to_string(p.value.shape()));
    for (std::size_t i = 0; i < t.data.size(); ++i) p.value[i] = t.data[i];
    seen.insert(t.name);
  }
  for (const auto& [net, ps] : networks_of(m))
    for (const auto& p : *ps)
      require(seen.contains(net + "/" + p.name), ErrorKind::kFormat, "checkpoint lacks tensor " + net + "/" + p.name);
  return m;
}

train::Models combine_pretrained(const Checkpoint& flow, const Checkpoint& texture) {
  require(flow.stage == train::Stage::kFlow, ErrorKind::kStageMismatch,
          std::string("flow checkpoint is from the ") + train::to_string(flow.stage) + " stage");
  require(texture.stage == train::Stage::kTexture, ErrorKind::kStageMismatch,
          std::string("texture checkpoint is from the ") + train::to_string(texture.stage) + " stage");
  require(flow.arch == texture.arch, ErrorKind::kPrecondition, "pretrained checkpoints disagree on architecture");
  train::Models f = restore_models(flow);
  train::Models t = restore_models(texture);
  train::Models m;
  m.gen_flow = std::move(f.gen_flow);
  m.disc_flow = std::move(f.disc_flow);
  m.gen_tex = std::move(t.gen_tex);
  m.disc_tex = std::move(t.disc_tex);
  return m;
}

namespace {

// LZW stream using literal codes only. A clear code every kRun literals keeps the
// code width at 9 bits, which every decoder handles.
class GifBits {
 public:
  void put(unsigned code) {
    acc_ |= static_cast<std::uint32_t>(code) << nbits_;
    nbits_ += 9;
    while (nbits_ >= 8) {
      bytes_.push_back(static_cast<char>(acc_ & 0xff));
      acc_ >>= 8;
      nbits_ -= 8;
    }
  }
  std::string finish() {
    if (nbits_ > 0) bytes_.push_back(static_cast<char>(acc_ & 0xff));
    return bytes_;
  }

 private:
  std::string bytes_;
  std::uint32_t acc_ = 0;
  int nbits_ = 0;
};

void put_u16(std::string& out, unsigned v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

std::string encode_gif(const VideoTensor& video, double fps) {
  require_channels(video, 3, "gif");
  require(fps > 0, ErrorKind::kInvalidArgument, "fps must be positive");
  require(video.width() < 65536 && video.height() < 65536, ErrorKind::kShape, "gif frame too large");
  std::string out = "GIF89a";
  put_u16(out, video.width());
  put_u16(out, video.height());
  out.push_back(static_cast<char>(0xF7));  // global table, 256 entries
  out.push_back(0);
  out.push_back(0);
  for (int i = 0; i < 256; ++i) {
    const int r = i < 216 ? i / 36 : 0, g = i < 216 ? (i / 6) % 6 : 0, b = i < 216 ? i % 6 : 0;
    out.push_back(static_cast<char>(r * 51));
    out.push_back(static_cast<char>(g * 51));
    out.push_back(static_cast<char>(b * 51));
  }
  out += std::string("\x21\xFF\x0BNETSCAPE2.0\x03\x01\x00\x00\x00", 19);
  const int delay = std::max(1, static_cast<int>(std::lround(100.0 / fps)));
  constexpr int kRun = 250;
  for (int t = 0; t < video.frames(); ++t) {
    out += std::string("\x21\xF9\x04\x00", 4);
    put_u16(out, delay);
    out.push_back(0);
    out.push_back(0);
    out.push_back(0x2C);
    put_u16(out, 0);
    put_u16(out, 0);
    put_u16(out, video.width());
    put_u16(out, video.height());
    out.push_back(0);
    out.push_back(8);  // minimum code size
    GifBits bits;
    int run = 0;
    bits.put(256);
    for (int y = 0; y < video.height(); ++y)
      for (int x = 0; x < video.width(); ++x) {
        const int q[3] = {(to_byte(video.at(t, y, x, 0)) * 5 + 127) / 255, (to_byte(video.at(t, y, x, 1)) * 5 + 127) / 255,
                          (to_byte(video.at(t, y, x, 2)) * 5 + 127) / 255};
        if (run == kRun) {
          bits.put(256);
          run = 0;
        }
        bits.put(static_cast<unsigned>(q[0] * 36 + q[1] * 6 + q[2]));
        ++run;
      }
    bits.put(257);
    const std::string data = bits.finish();
    for (std::size_t i = 0; i < data.size(); i += 255) {
      const std::size_t n = std::min<std::size_t>(255, data.size() - i);
      out.push_back(static_cast<char>(n));
      out.append(data, i, n);
    }
    out.push_back(0);
  }
  out.push_back(0x3B);
  return out;
}

void export_gif(const VideoTensor& video, const std::string& path, double fps) {
  write_file_atomic(path, encode_gif(video, fps));
}

std::vector<int> panel_columns(int frames, int columns) {
  require(frames >= 1 && columns >= 1, ErrorKind::kInvalidArgument, "panel needs frames and columns");
  std::vector<int> out;
  for (int i = 0; i < columns; ++i) out.push_back(static_cast<int>(static_cast<long>(i) * frames / columns));
  return out;
}

Volume make_panel(const VideoTensor& video, const FlowVideo& flow, double max_magnitude) {
  require_channels(video, 3, "panel video");
  require(video.same_grid(flow), ErrorKind::kShape,
          "panel: video " + video.shape_string() + " vs flow " + flow.shape_string());
  const VideoTensor colour = flow_to_color(flow, max_magnitude);
  const auto cols = panel_columns(video.frames());
  const int h = video.height(), w = video.width();
  const int n = static_cast<int>(cols.size());
  Volume panel(1, 2 * h + kPanelGutter, n * w + (n - 1) * kPanelGutter, 3, -1.0f);
  for (int i = 0; i < n; ++i) {
    const int x0 = i * (w + kPanelGutter);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          panel.at(0, y, x0 + x, c) = colour.at(cols[i], y, x, c);
          panel.at(0, h + kPanelGutter + y, x0 + x, c) = video.at(cols[i], y, x, c);
        }
  }
  return panel;
}

std::string encode_png(const Volume& image) {
  require(image.frames() == 1 && image.channels() == 3, ErrorKind::kShape, "png needs a single RGB frame");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorKind::kIo, "png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  std::string out;
  std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::kIo, "png: encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t n) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), n);
      },
      [](png_structp) {});
  png_set_IHDR(png, info, image.width(), image.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c) row[x * 3 + c] = to_byte(image.at(0, y, x, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void export_panel(const VideoTensor& video, const FlowVideo& flow, const std::string& path, double max_magnitude) {
  write_file_atomic(path, encode_png(make_panel(video, flow, max_magnitude)));
}

}  // namespace ftgan::io
