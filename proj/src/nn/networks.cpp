#include "ftgan/networks.hpp"

#include <algorithm>
#include <cmath>

namespace ftgan::nn {

namespace {

std::string level_name(const char* prefix, int level) { return prefix + std::to_string(level); }

void add_bn(ParameterSet& ps, const std::string& prefix, int channels) {
  ps.add(prefix + ".gamma", {channels}, true, 1.0);
  ps.add(prefix + ".beta", {channels}, true, 0.0);
  ps.add(prefix + ".running_mean", {channels}, false, 0.0);
  ps.add(prefix + ".running_var", {channels}, false, 1.0);
}

Shape kernel_shape(int c_first, int c_second, const ConvGeom& g) {
  return {c_first, c_second, g.kernel[0], g.kernel[1], g.kernel[2]};
}

ConvGeom spatial_geom() {
  ConvGeom g;
  g.kernel = {1, 4, 4};
  g.stride = {1, 2, 2};
  g.pad = {0, 1, 1};
  return g;
}

struct Binder {
  Tape& tape;
  ParameterSet& ps;
  Var operator()(const std::string& name) const { return tape.param(ps.get(name)); }

  Var bn(const std::string& prefix, Var x, bool training) const {
    BatchNormState st;
    st.running_mean = &ps.get(prefix + ".running_mean");
    st.running_var = &ps.get(prefix + ".running_var");
    return batch_norm(x, (*this)(prefix + ".gamma"), (*this)(prefix + ".beta"), st, training);
  }
};

void build_discriminator(ParameterSet& ps, const ArchConfig& a, int in_channels, const std::string& prefix) {
  int c_prev = in_channels;
  for (int l = 1; l <= a.n_levels; ++l) {
    const std::string name = prefix + level_name("down", l);
    ps.add(name + ".weight", kernel_shape(a.channels(l), c_prev, a.level_geom(l)));
    if (l == 1)
      ps.add(name + ".bias", {a.channels(l)});
    else
      add_bn(ps, name + ".bn", a.channels(l));
    c_prev = a.channels(l);
  }
}

// Down-sampling stack: conv, normalization on every layer but the first,
// leaky rectifier everywhere. Returns activations at levels 1..L.
std::vector<Var> run_down_stack(const Binder& p, const ArchConfig& a, const std::string& prefix, Var x,
                                bool training) {
  std::vector<Var> levels;
  for (int l = 1; l <= a.n_levels; ++l) {
    const std::string name = prefix + level_name("down", l);
    if (l == 1) {
      x = conv3d(x, p(name + ".weight"), p(name + ".bias"), a.level_geom(l));
    } else {
      x = conv3d(x, p(name + ".weight"), nullptr, a.level_geom(l));
      x = p.bn(name + ".bn", x, training);
    }
    x = leaky_relu(x, a.leaky_slope);
    levels.push_back(x);
  }
  return levels;
}

int texture_decoder_in_channels(const ArchConfig& a, int level) {
  if (level == a.n_levels) return a.channels(level) + a.latent_dim;
  return a.channels(level) + (a.has_skip(level) ? a.channels(level) : 0);
}

void require_input(const Tensor& t, int channels, const ArchConfig& a, const char* what) {
  const bool ok = t.rank() == 5 && t.dim(1) == channels && t.dim(2) == a.frames && t.dim(3) == a.height &&
                  t.dim(4) == a.width;
  require(ok, ErrorKind::kShape,
          std::string(what) + ": expected [N, " + std::to_string(channels) + ", " + std::to_string(a.frames) +
              ", " + std::to_string(a.height) + ", " + std::to_string(a.width) + "], got " +
              to_string(t.shape()));
}

void require_latent(const Tensor& z, const ArchConfig& a) {
  require(z.rank() == 2 && z.dim(1) == a.latent_dim, ErrorKind::kShape,
          "latent must be [N, " + std::to_string(a.latent_dim) + "], got " + to_string(z.shape()));
}

}  // namespace

ArchConfig ArchConfig::desk() { return ArchConfig{}; }

ArchConfig ArchConfig::micro() {
  ArchConfig a;
  a.frames = 8;
  a.height = 16;
  a.width = 16;
  a.base_channels = 8;
  a.n_levels = 2;
  a.flow_scale = kDefaultFlowScale / 4.0;
  return a;
}

void ArchConfig::validate() const {
  require(latent_dim == kLatentDim, ErrorKind::kInvalidArgument,
          "latent_dim must be " + std::to_string(kLatentDim));
  require(n_levels >= 1 && n_levels <= 8, ErrorKind::kInvalidArgument, "n_levels must be in [1, 8]");
  require(frames >= 1 && height >= 1 && width >= 1, ErrorKind::kInvalidArgument, "video shape must be positive");
  require(height % (1 << n_levels) == 0 && width % (1 << n_levels) == 0, ErrorKind::kInvalidArgument,
          "spatial size must be divisible by 2^n_levels");
  int f = frames;
  for (int l = 1; l <= n_levels; ++l) {
    if (f > 2) {
      require(f % 2 == 0, ErrorKind::kInvalidArgument, "frame count must halve evenly down to 2");
      f /= 2;
    }
  }
  require(base_channels >= 1 && max_channels >= base_channels, ErrorKind::kInvalidArgument,
          "channel widths must be positive");
  require(flow_scale > 0, ErrorKind::kInvalidArgument, "flow_scale must be positive");
  require(leaky_slope >= 0 && leaky_slope < 1, ErrorKind::kInvalidArgument, "leaky_slope must be in [0, 1)");
  for (int s : skip_levels)
    require(s >= 1 && s < n_levels, ErrorKind::kInvalidArgument, "skip level outside 1..n_levels-1");
}

int ArchConfig::channels(int level) const {
  long c = base_channels;
  for (int l = 1; l < level; ++l) c = std::min<long>(c * 2, max_channels);
  return static_cast<int>(c);
}

int ArchConfig::frames_at(int level) const {
  int f = frames;
  for (int l = 1; l <= level; ++l)
    if (f > 2) f /= 2;
  return f;
}

int ArchConfig::feature_dim() const {
  return channels(n_levels) * frames_at(n_levels) * height_at(n_levels) * width_at(n_levels);
}

std::vector<int> ArchConfig::effective_skips() const {
  if (!skip_levels.empty()) return skip_levels;
  std::vector<int> out;
  for (int l = 1; l < n_levels; ++l) out.push_back(l);
  return out;
}

bool ArchConfig::has_skip(int level) const {
  const auto s = effective_skips();
  return std::find(s.begin(), s.end(), level) != s.end();
}

ConvGeom ArchConfig::level_geom(int level) const {
  ConvGeom g;
  if (frames_at(level) < frames_at(level - 1)) {
    g.kernel[0] = 4;
    g.stride[0] = 2;
  } else {
    g.kernel[0] = 3;
    g.stride[0] = 1;
  }
  g.pad[0] = 1;
  return g;
}

LatentVector::LatentVector(std::vector<double> values) : values_(std::move(values)) {
  require(values_.size() == static_cast<std::size_t>(kLatentDim), ErrorKind::kShape,
          "latent vector must have length " + std::to_string(kLatentDim) + ", got " +
              std::to_string(values_.size()));
}

LatentVector LatentVector::sample(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(kLatentDim);
  for (auto& x : v) x = nd(rng);
  return LatentVector(std::move(v));
}

const char* to_string(NetworkKind k) {
  switch (k) {
    case NetworkKind::kFlowGenerator: return "gen_flow";
    case NetworkKind::kTextureGenerator: return "gen_tex";
    case NetworkKind::kFlowDiscriminator: return "disc_flow";
    case NetworkKind::kTextureDiscriminator: return "disc_tex";
  }
  return "?";
}

ParameterSet init_params(NetworkKind kind, const ArchConfig& a, std::uint64_t seed) {
  a.validate();
  ParameterSet ps;
  const int L = a.n_levels;
  switch (kind) {
    case NetworkKind::kFlowGenerator: {
      ps.add("project.weight", {a.feature_dim(), a.latent_dim});
      add_bn(ps, "project.bn", a.channels(L));
      for (int l = L; l >= 2; --l) {
        ps.add(level_name("up", l) + ".weight", kernel_shape(a.channels(l), a.channels(l - 1), a.level_geom(l)));
        add_bn(ps, level_name("up", l) + ".bn", a.channels(l - 1));
      }
      ps.add("flow_head.weight", kernel_shape(a.channels(1), 2, a.level_geom(1)));
      ps.add("flow_head.bias", {2});
      ps.add("mask_head.weight", kernel_shape(a.channels(1), 1, a.level_geom(1)));
      ps.add("mask_head.bias", {1});
      break;
    }
    case NetworkKind::kTextureGenerator: {
      build_discriminator(ps, a, 2, "enc.");
      for (int l = L; l >= 2; --l) {
        const std::string name = level_name("dec", l);
        ps.add(name + ".weight",
               kernel_shape(texture_decoder_in_channels(a, l), a.channels(l - 1), a.level_geom(l)));
        add_bn(ps, name + ".bn", a.channels(l - 1));
      }
      const int head_in = texture_decoder_in_channels(a, 1);
      ps.add("fg_head.weight", kernel_shape(head_in, 3, a.level_geom(1)));
      ps.add("fg_head.bias", {3});
      ps.add("mask_head.weight", kernel_shape(head_in, 1, a.level_geom(1)));
      ps.add("mask_head.bias", {1});
      const auto sg = spatial_geom();
      ps.add("bg.project.weight", {a.channels(L) * a.height_at(L) * a.width_at(L), a.latent_dim});
      add_bn(ps, "bg.project.bn", a.channels(L));
      for (int l = L; l >= 2; --l) {
        ps.add("bg." + level_name("up", l) + ".weight", kernel_shape(a.channels(l), a.channels(l - 1), sg));
        add_bn(ps, "bg." + level_name("up", l) + ".bn", a.channels(l - 1));
      }
      ps.add("bg.head.weight", kernel_shape(a.channels(1), 3, sg));
      ps.add("bg.head.bias", {3});
      break;
    }
    case NetworkKind::kFlowDiscriminator:
    case NetworkKind::kTextureDiscriminator: {
      build_discriminator(ps, a, kind == NetworkKind::kFlowDiscriminator ? 2 : 5, "");
      ps.add("score.weight", {1, a.feature_dim()});
      ps.add("score.bias", {1});
      break;
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.02);
  for (auto& p : ps) {
    if (p.name.ends_with(".weight"))
      for (auto& v : p.value.data()) v = nd(rng);
  }
  return ps;
}

FlowGenerator::FlowGenerator(ArchConfig arch, std::uint64_t seed)
    : arch_(std::move(arch)), params_(init_params(NetworkKind::kFlowGenerator, arch_, seed)) {}

FlowGenOutput FlowGenerator::forward(Tape& tape, Var z, bool training) {
  const ArchConfig& a = arch_;
  require_latent(z->value, a);
  const Binder p{tape, params_};
  const int L = a.n_levels;
  const int n = z->value.dim(0);
  Var h = dense(z, p("project.weight"), nullptr);
  h = reshape(h, {n, a.channels(L), a.frames_at(L), a.height_at(L), a.width_at(L)});
  h = relu(p.bn("project.bn", h, training));
  for (int l = L; l >= 2; --l) {
    const std::string name = level_name("up", l);
    h = conv_transpose3d(h, p(name + ".weight"), nullptr, a.level_geom(l));
    h = relu(p.bn(name + ".bn", h, training));
  }
  FlowGenOutput out;
  out.foreground = tanh(conv_transpose3d(h, p("flow_head.weight"), p("flow_head.bias"), a.level_geom(1)));
  out.mask = sigmoid(conv_transpose3d(h, p("mask_head.weight"), p("mask_head.bias"), a.level_geom(1)));
  out.flow = mask_mul(out.mask, out.foreground);
  return out;
}

TextureGenerator::TextureGenerator(ArchConfig arch, std::uint64_t seed)
    : arch_(std::move(arch)), params_(init_params(NetworkKind::kTextureGenerator, arch_, seed)) {}

TextureGenOutput TextureGenerator::forward(Tape& tape, Var z, Var flow, bool training) {
  const ArchConfig& a = arch_;
  require_latent(z->value, a);
  require_input(flow->value, 2, a, "texture generator condition");
  require(z->value.dim(0) == flow->value.dim(0), ErrorKind::kShape, "texture generator: batch mismatch");
  const Binder p{tape, params_};
  const int L = a.n_levels;
  const int n = z->value.dim(0);

  // Foreground: spatiotemporal U-net over the flow, latent joined at the bottleneck.
  const auto enc = run_down_stack(p, a, "enc.", flow, training);
  Var h = concat_channels({enc[L - 1], broadcast_latent(z, a.frames_at(L), a.height_at(L), a.width_at(L))});
  for (int l = L; l >= 2; --l) {
    const std::string name = level_name("dec", l);
    h = conv_transpose3d(h, p(name + ".weight"), nullptr, a.level_geom(l));
    h = relu(p.bn(name + ".bn", h, training));
    if (a.has_skip(l - 1)) h = concat_channels({h, enc[l - 2]});
  }
  TextureGenOutput out;
  out.foreground = tanh(conv_transpose3d(h, p("fg_head.weight"), p("fg_head.bias"), a.level_geom(1)));
  out.mask = sigmoid(conv_transpose3d(h, p("mask_head.weight"), p("mask_head.bias"), a.level_geom(1)));

  // Background: spatial-only stack from the latent, replicated over time.
  const auto sg = spatial_geom();
  Var b = dense(z, p("bg.project.weight"), nullptr);
  b = reshape(b, {n, a.channels(L), 1, a.height_at(L), a.width_at(L)});
  b = relu(p.bn("bg.project.bn", b, training));
  for (int l = L; l >= 2; --l) {
    const std::string name = "bg." + level_name("up", l);
    b = conv_transpose3d(b, p(name + ".weight"), nullptr, sg);
    b = relu(p.bn(name + ".bn", b, training));
  }
  out.background = tanh(conv_transpose3d(b, p("bg.head.weight"), p("bg.head.bias"), sg));
  out.video = composite(out.mask, out.foreground, repeat_time(out.background, a.frames));
  return out;
}

Discriminator::Discriminator(NetworkKind kind, ArchConfig arch, std::uint64_t seed)
    : kind_(kind), arch_(std::move(arch)), params_(init_params(kind, arch_, seed)) {
  require(kind == NetworkKind::kFlowDiscriminator || kind == NetworkKind::kTextureDiscriminator,
          ErrorKind::kInvalidArgument, "Discriminator requires a discriminator kind");
}

DiscOutput Discriminator::forward(Tape& tape, Var input, bool training) {
  require_input(input->value, in_channels(), arch_, to_string(kind_));
  const Binder p{tape, params_};
  const auto levels = run_down_stack(p, arch_, "", input, training);
  DiscOutput out;
  out.features = flatten(levels.back());
  out.score = sigmoid(dense(out.features, p("score.weight"), p("score.bias")));
  return out;
}

DiscOutput Discriminator::forward(Tape& tape, Var video, Var flow, bool training) {
  require(kind_ == NetworkKind::kTextureDiscriminator, ErrorKind::kInvalidArgument,
          "video+flow input requires the texture discriminator");
  require_input(video->value, 3, arch_, "texture discriminator video");
  require_input(flow->value, 2, arch_, "texture discriminator flow");
  return forward(tape, concat_channels({video, flow}), training);
}

Tensor to_network(const std::vector<const Volume*>& batch, double scale) {
  require(!batch.empty(), ErrorKind::kInvalidArgument, "to_network: empty batch");
  const Volume& v0 = *batch[0];
  const int n = static_cast<int>(batch.size());
  const int T = v0.frames(), H = v0.height(), W = v0.width(), C = v0.channels();
  Tensor out({n, C, T, H, W});
  const double inv = 1.0 / scale;
  const std::size_t plane = static_cast<std::size_t>(T) * H * W;
  for (int i = 0; i < n; ++i) {
    const Volume& v = *batch[i];
    require(v.same_grid(v0) && v.channels() == C, ErrorKind::kShape,
            "to_network: batch element " + v.shape_string() + " vs " + v0.shape_string());
    const auto src = v.data();
    for (std::size_t p = 0; p < plane; ++p)
      for (int c = 0; c < C; ++c)
        out[(static_cast<std::size_t>(i) * C + c) * plane + p] = src[p * C + c] * inv;
  }
  return out;
}

Tensor to_network(const Volume& v, double scale) { return to_network(std::vector<const Volume*>{&v}, scale); }

Volume from_network(const Tensor& t, int index, double scale) {
  require(t.rank() == 5 && index >= 0 && index < t.dim(0), ErrorKind::kShape,
          "from_network: bad tensor " + to_string(t.shape()));
  const int C = t.dim(1), T = t.dim(2), H = t.dim(3), W = t.dim(4);
  Volume out(T, H, W, C);
  const std::size_t plane = static_cast<std::size_t>(T) * H * W;
  auto dst = out.data();
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < C; ++c)
      dst[p * C + c] = static_cast<float>(t[(static_cast<std::size_t>(index) * C + c) * plane + p] * scale);
  return out;
}

Tensor latent_batch(const std::vector<LatentVector>& zs) {
  require(!zs.empty(), ErrorKind::kInvalidArgument, "latent_batch: empty batch");
  Tensor out({static_cast<int>(zs.size()), kLatentDim});
  for (std::size_t i = 0; i < zs.size(); ++i)
    std::copy(zs[i].values().begin(), zs[i].values().end(), out.ptr() + i * kLatentDim);
  return out;
}

FlowGenResult flow_generator_forward(const LatentVector& z, FlowGenerator& net) {
  Tape tape;
  const auto out = net.forward(tape, tape.constant(latent_batch({z})), false);
  return {from_network(out.flow->value, 0, net.arch().flow_scale), from_network(out.mask->value, 0)};
}

TextureGenResult texture_generator_forward(const LatentVector& z, const FlowVideo& condition_flow,
                                           TextureGenerator& net) {
  require_channels(condition_flow, 2, "texture generator condition");
  Tape tape;
  const auto out = net.forward(tape, tape.constant(latent_batch({z})),
                               tape.constant(to_network(condition_flow, net.arch().flow_scale)), false);
  return {from_network(out.video->value, 0), from_network(out.mask->value, 0),
          from_network(out.background->value, 0), from_network(out.foreground->value, 0)};
}

namespace {

DiscriminatorResult to_result(const DiscOutput& o) {
  DiscriminatorResult r;
  r.score = o.score->value[0];
  r.features.assign(o.features->value.data().begin(), o.features->value.data().end());
  return r;
}

}  // namespace

DiscriminatorResult flow_discriminator_forward(const FlowVideo& flow, Discriminator& net) {
  require_channels(flow, 2, "flow discriminator input");
  Tape tape;
  return to_result(net.forward(tape, tape.constant(to_network(flow, net.arch().flow_scale)), false));
}

DiscriminatorResult texture_discriminator_forward(const VideoTensor& video, const FlowVideo& flow,
                                                  Discriminator& net) {
  require_channels(video, 3, "texture discriminator video");
  require_channels(flow, 2, "texture discriminator flow");
  Tape tape;
  return to_result(net.forward(tape, tape.constant(to_network(video)),
                               tape.constant(to_network(flow, net.arch().flow_scale)), false));
}

}  // namespace ftgan::nn
