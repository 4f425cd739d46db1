#pragma once

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "ftgan/params.hpp"
#include "ftgan/tensor.hpp"

namespace ftgan::nn {

class Tape;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool needs_grad = false;
  Parameter* param = nullptr;
  std::function<void(Node&)> backward;
  Tape* tape = nullptr;
  std::size_t id = 0;

  Tensor& grad_buffer();
};

// Handle to a node owned by a Tape. Valid for the tape's lifetime.
using Var = Node*;

// Reverse-mode recorder. Operations append nodes in execution order; backward
// walks them in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Input whose gradient should be retained (read via Var->grad after backward).
  Var input(Tensor value);
  // Leaf bound to a parameter; backward accumulates into param.grad.
  Var param(Parameter& p);

  Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

  // Seeds d(root)/d(root) = 1 for a scalar root and propagates. Throws
  // kPrecondition if the root was not recorded on this tape.
  void backward(Var root, double seed = 1.0);
  // Seeds an explicit output gradient (for chaining separately recorded graphs).
  void backward_from(Var root, const Tensor& seed);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  void run(std::size_t root_id);
  std::vector<std::unique_ptr<Node>> nodes_;
};

// Convolution geometry per (t, h, w) axis.
struct ConvGeom {
  std::array<int, 3> kernel{4, 4, 4};
  std::array<int, 3> stride{2, 2, 2};
  std::array<int, 3> pad{1, 1, 1};
};

int conv_out_size(int in, int kernel, int stride, int pad);
int conv_transpose_out_size(int in, int kernel, int stride, int pad);

// x [N, in], w [out, in], b [out] or nullptr.
Var dense(Var x, Var w, Var b);
// x [N, IC, T, H, W], w [OC, IC, KT, KH, KW], b [OC] or nullptr.
Var conv3d(Var x, Var w, Var b, const ConvGeom& g);
// x [N, IC, T, H, W], w [IC, OC, KT, KH, KW], b [OC] or nullptr.
Var conv_transpose3d(Var x, Var w, Var b, const ConvGeom& g);

struct BatchNormState {
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};
// Normalizes axis 1 over all other axes. Training mode uses batch statistics
// and updates the running estimates; inference mode uses the running estimates.
Var batch_norm(Var x, Var gamma, Var beta, const BatchNormState& state, bool training);

Var relu(Var x);
Var leaky_relu(Var x, double slope);
Var tanh(Var x);
Var sigmoid(Var x);
Var scale(Var x, double s);
Var add(Var a, Var b);
Var reshape(Var x, Shape s);
Var concat_channels(const std::vector<Var>& xs);
// z [N, L] -> [N, L, T, H, W]
Var broadcast_latent(Var z, int t, int h, int w);
// x [N, C, 1, H, W] -> [N, C, T, H, W]
Var repeat_time(Var x, int t);
// mask [N, 1, ...] times x [N, C, ...], broadcasting the mask over channels.
Var mask_mul(Var mask, Var x);
// mask * fg + (1 - mask) * bg with the mask broadcast over channels.
Var composite(Var mask, Var fg, Var bg);
Var mean(Var x);
Var mean_abs(Var x);
// sum(x * weights) with constant weights of x's shape.
Var weighted_sum(Var x, const Tensor& weights);
// x [N, ...] -> [N, prod(...)]
Var flatten(Var x);

// Clamp bound for probabilities fed to log.
inline constexpr double kLogEps = 1e-7;
// mean over batch of -(log d_real + log(1 - d_fake)); scores are clamped to
// [eps, 1 - eps].
Var gan_discriminator_loss(Var d_real, Var d_fake);
// mean over batch of -log d_fake.
Var gan_generator_loss(Var d_fake);

}  // namespace ftgan::nn
