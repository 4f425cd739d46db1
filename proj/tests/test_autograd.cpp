#include <cmath>
#include <random>

#include "doctest.h"
#include "ftgan/autograd.hpp"
#include "gradcheck.hpp"

using namespace ftgan;
using namespace ftgan::nn;
using ftgan::testing::random_tensor;
using ftgan::testing::rel_error;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Worst relative error over every input entry. Gradients below 1e-2 are
// compared absolutely since roundoff in the difference quotient dominates there.
double check_inputs(std::vector<Tensor> xs, const Builder& build, double eps = 1e-5) {
  auto eval = [&](const std::vector<Tensor>& vals) {
    Tape tape;
    std::vector<Var> vs;
    for (const auto& v : vals) vs.push_back(tape.constant(v));
    return build(tape, vs)->value[0];
  };
  Tape tape;
  std::vector<Var> vs;
  for (const auto& v : xs) vs.push_back(tape.input(v));
  tape.backward(build(tape, vs));
  double worst = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t k = 0; k < xs[i].size(); ++k) {
      const double saved = xs[i][k];
      xs[i][k] = saved + eps;
      const double up = eval(xs);
      xs[i][k] = saved - eps;
      const double down = eval(xs);
      xs[i][k] = saved;
      const double analytic = vs[i]->grad.empty() ? 0.0 : vs[i]->grad[k];
      worst = std::max(worst, rel_error(analytic, (up - down) / (2 * eps), 1e-2));
    }
  }
  return worst;
}

// Projects an output onto fixed random weights so every entry matters.
Builder projected(std::function<Var(const std::vector<Var>&)> op, std::uint64_t seed) {
  return [op, seed](Tape&, const std::vector<Var>& v) {
    Var y = op(v);
    std::mt19937_64 rng(seed);
    return weighted_sum(y, random_tensor(y->value.shape(), rng));
  };
}

double at5(const Tensor& t, int n, int c, int i, int j, int k) {
  const auto& s = t.shape();
  return t[(((static_cast<std::size_t>(n) * s[1] + c) * s[2] + i) * s[3] + j) * s[4] + k];
}

Tensor naive_conv(const Tensor& x, const Tensor& w, const ConvGeom& g) {
  const int N = x.dim(0), IC = x.dim(1), OC = w.dim(0);
  std::array<int, 3> in{x.dim(2), x.dim(3), x.dim(4)}, out{};
  for (int a = 0; a < 3; ++a) out[a] = (in[a] + 2 * g.pad[a] - g.kernel[a]) / g.stride[a] + 1;
  Tensor y({N, OC, out[0], out[1], out[2]});
  std::size_t idx = 0;
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < OC; ++o)
      for (int t = 0; t < out[0]; ++t)
        for (int h = 0; h < out[1]; ++h)
          for (int q = 0; q < out[2]; ++q, ++idx) {
            double acc = 0;
            for (int c = 0; c < IC; ++c)
              for (int a = 0; a < g.kernel[0]; ++a)
                for (int b = 0; b < g.kernel[1]; ++b)
                  for (int d = 0; d < g.kernel[2]; ++d) {
                    const int ti = t * g.stride[0] - g.pad[0] + a;
                    const int hi = h * g.stride[1] - g.pad[1] + b;
                    const int wi = q * g.stride[2] - g.pad[2] + d;
                    if (ti < 0 || hi < 0 || wi < 0 || ti >= in[0] || hi >= in[1] || wi >= in[2]) continue;
                    acc += at5(x, n, c, ti, hi, wi) * at5(w, o, c, a, b, d);
                  }
            y[idx] = acc;
          }
  return y;
}

Tensor naive_conv_transpose(const Tensor& x, const Tensor& w, const ConvGeom& g) {
  const int N = x.dim(0), IC = x.dim(1), OC = w.dim(1);
  std::array<int, 3> in{x.dim(2), x.dim(3), x.dim(4)}, out{};
  for (int a = 0; a < 3; ++a) out[a] = (in[a] - 1) * g.stride[a] - 2 * g.pad[a] + g.kernel[a];
  Tensor y({N, OC, out[0], out[1], out[2]});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < IC; ++c)
      for (int t = 0; t < in[0]; ++t)
        for (int h = 0; h < in[1]; ++h)
          for (int q = 0; q < in[2]; ++q)
            for (int o = 0; o < OC; ++o)
              for (int a = 0; a < g.kernel[0]; ++a)
                for (int b = 0; b < g.kernel[1]; ++b)
                  for (int d = 0; d < g.kernel[2]; ++d) {
                    const int to = t * g.stride[0] - g.pad[0] + a;
                    const int ho = h * g.stride[1] - g.pad[1] + b;
                    const int wo = q * g.stride[2] - g.pad[2] + d;
                    if (to < 0 || ho < 0 || wo < 0 || to >= out[0] || ho >= out[1] || wo >= out[2]) continue;
                    y[(((static_cast<std::size_t>(n) * OC + o) * out[0] + to) * out[1] + ho) * out[2] + wo] +=
                        at5(x, n, c, t, h, q) * at5(w, c, o, a, b, d);
                  }
  return y;
}

const ConvGeom kDown{};
const ConvGeom kTemporalFlat{{3, 4, 4}, {1, 2, 2}, {1, 1, 1}};
const ConvGeom kSpatialOnly{{1, 4, 4}, {1, 2, 2}, {0, 1, 1}};

}  // namespace

TEST_CASE("1x1 convolution chain rule by hand") {
  // y = w * x + b at a single voxel; L = 3 y.
  Tape tape;
  Var x = tape.input(Tensor({1, 1, 1, 1, 1}, std::vector<double>{2.0}));
  Var w = tape.input(Tensor({1, 1, 1, 1, 1}, std::vector<double>{-1.5}));
  Var b = tape.input(Tensor({1}, std::vector<double>{0.25}));
  Var y = conv3d(x, w, b, ConvGeom{{1, 1, 1}, {1, 1, 1}, {0, 0, 0}});
  CHECK(y->value[0] == -2.75);
  tape.backward(weighted_sum(y, Tensor({1, 1, 1, 1, 1}, 3.0)));
  CHECK(x->grad[0] == -4.5);
  CHECK(w->grad[0] == 6.0);
  CHECK(b->grad[0] == 3.0);
}

TEST_CASE("zero upstream gradient yields zero gradients") {
  std::mt19937_64 rng(1);
  Tape tape;
  Var x = tape.input(random_tensor({2, 3, 4, 4, 4}, rng));
  Var w = tape.input(random_tensor({5, 3, 4, 4, 4}, rng));
  Var y = conv3d(x, w, nullptr, kDown);
  tape.backward(weighted_sum(y, Tensor(y->value.shape(), 0.0)));
  for (double g : x->grad.data()) CHECK(g == 0.0);
  for (double g : w->grad.data()) CHECK(g == 0.0);
}

TEST_CASE("convolutions match direct loop oracles") {
  std::mt19937_64 rng(2);
  for (const ConvGeom& g : {kDown, kTemporalFlat, kSpatialOnly}) {
    Tape tape;
    const Tensor x = random_tensor({2, 3, 4, 6, 8}, rng);
    const Tensor w = random_tensor({4, 3, g.kernel[0], g.kernel[1], g.kernel[2]}, rng);
    const Tensor y = conv3d(tape.constant(x), tape.constant(w), nullptr, g)->value;
    const Tensor ref = naive_conv(x, w, g);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    const Tensor xt = random_tensor({2, 3, 2, 3, 4}, rng);
    const Tensor wt = random_tensor({3, 4, g.kernel[0], g.kernel[1], g.kernel[2]}, rng);
    const Tensor yt = conv_transpose3d(tape.constant(xt), tape.constant(wt), nullptr, g)->value;
    const Tensor reft = naive_conv_transpose(xt, wt, g);
    REQUIRE(yt.shape() == reft.shape());
    for (std::size_t i = 0; i < yt.size(); ++i) CHECK(yt[i] == doctest::Approx(reft[i]).epsilon(1e-12));
  }
  CHECK(conv_out_size(8, 4, 2, 1) == 4);
  CHECK(conv_transpose_out_size(4, 4, 2, 1) == 8);
}

TEST_CASE("finite-difference checks of individual operations") {
  std::mt19937_64 rng(3);
  const double tol = 1e-6;
  for (const ConvGeom& g : {kDown, kTemporalFlat, kSpatialOnly}) {
    CHECK(check_inputs({random_tensor({2, 2, 4, 4, 4}, rng), random_tensor({3, 2, g.kernel[0], 4, 4}, rng),
                        random_tensor({3}, rng)},
                       projected([&](auto& v) { return conv3d(v[0], v[1], v[2], g); }, 1)) < tol);
    CHECK(check_inputs({random_tensor({2, 2, 2, 2, 2}, rng), random_tensor({2, 3, g.kernel[0], 4, 4}, rng),
                        random_tensor({3}, rng)},
                       projected([&](auto& v) { return conv_transpose3d(v[0], v[1], v[2], g); }, 2)) < tol);
  }
  CHECK(check_inputs({random_tensor({3, 5}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)},
                     projected([](auto& v) { return dense(v[0], v[1], v[2]); }, 3)) < tol);

  Parameter rm{"rm", Tensor({3}, 0.0), {}, false}, rv{"rv", Tensor({3}, 1.0), {}, false};
  for (bool training : {true, false}) {
    CHECK(check_inputs({random_tensor({2, 3, 2, 2, 2}, rng), random_tensor({3}, rng), random_tensor({3}, rng)},
                       projected(
                           [&](auto& v) {
                             return batch_norm(v[0], v[1], v[2], BatchNormState{&rm, &rv}, training);
                           },
                           4)) < tol);
  }

  // Pointwise nonlinearities: inputs kept away from the kinks.
  Tensor away = random_tensor({2, 3, 2, 2, 2}, rng);
  for (double& v : away.data()) v += v >= 0 ? 0.1 : -0.1;
  CHECK(check_inputs({away}, projected([](auto& v) { return relu(v[0]); }, 5)) < tol);
  CHECK(check_inputs({away}, projected([](auto& v) { return leaky_relu(v[0], 0.2); }, 6)) < tol);
  CHECK(check_inputs({away}, projected([](auto& v) { return tanh(v[0]); }, 7)) < tol);
  CHECK(check_inputs({away}, projected([](auto& v) { return sigmoid(v[0]); }, 8)) < tol);
  CHECK(check_inputs({away}, [](Tape&, auto& v) { return mean_abs(v[0]); }) < tol);
  CHECK(check_inputs({away}, [](Tape&, auto& v) { return mean(scale(v[0], 3.0)); }) < tol);

  const Tensor a = random_tensor({2, 3, 2, 2, 2}, rng), b = random_tensor({2, 2, 2, 2, 2}, rng);
  CHECK(check_inputs({a, b}, projected([](auto& v) { return concat_channels({v[0], v[1]}); }, 9)) < tol);
  CHECK(check_inputs({a, a}, projected([](auto& v) { return add(v[0], v[1]); }, 10)) < tol);
  CHECK(check_inputs({a}, projected([](auto& v) { return flatten(v[0]); }, 11)) < tol);
  CHECK(check_inputs({a}, projected([](auto& v) { return reshape(v[0], {2, 3, 8}); }, 12)) < tol);
  CHECK(check_inputs({random_tensor({2, 4}, rng)},
                     projected([](auto& v) { return broadcast_latent(v[0], 2, 3, 2); }, 13)) < tol);
  CHECK(check_inputs({random_tensor({2, 3, 1, 2, 2}, rng)},
                     projected([](auto& v) { return repeat_time(v[0], 4); }, 14)) < tol);
  const Tensor m = random_tensor({2, 1, 2, 2, 2}, rng);
  CHECK(check_inputs({m, a}, projected([](auto& v) { return mask_mul(v[0], v[1]); }, 15)) < tol);
  CHECK(check_inputs({m, a, random_tensor({2, 3, 2, 2, 2}, rng)},
                     projected([](auto& v) { return composite(v[0], v[1], v[2]); }, 16)) < tol);

  Tensor probs({4, 1}, std::vector<double>{0.2, 0.45, 0.7, 0.9});
  Tensor probs2({4, 1}, std::vector<double>{0.6, 0.3, 0.15, 0.5});
  CHECK(check_inputs({probs, probs2}, [](Tape&, auto& v) { return gan_discriminator_loss(v[0], v[1]); }) < tol);
  CHECK(check_inputs({probs2}, [](Tape&, auto& v) { return gan_generator_loss(v[0]); }) < tol);
}

TEST_CASE("parameter leaves accumulate into Parameter::grad") {
  Parameter w{"w", Tensor({1, 2}, std::vector<double>{1.0, -2.0}), {}, true};
  Parameter frozen{"f", Tensor({1}, std::vector<double>{0.5}), {}, false};
  for (int rep = 0; rep < 2; ++rep) {
    Tape tape;
    Var x = tape.constant(Tensor({1, 2}, std::vector<double>{3.0, 4.0}));
    tape.backward(mean(dense(x, tape.param(w), tape.param(frozen))));
  }
  CHECK(w.grad[0] == 6.0);
  CHECK(w.grad[1] == 8.0);
  CHECK(frozen.grad.empty());
}

TEST_CASE("backward requires a scalar root on the same tape") {
  Tape a, b;
  Var x = a.input(Tensor({2}, 1.0));
  CHECK_THROWS_AS(b.backward(mean(x)), Error);
  CHECK_THROWS_AS(a.backward(x), Error);
}

TEST_CASE("backward_from chains two tapes") {
  std::mt19937_64 rng(4);
  const Tensor x0 = random_tensor({2, 3}, rng), w0 = random_tensor({2, 3}, rng);
  Tape first;
  Var x = first.input(x0);
  Var y = tanh(dense(x, first.constant(w0), nullptr));
  Tape second;
  Var y2 = second.input(y->value);
  second.backward(mean(scale(y2, 2.0)));
  first.backward_from(y, y2->grad);

  Tape single;
  Var xs = single.input(x0);
  single.backward(mean(scale(tanh(dense(xs, single.constant(w0), nullptr)), 2.0)));
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(x->grad[i] == doctest::Approx(xs->grad[i]).epsilon(1e-14));
}

TEST_CASE("GAN losses clamp scores and stop gradients there") {
  Tape tape;
  Var fake = tape.input(Tensor({2, 1}, std::vector<double>{0.0, 0.5}));
  Var loss = gan_generator_loss(fake);
  CHECK(loss->value[0] == doctest::Approx((-std::log(1e-7) + std::log(2.0)) / 2).epsilon(1e-12));
  tape.backward(loss);
  CHECK(fake->grad[0] == 0.0);
  CHECK(fake->grad[1] == doctest::Approx(-1.0).epsilon(1e-12));
}
