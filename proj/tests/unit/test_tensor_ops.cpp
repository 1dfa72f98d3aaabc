#include <cmath>
#include <cstring>

#include "doctest.h"
#include "hfn/ops.hpp"
#include "oracles.hpp"

using namespace hfn;

TEST_CASE("conv2d: all-ones 3x3 over all-ones 3x3 input, pad 1") {
  Tensor<double> in({1, 1, 3, 3}, 1.0);
  Tensor<double> w({1, 1, 3, 3}, 1.0);
  auto out = conv2d(in, w, 1, 1);
  CHECK(out.shape == std::vector<int>{1, 1, 3, 3});
  CHECK(out.at4(0, 0, 1, 1) == doctest::Approx(9.0));
  CHECK(out.at4(0, 0, 0, 0) == doctest::Approx(4.0));
  CHECK(out.at4(0, 0, 0, 1) == doctest::Approx(6.0));
}

TEST_CASE("conv2d: identity kernel reproduces the input") {
  auto in = oracle::random_tensor<double>({2, 3, 6, 6}, 11);
  Tensor<double> w({3, 3, 3, 3}, 0.0);
  for (int c = 0; c < 3; ++c) w.at4(c, c, 1, 1) = 1.0;
  auto out = conv2d(in, w, 1, 1);
  REQUIRE(out.shape == in.shape);
  for (int64_t i = 0; i < in.numel(); ++i) CHECK(out[i] == doctest::Approx(in[i]).epsilon(1e-15));
}

TEST_CASE("conv2d: strided case matches the naive six-loop reference") {
  auto in = oracle::random_tensor<double>({2, 3, 8, 8}, 21);
  auto w = oracle::random_tensor<double>({4, 3, 3, 3}, 22);
  auto out = conv2d(in, w, 2, 1);
  CHECK(out.shape == std::vector<int>{2, 4, 4, 4});
  auto ref = oracle::conv2d_naive(in, w, 2, 1);
  CHECK(oracle::max_rel_err(out, ref) <= 1e-12);
}

TEST_CASE("conv2d: random shapes match the naive reference (property)") {
  RngStream rng(99, 0, RngPurpose::probe);
  for (int trial = 0; trial < 18; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(3));
    const int cin = 1 + static_cast<int>(rng.below(4));
    const int cout = 1 + static_cast<int>(rng.below(5));
    const int k = 1 + 2 * static_cast<int>(rng.below(3));  // 1,3,5
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int pad = static_cast<int>(rng.below(3));
    const int h = k + static_cast<int>(rng.below(6));
    const int w = k + static_cast<int>(rng.below(6));
    auto in = oracle::random_tensor<double>({n, cin, h, w}, 1000 + trial, 1);
    auto wt = oracle::random_tensor<double>({cout, cin, k, k}, 2000 + trial, 2);
    auto got = conv2d(in, wt, stride, pad);
    auto ref = oracle::conv2d_naive(in, wt, stride, pad);
    REQUIRE(got.shape == ref.shape);
    CHECK(oracle::max_rel_err(got, ref) <= 1e-12);
  }
}

TEST_CASE("conv2d: channel mismatch raises a dimension error") {
  Tensor<double> in({1, 2, 4, 4}, 1.0);
  Tensor<double> w({1, 3, 3, 3}, 1.0);
  CHECK_THROWS_AS(conv2d(in, w, 1, 1), std::invalid_argument);
}

TEST_CASE("conv2d: bitwise reproducible across calls") {
  auto in = oracle::random_tensor<float>({2, 4, 9, 9}, 31);
  auto w = oracle::random_tensor<float>({8, 4, 3, 3}, 32);
  auto a = conv2d(in, w, 2, 1);
  auto b = conv2d(in, w, 2, 1);
  CHECK(std::memcmp(a.ptr(), b.ptr(), sizeof(float) * a.numel()) == 0);
}

TEST_CASE("conv2d_grad: zero upstream gives zero gradients") {
  auto in = oracle::random_tensor<double>({1, 2, 5, 5}, 41);
  auto w = oracle::random_tensor<double>({3, 2, 3, 3}, 42);
  Tensor<double> up({1, 3, 5, 5}, 0.0);
  auto g = conv2d_grad(up, in, w, 1, 1);
  for (auto v : g.grad_input.data) CHECK(v == 0.0);
  for (auto v : g.grad_weights.data) CHECK(v == 0.0);
}

TEST_CASE("conv2d_grad: matches central differences") {
  auto in = oracle::random_tensor<double>({1, 1, 4, 4}, 51);
  auto w = oracle::random_tensor<double>({2, 1, 3, 3}, 52);
  auto up = oracle::random_tensor<double>({1, 2, 4, 4}, 53);

  auto loss = [&]() {
    auto out = conv2d(in, w, 1, 1);
    double s = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) s += up[i] * out[i];
    return s;
  };
  auto g = conv2d_grad(up, in, w, 1, 1);
  CHECK(oracle::max_rel_err(g.grad_input, oracle::finite_diff(in, loss)) <= 1e-6);
  CHECK(oracle::max_rel_err(g.grad_weights, oracle::finite_diff(w, loss)) <= 1e-6);

  // strided case
  auto in2 = oracle::random_tensor<double>({2, 2, 6, 6}, 54);
  auto w2 = oracle::random_tensor<double>({3, 2, 3, 3}, 55);
  auto up2 = oracle::random_tensor<double>({2, 3, 3, 3}, 56);
  auto loss2 = [&]() {
    auto out = conv2d(in2, w2, 2, 1);
    double s = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) s += up2[i] * out[i];
    return s;
  };
  auto g2 = conv2d_grad(up2, in2, w2, 2, 1);
  CHECK(oracle::max_rel_err(g2.grad_input, oracle::finite_diff(in2, loss2)) <= 1e-6);
  CHECK(oracle::max_rel_err(g2.grad_weights, oracle::finite_diff(w2, loss2)) <= 1e-6);
}

TEST_CASE("conv2d_grad: input-sized kernel with unit upstream recovers the input") {
  auto in = oracle::random_tensor<double>({1, 2, 4, 4}, 61);
  auto w = oracle::random_tensor<double>({1, 2, 4, 4}, 62);
  Tensor<double> up({1, 1, 1, 1}, 1.0);
  auto g = conv2d_grad(up, in, w, 1, 0);
  for (int64_t i = 0; i < in.numel(); ++i) CHECK(g.grad_weights[i] == doctest::Approx(in[i]).epsilon(1e-14));
}

TEST_CASE("batchnorm: constant channel normalizes to zero before affine") {
  Tensor<double> in({2, 1, 3, 3}, 4.2);
  auto st = BnState<double>::make(1, false);
  auto out = batchnorm(in, st, Mode::train);
  for (auto v : out.data) {
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(0.0));
  }
}

TEST_CASE("batchnorm: affine transform maps normalized 0.5 to 2.0") {
  auto st = BnState<double>::make(1, true);
  st.gamma[0] = 2.0;
  st.beta[0] = 1.0;
  st.running_mean[0] = 0.0;
  st.running_var[0] = 1.0 - st.eps;  // so sqrt(var+eps) == 1 exactly
  Tensor<double> in({1, 1, 1, 2}, 0.5);
  auto out = batchnorm(in, st, Mode::eval);
  CHECK(out[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("batchnorm: running statistics follow the EMA update") {
  auto st = BnState<double>::make(2, false);
  auto in = oracle::random_tensor<double>({3, 2, 2, 2}, 71);
  BnCache<double> cache;
  batchnorm(in, st, Mode::train, &cache);
  const int64_t m = 3 * 2 * 2;
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0;
    for (int n = 0; n < 3; ++n)
      for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) mean += in.at4(n, c, h, w);
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (int n = 0; n < 3; ++n)
      for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) var += (in.at4(n, c, h, w) - mean) * (in.at4(n, c, h, w) - mean);
    var /= static_cast<double>(m);
    CHECK(st.running_mean[c] == doctest::Approx(0.1 * mean).epsilon(1e-12));
    CHECK(st.running_var[c] ==
          doctest::Approx(0.9 * 1.0 + 0.1 * var * m / (m - 1.0)).epsilon(1e-12));
    CHECK(st.running_var[c] >= 0.0);
  }
}

TEST_CASE("batchnorm: train mode rejects single-element channels") {
  Tensor<double> in({1, 2, 1, 1}, 1.0);
  auto st = BnState<double>::make(2, false);
  CHECK_THROWS_AS(batchnorm(in, st, Mode::train), std::invalid_argument);
}

TEST_CASE("batchnorm: gradients match central differences") {
  auto in = oracle::random_tensor<double>({2, 3, 3, 3}, 81);
  auto up = oracle::random_tensor<double>({2, 3, 3, 3}, 82);
  auto st = BnState<double>::make(3, true);
  for (int c = 0; c < 3; ++c) {
    st.gamma[c] = 0.5 + 0.3 * c;
    st.beta[c] = -0.2 + 0.1 * c;
  }
  auto loss = [&]() {
    BnState<double> copy = st;  // keep running stats untouched between probes
    auto out = batchnorm(in, copy, Mode::train);
    double s = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) s += up[i] * out[i];
    return s;
  };
  BnState<double> work = st;
  BnCache<double> cache;
  batchnorm(in, work, Mode::train, &cache);
  auto g = batchnorm_grad(up, in, st, cache);
  CHECK(oracle::max_rel_err(g.grad_input, oracle::finite_diff(in, loss)) <= 1e-6);
  CHECK(oracle::max_rel_err(g.grad_gamma, oracle::finite_diff(st.gamma, loss)) <= 1e-6);
  CHECK(oracle::max_rel_err(g.grad_beta, oracle::finite_diff(st.beta, loss)) <= 1e-6);
}

TEST_CASE("relu and its gradient") {
  Tensor<double> in({1, 3}, 0.0);
  in[0] = -1.0;
  in[1] = 0.0;
  in[2] = 2.0;
  auto out = relu(in);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 2.0);
  Tensor<double> up({1, 3}, 1.0);
  auto dx = relu_grad(up, out);
  CHECK(dx[0] == 0.0);
  CHECK(dx[1] == 0.0);
  CHECK(dx[2] == 1.0);
}

TEST_CASE("maxpool: 2x2 stride 2 picks the maximum") {
  Tensor<double> in({1, 1, 2, 2}, 0.0);
  in.at4(0, 0, 0, 0) = 1.0;
  in.at4(0, 0, 0, 1) = 2.0;
  in.at4(0, 0, 1, 0) = 3.0;
  in.at4(0, 0, 1, 1) = 4.0;
  auto r = maxpool2d(in, 2, 2);
  CHECK(r.output.numel() == 1);
  CHECK(r.output[0] == 4.0);

  Tensor<double> up({1, 1, 1, 1}, 1.5);
  auto dx = maxpool2d_grad(up, r.argmax, in.shape);
  CHECK(dx.at4(0, 0, 1, 1) == 1.5);
  CHECK(dx.at4(0, 0, 0, 0) == 0.0);
}

TEST_CASE("maxpool: gradient matches central differences") {
  auto in = oracle::random_tensor<double>({2, 2, 5, 5}, 91);
  auto pooled_shape = maxpool2d(in, 3, 2, 1).output.shape;
  auto up = oracle::random_tensor<double>(pooled_shape, 92);
  auto loss = [&]() {
    auto r = maxpool2d(in, 3, 2, 1);
    double s = 0.0;
    for (int64_t i = 0; i < r.output.numel(); ++i) s += up[i] * r.output[i];
    return s;
  };
  auto r = maxpool2d(in, 3, 2, 1);
  Tensor<double> up4(r.output.shape, up.data);
  auto dx = maxpool2d_grad(up4, r.argmax, in.shape);
  CHECK(oracle::max_rel_err(dx, oracle::finite_diff(in, loss)) <= 1e-6);
}

TEST_CASE("global_avgpool: constant tensor averages to the constant") {
  Tensor<double> in({2, 3, 4, 4}, 2.5);
  auto out = global_avgpool(in);
  CHECK(out.shape == std::vector<int>{2, 3});
  for (auto v : out.data) CHECK(v == doctest::Approx(2.5));

  auto rnd = oracle::random_tensor<double>({1, 2, 3, 3}, 93);
  auto up = oracle::random_tensor<double>({1, 2}, 94);
  auto loss = [&]() {
    auto o = global_avgpool(rnd);
    double s = 0.0;
    for (int64_t i = 0; i < o.numel(); ++i) s += up[i] * o[i];
    return s;
  };
  auto dx = global_avgpool_grad(up, rnd.shape);
  CHECK(oracle::max_rel_err(dx, oracle::finite_diff(rnd, loss)) <= 1e-6);
}

TEST_CASE("linear: forward and gradients") {
  auto x = oracle::random_tensor<double>({3, 5}, 95);
  auto w = oracle::random_tensor<double>({4, 5}, 96);
  auto out = linear(x, w);
  CHECK(out.shape == std::vector<int>{3, 4});
  double manual = 0.0;
  for (int f = 0; f < 5; ++f) manual += x[f] * w[f];
  CHECK(out[0] == doctest::Approx(manual).epsilon(1e-12));

  auto up = oracle::random_tensor<double>({3, 4}, 97);
  auto loss = [&]() {
    auto o = linear(x, w);
    double s = 0.0;
    for (int64_t i = 0; i < o.numel(); ++i) s += up[i] * o[i];
    return s;
  };
  auto g = linear_grad(up, x, w);
  CHECK(oracle::max_rel_err(g.grad_input, oracle::finite_diff(x, loss)) <= 1e-6);
  CHECK(oracle::max_rel_err(g.grad_weights, oracle::finite_diff(w, loss)) <= 1e-6);

  Tensor<double> bad({2, 7}, 0.0);
  CHECK_THROWS_AS(linear(bad, w), std::invalid_argument);
}

TEST_CASE("softmax_cross_entropy: uniform logits give ln(K)") {
  Tensor<double> logits({2, 100}, 0.7);
  auto r = softmax_cross_entropy(logits, {3, 42});
  CHECK(r.loss == doctest::Approx(std::log(100.0)).epsilon(1e-12));
}

TEST_CASE("softmax_cross_entropy: confident correct logit drives loss to zero") {
  Tensor<double> logits({1, 5}, 0.0);
  logits[2] = 50.0;
  auto r = softmax_cross_entropy(logits, {2});
  CHECK(r.loss < 1e-12);
}

TEST_CASE("softmax_cross_entropy: gradient matches central differences") {
  auto logits = oracle::random_tensor<double>({4, 7}, 98, 0, 2.0);
  std::vector<int> labels{1, 6, 0, 3};
  auto loss = [&]() { return softmax_cross_entropy(logits, labels).loss; };
  auto r = softmax_cross_entropy(logits, labels);
  CHECK(oracle::max_rel_err(r.grad_logits, oracle::finite_diff(logits, loss)) <= 1e-6);
}

TEST_CASE("softmax_cross_entropy: rejects out-of-range labels") {
  Tensor<double> logits({1, 4}, 0.0);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {4}), std::invalid_argument);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1}), std::invalid_argument);
}

TEST_CASE("sgd_step: plain gradient descent when momentum and decay are off") {
  Tensor<double> p({3}, 1.0), g({3}, 0.25), v({3}, 0.0);
  sgd_step(p, g, v, 1.0, 0.0, 0.0);
  for (auto x : p.data) CHECK(x == doctest::Approx(0.75));
}

TEST_CASE("sgd_step: velocity decays geometrically with zero gradient") {
  Tensor<double> p({1}, 0.0), g({1}, 0.0), v({1}, 1.0);
  for (int i = 1; i <= 4; ++i) {
    sgd_step(p, g, v, 0.0, 0.9, 0.0);
    CHECK(v[0] == doctest::Approx(std::pow(0.9, i)).epsilon(1e-12));
  }
}

TEST_CASE("sgd_step: two hand-traced iterations with momentum and weight decay") {
  // p0=1, g=0.5, lr=0.1, momentum=0.9, wd=0.0005:
  //   v1 = 0.5005, p1 = 0.94995
  //   v2 = 0.9*0.5005 + 0.5 + 0.0005*0.94995 = 0.950924975, p2 = 0.8548575025
  Tensor<double> p({1}, 1.0), g({1}, 0.5), v({1}, 0.0);
  sgd_step(p, g, v, 0.1, 0.9, 0.0005);
  CHECK(v[0] == doctest::Approx(0.5005).epsilon(1e-12));
  CHECK(p[0] == doctest::Approx(0.94995).epsilon(1e-12));
  sgd_step(p, g, v, 0.1, 0.9, 0.0005);
  CHECK(v[0] == doctest::Approx(0.950924975).epsilon(1e-12));
  CHECK(p[0] == doctest::Approx(0.8548575025).epsilon(1e-12));
}

TEST_CASE("lr_schedule: warmup, cosine start, midpoint, endpoint") {
  CHECK(lr_schedule(5, 200, 0.1, 5) == doctest::Approx(0.1));
  CHECK(lr_schedule(0, 200, 0.1, 5) == doctest::Approx(0.02));
  CHECK(lr_schedule(105, 205, 0.1, 5) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(lr_schedule(199, 200, 0.1, 5) < 1e-4);
  CHECK(lr_schedule(199, 200, 0.1, 5) < lr_schedule(198, 200, 0.1, 5));
  CHECK_THROWS_AS(lr_schedule(0, 5, 0.1, 5), ConfigError);
  CHECK_THROWS_AS(lr_schedule(200, 200, 0.1, 5), ConfigError);
}
