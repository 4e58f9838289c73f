#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_oracle.hpp"
#include "hif/adam.hpp"
#include "hif/autodiff.hpp"
#include "hif/rng.hpp"

using hif::AdamState;
using hif::Rng;
using hif::Tape;
using hif::Tensor;
using hif::Value;

TEST_CASE("grad of x*x at x=3 is 6") {
  Tape t;
  Value x = t.param(Tensor::scalar(3.0));
  Value y = t.mul(x, x);
  Value loss = t.sum(y);
  auto g = t.gradients(loss, {x});
  CHECK(g[0].data[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("grad of constant w.r.t. unused parameter is 0") {
  Tape t;
  Value x = t.param(Tensor::scalar(3.0));
  Value c = t.constant(Tensor::scalar(7.0));
  Value loss = t.sum(c);
  auto g = t.gradients(loss, {x});
  CHECK(g[0].data[0] == 0.0);
}

TEST_CASE("gradients rejects non-scalar output") {
  Tape t;
  Value x = t.param(Tensor::vector1d({1.0, 2.0}));
  CHECK_THROWS_AS((void)t.gradients(x, {x}), std::invalid_argument);
}

TEST_CASE("two-layer perceptron gradients match central finite differences") {
  Rng rng(71);
  const std::size_t in = 4, hid = 5, out = 3;
  std::vector<Tensor> params = {
      Tensor::randn({in, hid}, rng, 0.5), Tensor::randn({hid}, rng, 0.1),
      Tensor::randn({hid, out}, rng, 0.5), Tensor::randn({out}, rng, 0.1),
  };
  Tensor input = Tensor::randn({in}, rng);
  Tensor target = Tensor::randn({out}, rng);

  auto forward = [&](const std::vector<Tensor>& p) {
    Tape t;
    Value x = t.constant(input);
    Value h = t.tanh_(t.dense(x, t.param(p[0]), t.param(p[1])));
    Value y = t.dense(h, t.param(p[2]), t.param(p[3]));
    return t.val(t.mse(y, t.constant(target))).data[0];
  };

  Tape t;
  Value x = t.constant(input);
  std::vector<Value> pv;
  for (const auto& p : params) pv.push_back(t.param(p));
  Value h = t.tanh_(t.dense(x, pv[0], pv[1]));
  Value y = t.dense(h, pv[2], pv[3]);
  Value loss = t.mse(y, t.constant(target));
  auto analytic = t.gradients(loss, pv);
  auto numeric = hif::testing::finite_difference_gradients(forward, params);

  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      CHECK(hif::testing::gradient_close(analytic[p].data[k], numeric[p].data[k]));
    }
  }
}

TEST_CASE("conv1d_same basics") {
  Tape t;
  SUBCASE("k=1 identity kernel") {
    Value x = t.param(Tensor({4, 1}, {1, 2, 3, 4}));
    Value k = t.param(Tensor({1, 1, 1}, {1.0}));
    Value y = t.conv1d_same(x, k);
    CHECK(t.val(y).data == std::vector<double>{1, 2, 3, 4});
  }
  SUBCASE("hand convolution with zero padding") {
    Value x = t.param(Tensor({3, 1}, {1, 2, 3}));
    Value k = t.param(Tensor({3, 1, 1}, {1.0, 1.0, 1.0}));
    Value y = t.conv1d_same(x, k);
    CHECK(t.val(y).data == std::vector<double>{3, 6, 5});
  }
  SUBCASE("shape law: length 290, 1 in, 8 out, k=9") {
    Rng rng(3);
    Value x = t.param(Tensor::randn({290, 1}, rng));
    Value k = t.param(Tensor::randn({9, 1, 8}, rng));
    Value y = t.conv1d_same(x, k);
    CHECK(t.val(y).shape == std::vector<std::size_t>{290, 8});
  }
  SUBCASE("even k rejected") {
    Value x = t.param(Tensor({3, 1}, {1, 2, 3}));
    Value k = t.param(Tensor({2, 1, 1}, {1.0, 1.0}));
    CHECK_THROWS_AS((void)t.conv1d_same(x, k), std::invalid_argument);
  }
}

TEST_CASE("conv1d_same matches a brute-force oracle, randomized") {
  Rng rng(12345);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t L = 1 + rng.index(40);
    const std::size_t cin = 1 + rng.index(3);
    const std::size_t cout = 1 + rng.index(3);
    const std::size_t ks[] = {1, 3, 5, 7, 9};
    const std::size_t k = ks[rng.index(5)];
    Tensor x = Tensor::randn({L, cin}, rng);
    Tensor kern = Tensor::randn({k, cin, cout}, rng);

    Tape t;
    Value y = t.conv1d_same(t.param(x), t.param(kern));

    // Independent double-loop oracle over the padded input.
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (std::size_t tt = 0; tt < k; ++tt) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + tt) - pad;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            acc += x.data[static_cast<std::size_t>(src) * cin + ci] *
                   kern.data[(tt * cin + ci) * cout + co];
          }
        }
        CHECK(t.val(y).data[l * cout + co] == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("softmax properties") {
  Tape t;
  SUBCASE("uniform logits") {
    Value s = t.softmax(t.param(Tensor::vector1d({0, 0, 0})));
    for (double x : t.val(s).data) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
  SUBCASE("closed form ln 1, ln 2, ln 3") {
    Value s = t.softmax(t.param(Tensor::vector1d({std::log(1.0), std::log(2.0), std::log(3.0)})));
    CHECK(t.val(s).data[0] == doctest::Approx(1.0 / 6).epsilon(1e-9));
    CHECK(t.val(s).data[1] == doctest::Approx(2.0 / 6).epsilon(1e-9));
    CHECK(t.val(s).data[2] == doctest::Approx(3.0 / 6).epsilon(1e-9));
  }
  SUBCASE("simplex invariant under random logits, including large magnitudes") {
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
      std::size_t n = 1 + rng.index(12);
      std::vector<double> logits(n);
      for (auto& x : logits) x = rng.uniform(-500.0, 500.0);
      Value s = t.softmax(t.param(Tensor::vector1d(logits)));
      double sum = 0.0;
      for (double x : t.val(s).data) {
        CHECK(x > 0.0);
        sum += x;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("mse identity and cross_entropy gradient") {
  Tape t;
  Value v = t.param(Tensor::vector1d({0.3, -1.2, 4.0}));
  CHECK(t.val(t.mse(v, v)).data[0] == 0.0);

  Tensor target = Tensor::vector1d({0.2, 0.5, 0.3});
  auto forward = [&](const std::vector<Tensor>& p) {
    Tape tp;
    return tp.val(tp.cross_entropy(tp.param(p[0]), target)).data[0];
  };
  std::vector<Tensor> params = {Tensor::vector1d({0.1, 0.9, -0.4})};
  Tape t2;
  Value logits = t2.param(params[0]);
  auto g = t2.gradients(t2.cross_entropy(logits, target), {logits});
  auto fd = hif::testing::finite_difference_gradients(forward, params);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(hif::testing::gradient_close(g[0].data[k], fd[0].data[k]));
  }
}

TEST_CASE("random op compositions match finite differences") {
  // Randomized chains of sanctioned ops; parameters feed every layer.
  Rng seed_rng(2024);
  for (int trial = 0; trial < 8; ++trial) {
    Rng rng = seed_rng.split(static_cast<std::uint64_t>(trial));
    const std::size_t n = 3 + rng.index(4);
    std::vector<Tensor> params = {
        Tensor::randn({n}, rng, 0.8),
        Tensor::randn({n, n}, rng, 0.4),
        Tensor::randn({n}, rng, 0.2),
        Tensor::randn({3, 1, 2}, rng, 0.6),
    };
    auto build = [&](Tape& t, const std::vector<Tensor>& p, std::vector<Value>* out_params) {
      Value v0 = t.param(p[0]);
      Value w = t.param(p[1]);
      Value b = t.param(p[2]);
      Value kern = t.param(p[3]);
      if (out_params) *out_params = {v0, w, b, kern};
      Value h = t.tanh_(t.dense(v0, w, b));
      Value h2 = t.sigmoid(t.add(h, b));
      Value sm = t.softmax(h2);
      Value cat = t.concat({h, sm, t.mul(h, h2)});
      Value sliced = t.slice(cat, 1, n);
      // run the vector through a conv as a 1-channel sequence [n,1]
      std::vector<Value> rows;
      for (std::size_t i = 0; i < n; ++i) rows.push_back(t.slice(sliced, i, 1));
      Value x2d = t.stack_rows(rows);  // [n,1]
      Value conv = t.conv1d_same(x2d, kern);
      Value pooled = t.mean_rows(conv);
      Value joined = t.concat({pooled, t.relu(h)});
      return t.sum(t.mul(joined, joined));
    };
    auto forward = [&](const std::vector<Tensor>& p) {
      Tape t;
      return t.val(build(t, p, nullptr)).data[0];
    };
    Tape t;
    std::vector<Value> pv;
    Value loss = build(t, params, &pv);
    auto analytic = t.gradients(loss, pv);
    auto numeric = hif::testing::finite_difference_gradients(forward, params);
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (std::size_t k = 0; k < params[p].size(); ++k) {
        CHECK(hif::testing::gradient_close(analytic[p].data[k], numeric[p].data[k]));
      }
    }
  }
}

TEST_CASE("determinism: identical tape and inputs give bit-identical results") {
  auto run = [](std::vector<double>* grad_out) {
    Rng rng(555);
    Tape t;
    Value x = t.param(Tensor::randn({6}, rng));
    Value w = t.param(Tensor::randn({6, 4}, rng));
    Value b = t.param(Tensor::randn({4}, rng));
    Value loss = t.sum_squares(t.sigmoid(t.dense(x, w, b)));
    auto g = t.gradients(loss, {x, w, b});
    *grad_out = g[1].data;
    return t.val(loss).data[0];
  };
  std::vector<double> g1, g2;
  double l1 = run(&g1), l2 = run(&g2);
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("spmm and weighted_rows gradients") {
  Rng rng(31);
  hif::SparseMatrix A;
  A.rows = A.cols = 4;
  A.entries = {{0, 1, 0.5}, {1, 0, 0.5}, {1, 2, 0.3}, {2, 1, 0.3}, {3, 3, 1.0}, {0, 0, 0.2}};
  std::vector<Tensor> params = {Tensor::randn({4, 3}, rng), Tensor::randn({4}, rng)};
  auto build = [&](Tape& t, const std::vector<Tensor>& p, std::vector<Value>* pv) {
    Value m = t.param(p[0]);
    Value alpha = t.param(p[1]);
    if (pv) *pv = {m, alpha};
    Value prop = t.spmm(A, m);
    Value pooled = t.weighted_rows(t.softmax(alpha), prop);
    return t.sum_squares(pooled);
  };
  auto forward = [&](const std::vector<Tensor>& p) {
    Tape t;
    return t.val(build(t, p, nullptr)).data[0];
  };
  Tape t;
  std::vector<Value> pv;
  auto analytic = t.gradients(build(t, params, &pv), pv);
  auto numeric = hif::testing::finite_difference_gradients(forward, params);
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      CHECK(hif::testing::gradient_close(analytic[p].data[k], numeric[p].data[k]));
    }
  }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Tensor p = Tensor::vector1d({1.0, -2.0});
  std::vector<Tensor*> params = {&p};
  AdamState s = AdamState::init(params);
  adam_step(params, {Tensor::zeros({2})}, s, 0.001);
  CHECK(p.data == std::vector<double>{1.0, -2.0});
  CHECK(s.step == 1);
}

TEST_CASE("adam: one-step hand calculation") {
  // grad 1.0 from fresh state: mhat = vhat = 1, update = -lr * 1/(1+eps)
  Tensor p = Tensor::scalar(0.0);
  std::vector<Tensor*> params = {&p};
  AdamState s = AdamState::init(params);
  adam_step(params, {Tensor::scalar(1.0)}, s, 0.001);
  CHECK(p.data[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam: converges on (x-2)^2") {
  Tensor x = Tensor::scalar(0.0);
  std::vector<Tensor*> params = {&x};
  AdamState s = AdamState::init(params);
  for (int i = 0; i < 2000; ++i) {
    Tensor g = Tensor::scalar(2.0 * (x.data[0] - 2.0));
    adam_step(params, {g}, s, 0.01);
  }
  CHECK(std::fabs(x.data[0] - 2.0) < 0.01);
}

TEST_CASE("adam: shape mismatch rejected") {
  Tensor p = Tensor::vector1d({1.0, 2.0});
  std::vector<Tensor*> params = {&p};
  AdamState s = AdamState::init(params);
  CHECK_THROWS_AS(adam_step(params, {Tensor::scalar(1.0)}, s, 0.001), std::invalid_argument);
}
