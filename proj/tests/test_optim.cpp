#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "triplet/errors.hpp"
#include "triplet/optim.hpp"

using namespace triplet;

TEST_CASE("sigmoid reparameterization") {
  CHECK(reparam_apply(Reparam::Sigmoid, 0.0) == doctest::Approx(0.5));
  CHECK(reparam_apply(Reparam::Sigmoid, 20.0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(reparam_apply(Reparam::Sigmoid, -20.0) == doctest::Approx(0.0).scale(1).epsilon(1e-8));
  CHECK(std::isfinite(reparam_apply(Reparam::Sigmoid, -800.0)));
  CHECK(std::isfinite(reparam_apply(Reparam::Sigmoid, 800.0)));

  for (double x = -10.0; x <= 10.0; x += 0.37) {
    const double round = reparam_invert(Reparam::Sigmoid, reparam_apply(Reparam::Sigmoid, x));
    CHECK(round == doctest::Approx(x).epsilon(1e-9));
  }
}

TEST_CASE("reparameterized values stay in range") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double raw = rng.uniform(-1000.0, 1000.0);
    const double s = reparam_apply(Reparam::Sigmoid, raw);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    CHECK(reparam_apply(Reparam::Exp, rng.uniform(-20, 6)) > 0.0);
  }
}

TEST_CASE("grad_check validates a linear kernel tightly") {
  auto fwd = [](const std::vector<double>& x) { return std::vector<double>{3.0 * x[0]}; };
  auto jac = [](const std::vector<double>&) {
    return std::vector<std::vector<double>>{{3.0}};
  };
  CHECK(grad_check(fwd, jac, {2.0}).max_rel_err < 1e-10);
}

TEST_CASE("grad_check flags nondeterministic kernels") {
  int counter = 0;
  auto fwd = [&counter](const std::vector<double>& x) {
    return std::vector<double>{x[0] + 1e-9 * (counter++)};
  };
  auto jac = [](const std::vector<double>&) {
    return std::vector<std::vector<double>>{{1.0}};
  };
  CHECK_THROWS_AS(grad_check(fwd, jac, {1.0}), InvalidKernel);
}

TEST_CASE("adam first step magnitude is the learning rate") {
  ParamGroup g;
  g.values = {1.0, -2.0, 0.5};
  g.learning_rate = 0.01;
  AdamState st;
  st.resize(3);
  const std::vector<double> before = g.values;
  adam_step(g, st, {0.3, -0.7, 2.0});
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(g.values[i] - before[i]) == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(st.t == 1);
}

TEST_CASE("adam with zero gradients or zero lr leaves values unchanged") {
  ParamGroup g;
  g.values = {1.0, 2.0};
  g.learning_rate = 0.1;
  AdamState st;
  adam_step(g, st, {0.0, 0.0});
  CHECK(g.values[0] == 1.0);
  CHECK(g.values[1] == 2.0);
  CHECK(st.t == 1);

  ParamGroup g2;
  g2.values = {1.0, 2.0};
  g2.learning_rate = 0.0;
  AdamState st2;
  adam_step(g2, st2, {5.0, -3.0});
  CHECK(g2.values[0] == 1.0);
  CHECK(g2.values[1] == 2.0);
}

TEST_CASE("adam runs are bit identical") {
  auto run = [] {
    ParamGroup g;
    g.values = {0.4, -0.2, 1.7};
    g.learning_rate = 0.003;
    AdamState st;
    Rng rng(77);
    for (int i = 0; i < 100; ++i)
      adam_step(g, st, {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    return g.values;
  };
  const auto a = run(), b = run();
  for (int i = 0; i < 3; ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("adam skips non-finite gradients") {
  ParamGroup g;
  g.values = {1.0, 2.0};
  g.learning_rate = 0.1;
  AdamState st;
  const int skipped = adam_step(g, st, {std::nan(""), 1.0});
  CHECK(skipped == 1);
  CHECK(g.values[0] == 1.0);
  CHECK(g.values[1] != 2.0);
}

TEST_CASE("clip_grad_norm") {
  std::vector<double> small = {0.3, 0.4};
  clip_grad_norm(small, 1.0);
  CHECK(small[0] == 0.3);
  CHECK(small[1] == 0.4);

  std::vector<double> big = {3.0, 4.0};
  clip_grad_norm(big, 1.0);
  CHECK(big[0] == doctest::Approx(0.6));
  CHECK(big[1] == doctest::Approx(0.8));

  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> g(8);
    for (double& v : g) v = rng.uniform(-5, 5);
    const std::vector<double> orig = g;
    clip_grad_norm(g, 0.5);
    double n = 0.0, cos_num = 0.0, n_orig = 0.0;
    for (size_t k = 0; k < g.size(); ++k) {
      n += g[k] * g[k];
      cos_num += g[k] * orig[k];
      n_orig += orig[k] * orig[k];
    }
    CHECK(std::sqrt(n) <= 0.5 + 1e-12);
    CHECK(cos_num / std::sqrt(n * n_orig) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("grad stats accumulate norms and counts") {
  GradStats stats;
  stats.reset(2);
  accumulate_grad_stats(stats, {{0, 0}, {3, 4}}, {{0, 0, 0}, {1, 0, 0}});
  CHECK(stats.norm_sum[0] == 0.0);
  CHECK(stats.norm_sum[1] == doctest::Approx(5.0));
  CHECK(stats.count[0] == 1);

  for (int i = 0; i < 4; ++i) accumulate_grad_stats(stats, {{0, 0}, {3, 4}}, {{0, 0, 0}, {1, 0, 0}});
  CHECK(stats.norm_sum[1] == doctest::Approx(25.0));  // additive over iterations
  CHECK(stats.count[1] == 5);
  CHECK(stats.dir_sum[1].x == doctest::Approx(5.0));

  stats.reset(2);
  CHECK(stats.norm_sum[1] == 0.0);
}
