#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "support/testing.hpp"

#include <cmath>

#include "brave/error.hpp"
#include "brave/optim.hpp"
#include "brave/rng.hpp"

using namespace brave;
using namespace brave::optim;

TEST_CASE("schedule endpoints and continuity") {
  OptimConfig cfg;
  cfg.base_lr = 4.8;
  cfg.warmup_steps = 100;
  cfg.total_steps = 1000;
  CHECK(lr_at(0, cfg) == 0.0);
  CHECK(lr_at(100, cfg) == doctest::Approx(4.8));
  CHECK(lr_at(1000, cfg) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(lr_at(5000, cfg) == doctest::Approx(0.0).epsilon(1e-12));  // clamped past the end
  // continuity at the warmup boundary
  CHECK(std::fabs(lr_at(99, cfg) - lr_at(100, cfg)) < cfg.base_lr / 50);
  // mid-cosine sanity: halfway through decay sits at base/2
  CHECK(lr_at(550, cfg) == doctest::Approx(2.4));
}

TEST_CASE("trust ratio hand check: 0.001*1/0.51") {
  OptimConfig cfg;
  cfg.trust_coefficient = 0.001;
  cfg.weight_decay = 0.01;
  CHECK(lars_trust_ratio(1.0, 0.51, cfg) == doctest::Approx(1.9608e-3).epsilon(1e-4));
  // degenerate norms fall back to rate 1
  CHECK(lars_trust_ratio(0.0, 0.51, cfg) == 1.0);
  CHECK(lars_trust_ratio(1.0, 0.0, cfg) == 1.0);
}

TEST_CASE("lars step realizes the hand-computed trust ratio") {
  auto store = std::make_shared<ad::ParamStore>();
  // w = e0, g = 0.5*e0 so ||g + wd*w|| = 0.51 exactly
  Tensor w({4}, Precision::f64);
  w.set(0, 1.0);
  store->create("m.weight", w, true);
  OptimConfig cfg;
  cfg.base_lr = 1.0;
  cfg.warmup_steps = 0;
  cfg.total_steps = 1;  // lr(0) = base
  cfg.momentum = 0.0;
  LarsOptimizer opt(cfg, store);
  Tensor g({4}, Precision::f64);
  g.set(0, 0.5);
  opt.step({{"m.weight", g}});
  // delta = lr * local * (g + wd*w) = 1 * 1.9608e-3 * 0.51 = 1.0e-3
  const double delta = 1.0 - store->get("m.weight").at(0);
  CHECK(delta == doctest::Approx(1.9608e-3 * 0.51).epsilon(1e-4));
}

TEST_CASE("zero gradient and zero decay leave the parameter untouched") {
  auto store = std::make_shared<ad::ParamStore>();
  store->create("a.weight", Tensor::from({2}, {1.5, -2.0}, Precision::f64), true);
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  LarsOptimizer opt(cfg, store);
  opt.step({{"a.weight", Tensor({2}, Precision::f64)}});
  CHECK(store->get("a.weight").at(0) == 1.5);
  CHECK(store->get("a.weight").at(1) == -2.0);
}

TEST_CASE("batch-norm parameters receive neither decay nor adaptation") {
  auto store = std::make_shared<ad::ParamStore>();
  store->create("b.bn_scale", Tensor::from({2}, {1.0, 1.0}, Precision::f64), true);
  store->create("b.bn_offset", Tensor::from({2}, {0.2, -0.2}, Precision::f64), true);
  store->create("b.bias", Tensor::from({2}, {0.7, 0.0}, Precision::f64), true);
  OptimConfig cfg;
  cfg.weight_decay = 0.5;  // aggressive decay that must not leak in
  LarsOptimizer opt(cfg, store);
  std::map<std::string, Tensor> zero = {{"b.bn_scale", Tensor({2}, Precision::f64)},
                                        {"b.bn_offset", Tensor({2}, Precision::f64)},
                                        {"b.bias", Tensor({2}, Precision::f64)}};
  opt.step(zero);
  CHECK(store->get("b.bn_scale").at(0) == 1.0);
  CHECK(store->get("b.bn_offset").at(1) == -0.2);
  CHECK(store->get("b.bias").at(0) == 0.7);
}

TEST_CASE("predictor group steps 10x against a matched parameter") {
  auto store = std::make_shared<ad::ParamStore>();
  Tensor init = Tensor::from({3}, {0.3, -0.4, 0.5}, Precision::f64);
  store->create("predictor.fc1.weight", init, true);
  store->create("projector.fc1.weight", init, true);
  OptimConfig cfg;
  cfg.base_lr = 0.1;
  cfg.warmup_steps = 0;
  cfg.total_steps = 1;
  cfg.momentum = 0.0;
  LarsOptimizer opt(cfg, store);
  Tensor g = Tensor::from({3}, {0.1, 0.2, -0.1}, Precision::f64);
  opt.step({{"predictor.fc1.weight", g}, {"projector.fc1.weight", g}});
  double dp = 0, db = 0;
  for (int i = 0; i < 3; ++i) {
    dp += std::pow(init.at(i) - store->get("predictor.fc1.weight").at(i), 2);
    db += std::pow(init.at(i) - store->get("projector.fc1.weight").at(i), 2);
  }
  CHECK(std::sqrt(dp) / std::sqrt(db) == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("200 steps on a convex quadratic descend monotonically after warmup") {
  // f(w) = 0.5*||w||^2. Centered at the origin the trust ratio stays at the
  // trust coefficient, so the heavy-ball recursion has real roots for
  // lr*trust small against (1-sqrt(momentum))^2 and descent is monotone.
  auto store = std::make_shared<ad::ParamStore>();
  const int dim = 16;
  Rng rng(3);
  Tensor w({dim}, Precision::f64);
  for (int i = 0; i < dim; ++i) w.set(i, rng.uniform(-1, 1));
  store->create("q.weight", w, true);
  OptimConfig cfg;
  cfg.base_lr = 1.0;
  cfg.warmup_steps = 20;
  cfg.total_steps = 220;
  cfg.weight_decay = 0.0;
  cfg.trust_coefficient = 0.002;
  cfg.momentum = 0.9;
  LarsOptimizer opt(cfg, store);
  auto objective = [&]() {
    double f = 0;
    for (int i = 0; i < dim; ++i) f += 0.5 * std::pow(store->get("q.weight").at(i), 2);
    return f;
  };
  const double start = objective();
  double prev = start;
  for (int s = 0; s < 220; ++s) {
    Tensor g({dim}, Precision::f64);
    for (int i = 0; i < dim; ++i) g.set(i, store->get("q.weight").at(i));
    opt.step({{"q.weight", g}});
    const double cur = objective();
    if (s >= cfg.warmup_steps) {
      INFO("step ", s);
      REQUIRE(cur <= prev + 1e-9);
    }
    prev = cur;
  }
  CHECK(prev < 0.05 * start);  // made real progress
}

TEST_CASE("optimizer state round-trips bitwise through serialization") {
  auto make = [] {
    auto store = std::make_shared<ad::ParamStore>();
    Rng rng(9);
    Tensor w({8}, Precision::f64);
    for (int i = 0; i < 8; ++i) w.set(i, rng.uniform(-1, 1));
    store->create("r.weight", w, true);
    return store;
  };
  auto grad = [](uint64_t seed) {
    Rng rng(seed);
    Tensor g({8}, Precision::f64);
    for (int i = 0; i < 8; ++i) g.set(i, rng.uniform(-1, 1));
    return g;
  };
  OptimConfig cfg;
  cfg.warmup_steps = 2;
  cfg.total_steps = 50;

  auto store_a = make();
  LarsOptimizer a(cfg, store_a);
  for (uint64_t s = 0; s < 3; ++s) a.step({{"r.weight", grad(s)}});
  io::Record snapshot = a.state_record();
  Tensor params_snapshot = store_a->get("r.weight");
  a.step({{"r.weight", grad(3)}});

  auto store_b = make();
  store_b->mutable_value("r.weight") = params_snapshot;
  LarsOptimizer b(cfg, store_b);
  b.load_state(snapshot);
  CHECK(b.step_count() == 3);
  b.step({{"r.weight", grad(3)}});
  CHECK(store_b->get("r.weight").bitwise_equal(store_a->get("r.weight")));
}

TEST_CASE("parameter-name validation rejects unknown suffixes at startup") {
  auto store = std::make_shared<ad::ParamStore>();
  store->create("weird.thing", Tensor({2}, Precision::f64), true);
  CHECK_THROWS_AS(LarsOptimizer(OptimConfig{}, store), ConfigError);
}

TEST_CASE("non-finite gradients abort with the parameter name") {
  auto store = std::make_shared<ad::ParamStore>();
  store->create("x.weight", Tensor({2}, Precision::f64), true);
  LarsOptimizer opt(OptimConfig{}, store);
  Tensor bad({2}, Precision::f64);
  bad.set(0, std::numeric_limits<double>::quiet_NaN());
  try {
    opt.step({{"x.weight", bad}});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("x.weight") != std::string::npos);
  }
}
