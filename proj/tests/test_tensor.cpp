#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "support/testing.hpp"

#include "brave/error.hpp"
#include "brave/rng.hpp"
#include "brave/tensor.hpp"

using namespace brave;

TEST_CASE("tensor construction and element access") {
  Tensor t({2, 3}, Precision::f64);
  CHECK(t.size() == 6);
  CHECK(t.at(0) == 0.0);
  t.set(4, 2.5);
  CHECK(t.at(4) == 2.5);

  Tensor s = Tensor::scalar(7.0, Precision::f32);
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s.at(0) == 7.0);
}

TEST_CASE("tensor from values validates count") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}, Precision::f64), NumericError);
  Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4}, Precision::f64);
  CHECK(t.at(3) == 4.0);
}

TEST_CASE("precision conversion rounds through float") {
  Tensor t = Tensor::from({1}, {0.1}, Precision::f64);
  Tensor f = t.to(Precision::f32);
  CHECK(f.at(0) == doctest::Approx(0.1).epsilon(1e-7));
  CHECK(f.at(0) != 0.1);  // 0.1 is not representable in binary32
  CHECK(t.to(Precision::f64).bitwise_equal(t));
}

TEST_CASE("bitwise equality distinguishes precision and content") {
  Tensor a = Tensor::from({2}, {1.0, 2.0}, Precision::f64);
  Tensor b = Tensor::from({2}, {1.0, 2.0}, Precision::f64);
  CHECK(a.bitwise_equal(b));
  b.set(1, 2.0000000001);
  CHECK(!a.bitwise_equal(b));
  CHECK(!a.bitwise_equal(a.to(Precision::f32)));
}

TEST_CASE("rng streams are deterministic and label-separated") {
  Rng a = stream_rng(42, "augment", {1, 2});
  Rng b = stream_rng(42, "augment", {1, 2});
  Rng c = stream_rng(42, "views", {1, 2});
  bool diverged = false;
  for (int i = 0; i < 16; ++i) {
    uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
    if (va != c.next_u64()) diverged = true;
  }
  CHECK(diverged);
}

TEST_CASE("rng uniform and normal have sane moments") {
  Rng r(123);
  double sum = 0, sumsq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sumsq += u * u;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(var == doctest::Approx(1.0 / 12).epsilon(0.02));

  sum = sumsq = 0;
  for (int i = 0; i < n; ++i) {
    double g = r.normal();
    sum += g;
    sumsq += g * g;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("uniform_int covers the range without bias spikes") {
  Rng r(7);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) counts[static_cast<size_t>(r.uniform_int(6))]++;
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}
