#include "doctest.h"

#include <cmath>

#include "longattn/autodiff.hpp"
#include "longattn/tensor.hpp"
#include "longattn/verify.hpp"

using namespace longattn;

TEST_CASE("matmul: identity, hand product, annihilator") {
  Rng rng(7);
  const Tensor m = Tensor::randn(3, 5, rng);
  CHECK(max_abs_diff(matmul(Tensor::identity(3), m), m) == 0.0);

  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor b = Tensor::from_rows({{1}, {1}});
  const Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == doctest::Approx(3.0));
  CHECK(c.at(1, 0) == doctest::Approx(7.0));

  const Tensor z = matmul(Tensor::zeros(2, 3), Tensor::randn(3, 4, rng));
  for (double v : z.data) CHECK(v == 0.0);

  CHECK_THROWS_AS(matmul(Tensor::zeros(2, 3), Tensor::zeros(2, 3)), std::invalid_argument);
}

TEST_CASE("matmul associativity on random small tensors") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = Tensor::randn(4, 6, rng);
    const Tensor b = Tensor::randn(6, 3, rng);
    const Tensor c = Tensor::randn(3, 5, rng);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
  }
}

TEST_CASE("softmax_masked hand cases") {
  // equal scores over 4 attended keys -> 0.25 each, 0 elsewhere
  Tensor scores(1, 6, 2.5);
  AttentionMask mask = AttentionMask::empty(1, 6);
  mask.rows[0] = {0, 2, 3, 5};
  Tensor p = softmax_masked(scores, mask);
  for (int k : {0, 2, 3, 5}) CHECK(p.at(0, static_cast<std::size_t>(k)) == doctest::Approx(0.25));
  CHECK(p.at(0, 1) == 0.0);
  CHECK(p.at(0, 4) == 0.0);

  // scores [0, ln 3] -> [0.25, 0.75]
  Tensor two(1, 2);
  two.at(0, 1) = std::log(3.0);
  const Tensor q = softmax_masked(two, AttentionMask::full(1, 2));
  CHECK(q.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(q.at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

  // single attended key -> 1.0 at that key
  Rng rng(3);
  AttentionMask single = AttentionMask::empty(2, 4);
  single.rows[0] = {3};
  single.rows[1] = {0};
  const Tensor s = softmax_masked(Tensor::randn(2, 4, rng), single);
  CHECK(s.at(0, 3) == 1.0);
  CHECK(s.at(1, 0) == 1.0);
}

TEST_CASE("softmax_masked: empty row is a hard error") {
  AttentionMask mask = AttentionMask::empty(2, 3);
  mask.rows[0] = {1};
  CHECK_THROWS_AS(softmax_masked(Tensor::zeros(2, 3), mask), empty_row_error);
}

TEST_CASE("softmax_masked: soft weights multiply the exponentials") {
  // weights 0.5 and 1.0 over equal scores -> probabilities 1/3 and 2/3
  AttentionMask mask = AttentionMask::empty(1, 2);
  mask.rows[0] = {0, 1};
  mask.weights = {{0.5, 1.0}};
  const Tensor p = softmax_masked(Tensor::zeros(1, 2), mask);
  CHECK(p.at(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(p.at(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax_masked rows sum to 1 over attended support (property)") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(10);
    Tensor scores(n, n);
    for (auto& v : scores.data) v = rng.uniform(-50.0, 50.0);
    AttentionMask mask = AttentionMask::empty(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        if (rng.uniform() < 0.4) mask.rows[i].push_back(static_cast<std::int32_t>(j));
      if (mask.rows[i].empty()) mask.rows[i].push_back(static_cast<std::int32_t>(i % n));
    }
    const Tensor p = softmax_masked(scores, mask);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        sum += p.at(i, j);
        if (!mask.attends(i, j)) CHECK(p.at(i, j) == 0.0);  // exact support
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward: sum gives ones, untouched leaves give zeros") {
  Tensor x = Tensor::filled(3, 4, 2.0);
  Tensor y = Tensor::filled(2, 2, 5.0);
  Tape tape;
  Var vx = tape.leaf(x);
  tape.leaf(y);  // y never participates in the loss
  tape.backward(tape.sum(vx));
  REQUIRE(x.grad.has_value());
  for (double g : *x.grad) CHECK(g == 1.0);
  REQUIRE(y.grad.has_value());
  for (double g : *y.grad) CHECK(g == 0.0);
}

TEST_CASE("backward: non-scalar loss is a contract error") {
  Tensor x = Tensor::filled(2, 2, 1.0);
  Tape tape;
  Var vx = tape.leaf(x);
  CHECK_THROWS_AS(tape.backward(vx), std::invalid_argument);
}

TEST_CASE("backward: record is consumed") {
  Tensor x = Tensor::filled(1, 3, 1.0);
  Tape tape;
  Var loss = tape.sum(tape.leaf(x));
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
}

TEST_CASE("backward of masked softmax matches finite differences (step 1e-5)") {
  Rng rng(5);
  Tensor x = Tensor::randn(4, 4, rng, 0.5);
  const Tensor coeff = Tensor::randn(4, 4, rng);
  const AttentionMask mask = AttentionMask::full(4, 4);

  Tape tape;
  Var vx = tape.leaf(x);
  tape.backward(tape.sum(tape.mul(tape.softmax_masked(vx, mask), tape.input(coeff))));
  Tensor analytic = x;
  analytic.data = *x.grad;

  auto f = [&](const Tensor& probe) {
    Tape t;
    return t.value(t.sum(t.mul(t.softmax_masked(t.input(probe), mask), t.input(coeff))))
        .scalar();
  };
  CHECK(finite_difference_check(f, x, analytic, 1e-5) < 1e-5);
}

TEST_CASE("finite_difference_check: quadratic and constant oracles") {
  Tensor x = Tensor::from_rows({{1.0, 2.0}});
  auto quadratic = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    return s;
  };
  const Tensor analytic = Tensor::from_rows({{2.0, 4.0}});
  CHECK(finite_difference_check(quadratic, x, analytic, 1e-4) < 1e-8);

  auto constant = [](const Tensor&) { return 3.0; };
  CHECK(finite_difference_check(constant, x, Tensor::zeros(1, 2), 1e-4) == 0.0);

  CHECK_THROWS_AS(finite_difference_check(quadratic, x, analytic, 0.0), std::invalid_argument);
}

TEST_CASE("finite differences of full attention at n=8, d=4") {
  CHECK(kernel_gradcheck_error(KernelKind::full, 8, 4, 0) < 1e-4);
}

TEST_CASE("every tape primitive passes its gradient check") {
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) CHECK(primitive_gradcheck_error(seed) < 1e-4);
}

TEST_CASE("taped replay determinism: identical seeds give bitwise-identical losses") {
  auto run = [] {
    Rng rng(42);
    Tensor x = Tensor::randn(6, 6, rng);
    const Tensor coeff = Tensor::randn(6, 6, rng);
    Tape tape;
    Var vx = tape.leaf(x);
    Var loss =
        tape.sum(tape.mul(tape.softmax_masked(tape.matmul(vx, vx), AttentionMask::full(6, 6)),
                          tape.input(coeff)));
    return tape.value(loss).scalar();
  };
  CHECK(run() == run());
}
