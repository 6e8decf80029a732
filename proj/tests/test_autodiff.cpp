#include <doctest.h>

#include <cmath>
#include <vector>

#include "iac/autodiff.hpp"
#include "iac/rng.hpp"
#include "support/fd_check.hpp"

using namespace iac;

namespace {

Tensor randn(std::vector<int> shape, Rng& rng, real sd = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, sd);
  return t;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("forward values of the elementwise ops") {
  Var a(Tensor::from({3}, {1, -2, 3}));
  Var b(Tensor::from({3}, {10, 20, 30}));
  CHECK(add(a, b).value()[1] == 18.0);
  CHECK(sub(b, a).value()[2] == 27.0);
  CHECK(mul(a, b).value()[0] == 10.0);
  CHECK(scale(a, -2.0).value()[2] == -6.0);
  CHECK(relu(a).value()[1] == 0.0);
  CHECK(relu(a).value()[2] == 3.0);
  CHECK(sigmoid(Var(Tensor::from({1}, {0.0}))).value()[0] ==
        doctest::Approx(0.5));
  CHECK(sum(a).value()[0] == 2.0);
  CHECK(sum(a).shape().empty());
}

TEST_CASE("softmax forward is a simplex and matches the closed form") {
  Var l(Tensor::from({3}, {std::log(2.0), 0.0, 0.0}));
  Var s = softmax(l);
  CHECK(s.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.value()[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s.value()[2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("row extracts a rank-1 view of a rank-2 value") {
  Var m(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var r1 = row(m, 1);
  CHECK(r1.shape() == std::vector<int>{3});
  CHECK(r1.value()[0] == 4.0);
  CHECK(r1.value()[2] == 6.0);
}

TEST_CASE("weighted_sum combines same-shape tensors") {
  Var x1(Tensor::full({2, 2}, 1.0));
  Var x2(Tensor::full({2, 2}, 2.0));
  Var w(Tensor::from({2}, {0.25, 0.75}));
  Var y = weighted_sum({x1, x2}, w);
  for (int64_t i = 0; i < 4; ++i)
    CHECK(y.value()[i] == doctest::Approx(1.75).epsilon(1e-12));
}

TEST_CASE("backward: d(sum(a*b))/da = b") {
  Var a(Tensor::from({3}, {1, 2, 3}), true);
  Var b(Tensor::from({3}, {4, 5, 6}), true);
  Var loss = sum(mul(a, b));
  backward(loss);
  for (int i = 0; i < 3; ++i) {
    CHECK(a.grad()[i] == b.value()[i]);
    CHECK(b.grad()[i] == a.value()[i]);
  }
}

TEST_CASE("gradients accumulate across backward calls until zeroed") {
  Var a(Tensor::from({2}, {1, 1}), true);
  backward(sum(scale(a, 3.0)));
  CHECK(a.grad()[0] == 3.0);
  backward(sum(scale(a, 3.0)));
  CHECK(a.grad()[0] == 6.0);  // second sweep adds on top
  a.zero_grad();
  CHECK(a.grad()[0] == 0.0);
}

TEST_CASE("requires_grad gates propagation") {
  Var a(Tensor::from({2}, {1, 2}), false);
  Var b(Tensor::from({2}, {3, 4}), true);
  Var loss = sum(mul(a, b));
  backward(loss);
  CHECK(b.grad()[0] == 1.0);
  CHECK(a.grad().size() == 0);  // never allocated
}

TEST_CASE("make_op wires custom backprop into the sweep") {
  Var a(Tensor::from({2}, {2, 3}), true);
  // y = a^2 elementwise, then sum
  Tensor y(a.shape());
  for (int64_t i = 0; i < y.size(); ++i)
    y[i] = a.value()[i] * a.value()[i];
  Var sq = make_op(y, {a}, [](detail::Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    Tensor& g = p->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      g[i] += 2.0 * p->value[i] * n.grad[i];
  });
  backward(sum(sq));
  CHECK(a.grad()[0] == 4.0);
  CHECK(a.grad()[1] == 6.0);
}

TEST_CASE("fd: elementwise chain relu(sigmoid(a*b)+a)") {
  Rng rng(314);
  Var a(randn({2, 3}, rng), true);
  Var b(randn({2, 3}, rng), true);
  auto rep = testsupport::check_gradients(
      {a, b},
      [&]() { return sum(relu(add(sigmoid(mul(a, b)), a))); });
  CHECK(rep.worst_rel < 1e-6);
}

TEST_CASE("fd: softmax + row + weighted_sum") {
  Rng rng(2024);
  Var logits(randn({2, 4}, rng), true);
  Var x0(randn({1, 2, 3, 3}, rng), true);
  Var x1(randn({1, 2, 3, 3}, rng), true);
  Var x2(randn({1, 2, 3, 3}, rng), true);
  Var x3(randn({1, 2, 3, 3}, rng), true);
  Var probe(randn({1, 2, 3, 3}, rng));
  auto rep = testsupport::check_gradients(
      {logits, x0, x1, x2, x3}, [&]() {
        Var w = softmax(row(logits, 1));
        Var y = weighted_sum({x0, x1, x2, x3}, w);
        return sum(mul(y, probe));
      });
  CHECK(rep.worst_rel < 1e-6);
}

TEST_CASE("sum over a scalar is the identity map") {
  Var s(Tensor::scalar(4.0), true);
  Var loss = sum(s);
  backward(loss);
  CHECK(loss.value()[0] == 4.0);
  CHECK(s.grad()[0] == 1.0);
}

TEST_CASE("shape mismatches are rejected") {
  Var a(Tensor({2, 2}));
  Var b(Tensor({3}));
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(mul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(weighted_sum({a, b}, Var(Tensor::from({2}, {1, 1}))),
                  std::invalid_argument);
}

}  // TEST_SUITE
