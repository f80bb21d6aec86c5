#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "asil/autodiff.hpp"
#include "asil/errors.hpp"

using namespace asil;
using namespace asil::ad;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

double max_error(const std::vector<GradCheckEntry>& entries) {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.relative_error);
  return worst;
}

}  // namespace

TEST_CASE("square derivative") {
  Tensor x("x", Matrix::Constant(1, 1, 3.0));
  Tape tape;
  tape.backward(square(tape.leaf(x)));
  CHECK(x.grad(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("softmax rows sum has zero gradient") {
  std::mt19937_64 rng(1);
  Tensor z("z", random_matrix(rng, 3, 4));
  Tape tape;
  tape.backward(sum(softmax_rows(tape.leaf(z))));
  CHECK(z.grad.cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("linear form gradient") {
  std::mt19937_64 rng(2);
  const Matrix w = random_matrix(rng, 5, 1);
  Tensor x("x", random_matrix(rng, 5, 1));
  Tape tape;
  tape.backward(sum(tape.constant(w) * tape.leaf(x)));
  CHECK(x.grad.isApprox(w));
}

TEST_CASE("backward contract") {
  Tape tape;
  const Var c = tape.scalar(2.0);
  CHECK_NOTHROW(tape.backward(c * c));

  Tensor x("x", Matrix::Ones(2, 2));
  Tape t2;
  CHECK_THROWS_AS(t2.backward(t2.leaf(x)), ValidationError);
  Tape t3;
  const Var loss = sum(t3.leaf(x));
  t3.backward(loss);
  CHECK_THROWS_AS(t3.backward(loss), StateError);
}

TEST_CASE("shape and domain errors") {
  Tape tape;
  const Var a = tape.constant(Matrix::Ones(2, 3));
  const Var b = tape.constant(Matrix::Ones(3, 2));
  CHECK_THROWS_AS(a + b, DimensionError);
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
  CHECK_THROWS_AS(log2(tape.constant(Matrix::Zero(1, 1))), DomainError);
  CHECK_THROWS_AS(sqrt(tape.constant(Matrix::Constant(1, 1, -1.0))), DomainError);
}

TEST_CASE("matmul chain matches finite differences") {
  std::mt19937_64 rng(3);
  Tensor a("a", random_matrix(rng, 4, 4));
  Tensor b("b", random_matrix(rng, 4, 4));
  Tensor c("c", random_matrix(rng, 4, 4));
  Tensor* params[] = {&a, &b, &c};
  const auto entries = gradient_check(
      [&](Tape& t) { return sum(square(matmul(matmul(t.leaf(a), t.leaf(b)), t.leaf(c)))); }, params);
  CHECK(max_error(entries) <= 1e-4);
}

TEST_CASE("every elementwise and structural op matches finite differences") {
  std::mt19937_64 rng(4);
  Tensor x("x", random_matrix(rng, 3, 4, 0.2, 1.5));
  Tensor y("y", random_matrix(rng, 3, 4, 0.2, 1.5));
  Tensor arg("arg", random_matrix(rng, 3, 4, 1.2, 3.0));
  Tensor* params[] = {&x, &y, &arg};
  // Keeps leaky_relu and maximum away from their kinks.
  Matrix shift = Matrix::Constant(3, 4, 0.7);
  const auto entries = gradient_check(
      [&](Tape& t) {
        const Var a = t.leaf(x);
        const Var b = t.leaf(y);
        std::vector<Var> terms;
        terms.push_back(sum(a + b));
        terms.push_back(sum(a - b * 2.0));
        terms.push_back(sum(a * b));
        terms.push_back(sum(a / b));
        terms.push_back(sum(exp(a)));
        terms.push_back(sum(log2(a)));
        terms.push_back(sum(sqrt(b)));
        terms.push_back(sum(sigmoid(a - b)));
        terms.push_back(sum(leaky_relu(a - t.constant(shift), 0.2)));
        terms.push_back(sum(maximum(a, 0.1)));
        terms.push_back(sum(acosh_stable(t.leaf(arg))));
        terms.push_back(sum(asinh_sqrt(b)));
        terms.push_back(sum(square(broadcast(mean(a) * sum(b), 2, 2))));
        terms.push_back(sum(square(transpose(a))) * 0.5);
        terms.push_back(sum(square(sum_rows(a))));
        terms.push_back(sum(square(sum_cols(b))));
        terms.push_back(sum(square(broadcast_rows(sum_cols(a), 2))));
        terms.push_back(sum(square(broadcast_cols(sum_rows(b), 3))));
        const Var parts[] = {a, b};
        terms.push_back(sum(square(concat_cols(parts))));
        terms.push_back(sum(square(concat_rows(parts))));
        terms.push_back(sum(square(slice_cols(a, 1, 2))));
        terms.push_back(sum(square(reshape(b, 2, 6))));
        terms.push_back(sum(square(softmax_rows(a * b))));
        const NodeId idx[] = {2, 0, 2};
        terms.push_back(sum(square(gather_rows(a, idx))));
        Var total = terms.front();
        for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
        return total;
      },
      params);
  for (const auto& e : entries) CHECK_MESSAGE(e.relative_error <= 1e-4, e.name);
}

TEST_CASE("sparse ops match finite differences") {
  std::mt19937_64 rng(5);
  const auto pattern = SparsePattern::from_pairs(3, 3, {{0, 0}, {0, 2}, {1, 1}, {2, 0}, {2, 1}, {2, 2}});
  Tensor v("v", random_matrix(rng, 6, 1, 0.2, 1.0));
  Tensor d("d", random_matrix(rng, 3, 2));
  Tensor* params[] = {&v, &d};
  const auto entries = gradient_check(
      [&](Tape& t) {
        const Var vals = t.leaf(v);
        const Var a = sum(square(segment_softmax(vals, pattern)));
        const Var b = sum(square(segment_sum(vals, pattern)));
        const Var c = sum(square(spmm(pattern, vals, t.leaf(d))));
        return a + b + c;
      },
      params);
  CHECK(max_error(entries) <= 1e-4);
}

TEST_CASE("segment softmax rows sum to one") {
  const auto pattern = SparsePattern::from_pairs(2, 3, {{0, 0}, {0, 2}, {1, 1}});
  Tape tape;
  Matrix v(3, 1);
  v << 0.3, -1.2, 5.0;
  const Var s = segment_softmax(tape.constant(v), pattern);
  CHECK(s.value()(0, 0) + s.value()(1, 0) == doctest::Approx(1.0));
  CHECK(s.value()(2, 0) == doctest::Approx(1.0));
  CHECK(pattern->find(0, 2) == 1);
  CHECK(pattern->find(1, 0) == SparsePattern::npos);
}

TEST_CASE("lorentz row normalization matches finite differences") {
  std::mt19937_64 rng(6);
  Matrix m = random_matrix(rng, 3, 3, -0.3, 0.3);
  m.col(0).array() += 2.0;
  Tensor x("x", m);
  Tensor* params[] = {&x};
  const auto entries = gradient_check(
      [&](Tape& t) { return sum(square(lorentz_normalize_rows(t.leaf(x), -1.0))); }, params);
  CHECK(max_error(entries) <= 1e-4);
}

TEST_CASE("bounded gradient of the stable arccosh at coincident points") {
  Tensor x("x", Matrix::Constant(1, 1, 1.0));
  Tape tape;
  tape.backward(sum(acosh_stable(tape.leaf(x))));
  CHECK(std::isfinite(x.grad(0, 0)));
  Tensor u("u", Matrix::Zero(1, 1));
  Tape t2;
  t2.backward(sum(asinh_sqrt(t2.leaf(u))));
  CHECK(u.grad(0, 0) == 0.0);
}

TEST_CASE("adam") {
  Tensor x("x", Matrix::Constant(1, 1, 1.0));
  Adam zero({&x}, {.lr = 0.1});
  x.grad = Matrix::Zero(1, 1);
  zero.step();
  CHECK(x.data(0, 0) == 1.0);

  Adam opt({&x}, {.lr = 0.1});
  opt.zero_grad();
  {
    Tape tape;
    tape.backward(square(tape.leaf(x)));
  }
  opt.step();
  CHECK(x.data(0, 0) < 1.0);

  Matrix start(1, 2);
  start << 3.0, -2.0;
  Tensor q("q", start);
  Adam quad({&q}, {.lr = 0.05});
  Matrix scale(1, 2);
  scale << 1.0, 4.0;
  for (int i = 0; i < 500; ++i) {
    quad.zero_grad();
    Tape tape;
    const Var diff = tape.leaf(q) - tape.constant(Matrix::Constant(1, 2, 0.5));
    tape.backward(sum(tape.constant(scale) * square(diff)));
    quad.step();
  }
  const double f = (scale.array() * (q.data.array() - 0.5).square()).sum();
  CHECK(f <= 1e-4);

  Tensor bad("bad", Matrix::Zero(1, 1));
  Adam nan_opt({&bad});
  bad.grad = Matrix::Constant(1, 1, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_WITH_AS(nan_opt.step(), doctest::Contains("bad"), TrainingError);
}

TEST_CASE("gradients are bitwise deterministic") {
  auto run = [] {
    std::mt19937_64 rng(9);
    Tensor a("a", random_matrix(rng, 4, 4));
    Tape tape;
    tape.backward(sum(softmax_rows(matmul(tape.leaf(a), tape.leaf(a)))  * tape.constant(random_matrix(rng, 4, 4))));
    return a.grad;
  };
  CHECK(run() == run());
}
