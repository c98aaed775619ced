#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "saeaudit/errors.hpp"
#include "saeaudit/matrix.hpp"
#include "saeaudit/numerics.hpp"
#include "saeaudit/rng.hpp"

using namespace saeaudit;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("matmul identity") {
  Rng rng(1);
  const Matrix m = random_matrix(3, 3, rng);
  const Matrix out = matmul(identity(3), m);
  CHECK(out == m);
}

TEST_CASE("matmul hand computation") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{0}, {1}});
  const Matrix c = matmul(a, b);
  CHECK(c(0, 0) == 2.0);
  CHECK(c(1, 0) == 4.0);
}

TEST_CASE("matmul vs naive triple-loop oracle") {
  Rng rng(2);
  const Matrix a = random_matrix(5, 7, rng);
  const Matrix b = random_matrix(7, 3, rng);
  CHECK(oracles::max_abs_diff(matmul(a, b), oracles::naive_matmul(a, b)) <= 1e-12);
}

TEST_CASE("matmul oracle property on random 8x8 instances") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(8, 8, rng);
    const Matrix b = random_matrix(8, 8, rng);
    CHECK(oracles::max_abs_diff(matmul(a, b), oracles::naive_matmul(a, b)) <= 1e-12);
  }
}

TEST_CASE("matmul shape error") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST_CASE("transposed variants match the oracle") {
  Rng rng(4);
  const Matrix a = random_matrix(6, 4, rng);
  const Matrix b = random_matrix(6, 5, rng);
  CHECK(oracles::max_abs_diff(matmul_tn(a, b), oracles::naive_matmul(transpose(a), b)) <= 1e-12);
  const Matrix c = random_matrix(4, 6, rng);
  const Matrix d = random_matrix(5, 6, rng);
  CHECK(oracles::max_abs_diff(matmul_nt(c, d), oracles::naive_matmul(c, transpose(d))) <= 1e-12);
}

TEST_CASE("parallel matmul is bitwise identical to serial") {
  Rng rng(5);
  const Matrix a = random_matrix(64, 200, rng);
  const Matrix b = random_matrix(200, 180, rng);
  set_matmul_threads(1);
  const Matrix serial = matmul(a, b);
  set_matmul_threads(4);
  const Matrix parallel = matmul(a, b);
  set_matmul_threads(1);
  CHECK(serial == parallel);
}

TEST_CASE("softmax cross entropy: uniform logits give ln C") {
  const std::size_t C = 7;
  Matrix logits(3, C, 0.25);
  const std::vector<int> labels = {0, 3, 6};
  const auto out = softmax_cross_entropy(logits, labels);
  CHECK(out.loss == doctest::Approx(std::log(double(C))).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy: concentrated logits drive loss to zero") {
  Matrix logits(2, 4);
  logits(0, 1) = 1e4;
  logits(1, 2) = 1e4;
  const std::vector<int> labels = {1, 2};
  const auto out = softmax_cross_entropy(logits, labels);
  CHECK(out.loss <= 1e-12);
  CHECK(std::isfinite(out.loss));
}

TEST_CASE("softmax cross entropy gradient vs central finite differences") {
  Rng rng(6);
  Matrix logits = random_matrix(4, 5, rng);
  const std::vector<int> labels = {2, 0, 4, 1};
  const auto analytic = softmax_cross_entropy(logits, labels);
  const double eps = 1e-5;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      const double fd = oracles::central_diff(
          [&](double x) {
            Matrix probe = logits;
            probe(i, j) = x;
            return softmax_cross_entropy(probe, labels).loss;
          },
          logits(i, j), eps);
      CHECK(oracles::rel_err(analytic.grad(i, j), fd) <= 1e-4);
    }
  }
}

TEST_CASE("softmax cross entropy input validation") {
  Matrix logits(2, 3);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, std::vector<int>{0}), ShapeError);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, std::vector<int>{0, 3}), InputError);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, std::vector<int>{0, -1}), InputError);
}

TEST_CASE("sgd: zero gradient leaves params unchanged") {
  Matrix p = Matrix::from_rows({{1.5, -2.0}});
  const Matrix before = p;
  Matrix g(1, 2);
  OptimizerState opt = OptimizerState::sgd_momentum(0.1, 0.9);
  Matrix* params[] = {&p};
  const Matrix grads[] = {g};
  sgd_step(params, grads, opt);
  sgd_step(params, grads, opt);
  CHECK(p == before);
}

TEST_CASE("sgd: lr=1, mu=0, p=0, g=1 gives p=-1") {
  Matrix p(1, 1);
  Matrix g(1, 1, 1.0);
  OptimizerState opt = OptimizerState::sgd(1.0);
  Matrix* params[] = {&p};
  const Matrix grads[] = {g};
  sgd_step(params, grads, opt);
  CHECK(p(0, 0) == -1.0);
}

TEST_CASE("sgd momentum: two steps match the hand-unrolled recurrence") {
  const double lr = 0.1, mu = 0.9;
  const double g1 = 0.5, g2 = -0.25;
  Matrix p(1, 1, 2.0);
  OptimizerState opt = OptimizerState::sgd_momentum(lr, mu);
  Matrix* params[] = {&p};
  Matrix g(1, 1, g1);
  {
    const Matrix grads[] = {g};
    sgd_step(params, grads, opt);
  }
  g(0, 0) = g2;
  {
    const Matrix grads[] = {g};
    sgd_step(params, grads, opt);
  }
  // v1 = g1; p1 = p0 - lr*v1; v2 = mu*v1 + g2; p2 = p1 - lr*v2
  const double v1 = g1;
  const double p1 = 2.0 - lr * v1;
  const double v2 = mu * v1 + g2;
  const double p2 = p1 - lr * v2;
  CHECK(p(0, 0) == p2);
}

TEST_CASE("sgd shape validation") {
  Matrix p(2, 2);
  Matrix g(2, 3);
  OptimizerState opt = OptimizerState::sgd(0.1);
  Matrix* params[] = {&p};
  const Matrix grads[] = {g};
  CHECK_THROWS_AS(sgd_step(params, grads, opt), ShapeError);
}

TEST_CASE("topk_mask hand cases") {
  const std::vector<double> v = {3, 1, 2};
  CHECK(topk_mask(v, 2) == std::vector<double>{3, 0, 2});
  CHECK(topk_mask(v, 3) == v);
  const std::vector<double> ties = {1, 1, 1, 0};
  CHECK(topk_mask(ties, 2) == std::vector<double>{1, 1, 0, 0});
}

TEST_CASE("topk_mask input validation") {
  CHECK_THROWS_AS(topk_mask(std::vector<double>{1.0}, 2), InputError);
}

TEST_CASE("topk_mask nonzero count property") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.index(32);
    const std::size_t k = rng.index(n + 1);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    const std::vector<double> masked = topk_mask(v, k);
    std::size_t nonzero = 0;
    for (double x : masked) {
      if (x != 0.0) ++nonzero;
    }
    CHECK(nonzero <= k);
    // with k distinct nonzero magnitudes present, exactly k survive
    std::size_t distinct_nonzero = 0;
    for (double x : v) {
      if (x != 0.0) ++distinct_nonzero;
    }
    if (distinct_nonzero >= k) {
      std::vector<double> sorted = v;
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      if (k > 0 && k < n && sorted[k - 1] != 0.0) CHECK(nonzero == k);
    }
  }
}

TEST_CASE("rng reproducibility: same seed, identical stream") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(1234), d(1234);
  for (int i = 0; i < 100; ++i) {
    CHECK(c.uniform() == d.uniform());
    CHECK(c.normal() == d.normal());
  }
}

TEST_CASE("rng derive decorrelates tags") {
  Rng a = Rng::derive(42, "stage-a");
  Rng b = Rng::derive(42, "stage-b");
  CHECK(a.next_u64() != b.next_u64());
  Rng a2 = Rng::derive(42, "stage-a");
  a = Rng::derive(42, "stage-a");
  CHECK(a.next_u64() == a2.next_u64());
}

TEST_CASE("rng index stays in range and rejects n=0") {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) CHECK(rng.index(7) < 7);
  CHECK_THROWS_AS(rng.index(0), InputError);
}

TEST_CASE("matrix outputs stay finite on random products") {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_matrix(6, 6, rng);
    const Matrix b = random_matrix(6, 6, rng);
    CHECK(matmul(a, b).all_finite());
  }
}
