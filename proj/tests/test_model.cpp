#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "saeaudit/classifier.hpp"
#include "saeaudit/errors.hpp"

using namespace saeaudit;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

LayeredClassifier small_model(Rng& rng) { return LayeredClassifier(5, 6, 3, 4, rng); }

TrainTest tiny_task(Rng& rng) {
  SyntheticSpec spec;
  spec.num_classes = 3;
  spec.samples_per_class = 60;
  spec.input_dim = 6;
  spec.class_separation = 8.0;
  spec.intra_noise = 0.5;
  return generate_synthetic(spec, rng);
}

}  // namespace

TEST_CASE("zero weights and biases give all-zero logits") {
  Rng rng(21);
  LayeredClassifier m = small_model(rng);
  for (Matrix* p : m.params()) p->fill(0.0);
  const Matrix logits = m.forward(random_matrix(4, 5, rng));
  for (double v : logits.data()) CHECK(v == 0.0);
}

TEST_CASE("single-layer linear model matches the matmul oracle") {
  Rng rng(22);
  LayeredClassifier m(5, 6, 1, 4, rng);
  const Matrix x = random_matrix(7, 5, rng);
  // positive-orthant input and weights so relu is the identity on layer 1
  LayeredClassifier pos = m;
  for (Matrix* p : pos.params())
    for (double& v : p->data()) v = std::abs(v);
  Matrix xp = x;
  for (double& v : xp.data()) v = std::abs(v);

  const Matrix h = oracles::naive_matmul(xp, pos.hidden_weight(1));
  Matrix expect(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j) expect(i, j) = h(i, j);  // bias is zero
  const Matrix logits_expect = oracles::naive_matmul(expect, pos.head_weight());
  const Matrix logits = pos.forward(xp);
  CHECK(oracles::max_abs_diff(logits, logits_expect) <= 1e-10);
}

TEST_CASE("batched forward equals stacked per-sample forwards bitwise") {
  Rng rng(23);
  const LayeredClassifier m = small_model(rng);
  const Matrix x = random_matrix(6, 5, rng);
  const Matrix batched = m.forward(x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    Matrix one(1, x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) one(0, j) = x(i, j);
    const Matrix single = m.forward(one);
    for (std::size_t c = 0; c < batched.cols(); ++c) {
      CHECK(batched(i, c) == single(0, c));
    }
  }
}

TEST_CASE("splice identity: forward_from(forward_capture) == forward bitwise") {
  Rng rng(24);
  const LayeredClassifier m = small_model(rng);
  const Matrix x = random_matrix(8, 5, rng);
  const Matrix want = m.forward(x);
  for (int layer = 1; layer <= m.num_hidden(); ++layer) {
    auto [cap, logits] = m.forward_capture(x, layer);
    CHECK(logits == want);
    CHECK(m.forward_from(cap) == want);
  }
}

TEST_CASE("captured activation matches manual layer-by-layer recomputation") {
  Rng rng(25);
  const LayeredClassifier m = small_model(rng);
  const Matrix x = random_matrix(3, 5, rng);
  Matrix h = x;
  for (int l = 1; l <= 2; ++l) {
    Matrix z = oracles::naive_matmul(h, m.hidden_weight(l));
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j) {
        z(i, j) += m.hidden_bias(l)(0, j);
        if (z(i, j) < 0.0) z(i, j) = 0.0;
      }
    h = std::move(z);
  }
  auto [cap, logits] = m.forward_capture(x, 2);
  CHECK(oracles::max_abs_diff(cap.values, h) <= 1e-12);
}

TEST_CASE("capture at layer 1 on zero input is relu(bias)") {
  Rng rng(26);
  LayeredClassifier m = small_model(rng);
  for (std::size_t j = 0; j < m.hidden_bias(1).cols(); ++j) {
    m.hidden_bias(1)(0, j) = (j % 2 == 0) ? 0.5 : -0.5;
  }
  Matrix x(2, 5);
  auto [cap, logits] = m.forward_capture(x, 1);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < cap.values.cols(); ++j) {
      CHECK(cap.values(i, j) == ((j % 2 == 0) ? 0.5 : 0.0));
    }
}

TEST_CASE("forward_from at the last layer applies only the head") {
  Rng rng(27);
  const LayeredClassifier m = small_model(rng);
  const Matrix h = random_matrix(4, 6, rng);
  const Matrix logits = m.forward_from({m.num_hidden(), h});
  Matrix expect = oracles::naive_matmul(h, m.head_weight());
  for (std::size_t i = 0; i < expect.rows(); ++i)
    for (std::size_t j = 0; j < expect.cols(); ++j) expect(i, j) += m.head_bias()(0, j);
  CHECK(oracles::max_abs_diff(logits, expect) <= 1e-12);
}

TEST_CASE("layer range validation") {
  Rng rng(28);
  const LayeredClassifier m = small_model(rng);
  const Matrix x = random_matrix(2, 5, rng);
  CHECK_THROWS_AS(m.forward_capture(x, 0), InputError);
  CHECK_THROWS_AS(m.forward_capture(x, 4), InputError);
  CHECK_THROWS_AS(m.forward_from({2, random_matrix(2, 7, rng)}), ShapeError);
  CHECK_THROWS_AS(m.forward(random_matrix(2, 4, rng)), ShapeError);
}

TEST_CASE("end-to-end parameter gradients match finite differences") {
  Rng rng(29);
  LayeredClassifier m(4, 5, 2, 3, rng);
  const Matrix x = random_matrix(6, 4, rng);
  const std::vector<int> labels = {0, 1, 2, 0, 1, 2};
  const double l2 = 0.01;

  std::vector<Matrix> grads;
  classifier_loss_and_grads(m, x, labels, l2, grads);

  std::vector<Matrix*> params = m.params();
  const double eps = 1e-5;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      double& w = params[p]->data()[i];
      const double fd = oracles::central_diff(
          [&](double v) {
            const double saved = w;
            w = v;
            std::vector<Matrix> scratch;
            const double loss = classifier_loss_and_grads(m, x, labels, l2, scratch);
            w = saved;
            return loss;
          },
          w, eps);
      CHECK(oracles::rel_err(grads[p].data()[i], fd) <= 1e-4);
    }
  }
}

TEST_CASE("epochs=0 returns the initialized model at chance accuracy") {
  Rng rng(30);
  const TrainTest data = tiny_task(rng);
  TrainConfig cfg;
  cfg.epochs = 0;
  Rng train_rng(31);
  const Checkpoint ckpt = train_classifier(data, 8, 2, cfg, train_rng);
  CHECK(ckpt.epochs == 0);
  CHECK(ckpt.test_accuracy < 0.9);  // untrained: nowhere near the trained regime
}

TEST_CASE("separable task trains to 100% and checkpoints round-trip bitwise") {
  Rng rng(32);
  const TrainTest data = tiny_task(rng);
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.lr = 0.05;
  Rng t1(33);
  Checkpoint ckpt = train_classifier(data, 8, 2, cfg, t1);
  ckpt.seed = 33;
  CHECK(ckpt.test_accuracy == 1.0);

  Rng t2(33);
  const Checkpoint again = train_classifier(data, 8, 2, cfg, t2);
  CHECK(ckpt.model == again.model);

  const auto path = std::filesystem::temp_directory_path() / "saeaudit_test_model.ckpt";
  save_checkpoint(ckpt, path);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.model == ckpt.model);
  CHECK(loaded.seed == ckpt.seed);
  CHECK(loaded.train_accuracy == ckpt.train_accuracy);
  std::filesystem::remove(path);
}

TEST_CASE("fit respects the trainable mask") {
  Rng rng(34);
  const TrainTest data = tiny_task(rng);
  Rng init(35);
  LayeredClassifier m(6, 8, 2, 3, init);
  const Matrix w1_before = m.hidden_weight(1);
  const Matrix head_before = m.head_weight();
  FitOptions opts;
  opts.epochs = 2;
  opts.lr = 0.05;
  opts.trainable.assign(6, false);
  opts.trainable[4] = opts.trainable[5] = true;  // head only
  Rng fit_rng(36);
  fit(m, data.train, opts, fit_rng);
  CHECK(m.hidden_weight(1) == w1_before);
  CHECK_FALSE(m.head_weight() == head_before);
}

TEST_CASE("training diverges into a TrainingError, not NaN silence") {
  Rng rng(37);
  const TrainTest data = tiny_task(rng);
  Rng init(38);
  LayeredClassifier m(6, 8, 2, 3, init);
  FitOptions opts;
  opts.epochs = 50;
  opts.lr = 1e6;  // guaranteed blow-up
  Rng fit_rng(39);
  CHECK_THROWS_AS(fit(m, data.train, opts, fit_rng), TrainingError);
}
