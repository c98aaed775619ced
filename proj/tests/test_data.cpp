#include <doctest.h>

#include <filesystem>
#include <set>

#include "saeaudit/classifier.hpp"
#include "saeaudit/dataset.hpp"
#include "saeaudit/errors.hpp"

using namespace saeaudit;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.num_classes = 4;
  s.samples_per_class = 50;
  s.input_dim = 8;
  s.class_separation = 6.0;
  s.intra_noise = 1.0;
  return s;
}

}  // namespace

TEST_CASE("separable limit: a linear probe reaches 100% test accuracy") {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = 100;
  spec.input_dim = 4;
  spec.class_separation = 100.0;
  spec.intra_noise = 0.01;
  Rng rng(11);
  const TrainTest data = generate_synthetic(spec, rng);

  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.lr = 0.05;
  Rng train_rng(12);
  const Checkpoint probe = train_classifier(data, 8, 1, cfg, train_rng);
  CHECK(probe.test_accuracy == 1.0);
}

TEST_CASE("same seed twice gives bitwise-identical datasets") {
  const SyntheticSpec spec = small_spec();
  Rng a(77), b(77);
  const TrainTest da = generate_synthetic(spec, a);
  const TrainTest db = generate_synthetic(spec, b);
  CHECK(da.train.inputs == db.train.inputs);
  CHECK(da.test.inputs == db.test.inputs);
  CHECK(da.train.labels == db.train.labels);
  CHECK(da.test.labels == db.test.labels);
}

TEST_CASE("stratification: per-class counts in train and test") {
  const SyntheticSpec spec = small_spec();
  Rng rng(13);
  const TrainTest data = generate_synthetic(spec, rng);
  for (int c = 0; c < spec.num_classes; ++c) {
    std::size_t train_n = 0, test_n = 0;
    for (int y : data.train.labels)
      if (y == c) ++train_n;
    for (int y : data.test.labels)
      if (y == c) ++test_n;
    CHECK(train_n == 40);
    CHECK(test_n == 10);
  }
}

TEST_CASE("class means sit pairwise at least class_separation apart") {
  SyntheticSpec spec = small_spec();
  spec.intra_noise = 1e-4;  // tiny noise so sample means track class means
  Rng rng(14);
  const TrainTest data = generate_synthetic(spec, rng);
  std::vector<std::vector<double>> means(spec.num_classes,
                                         std::vector<double>(spec.input_dim, 0.0));
  std::vector<int> counts(spec.num_classes, 0);
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    const int y = data.train.labels[i];
    ++counts[y];
    for (int j = 0; j < spec.input_dim; ++j) means[y][j] += data.train.inputs(i, j);
  }
  for (int c = 0; c < spec.num_classes; ++c)
    for (int j = 0; j < spec.input_dim; ++j) means[c][j] /= counts[c];
  for (int a = 0; a < spec.num_classes; ++a) {
    for (int b = a + 1; b < spec.num_classes; ++b) {
      double d2 = 0.0;
      for (int j = 0; j < spec.input_dim; ++j) {
        const double d = means[a][j] - means[b][j];
        d2 += d * d;
      }
      CHECK(std::sqrt(d2) >= spec.class_separation * 0.99);
    }
  }
}

TEST_CASE("generation input validation") {
  Rng rng(15);
  SyntheticSpec spec = small_spec();
  spec.input_dim = 3;  // fewer dims than classes
  CHECK_THROWS_AS(generate_synthetic(spec, rng), InputError);
  spec = small_spec();
  spec.class_separation = 0.0;
  CHECK_THROWS_AS(generate_synthetic(spec, rng), InputError);
  spec = small_spec();
  spec.samples_per_class = 3;
  CHECK_THROWS_AS(generate_synthetic(spec, rng), InputError);
}

TEST_CASE("split_forget_retain partitions the dataset") {
  const SyntheticSpec spec = small_spec();
  Rng rng(16);
  const TrainTest data = generate_synthetic(spec, rng);
  const ForgetRetainSplit split = split_forget_retain(data.train, 2);

  CHECK(split.forget.size() == 40);
  CHECK(split.retain.size() == 120);
  for (int y : split.forget.labels) CHECK(y == 2);
  for (int y : split.retain.labels) CHECK(y != 2);

  // multiset equality of rows: forget + retain recovers the parent
  std::multiset<std::vector<double>> parent, parts;
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    std::vector<double> row(data.train.inputs.row_ptr(i),
                            data.train.inputs.row_ptr(i) + data.train.inputs.cols());
    row.push_back(double(data.train.labels[i]));
    parent.insert(std::move(row));
  }
  const auto add_rows = [&parts](const Dataset& ds) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::vector<double> row(ds.inputs.row_ptr(i), ds.inputs.row_ptr(i) + ds.inputs.cols());
      row.push_back(double(ds.labels[i]));
      parts.insert(std::move(row));
    }
  };
  add_rows(split.forget);
  add_rows(split.retain);
  CHECK(parent == parts);
}

TEST_CASE("split_forget_retain rejects absent classes") {
  const SyntheticSpec spec = small_spec();
  Rng rng(17);
  const TrainTest data = generate_synthetic(spec, rng);
  CHECK_THROWS_AS(split_forget_retain(data.train, 9), InputError);
  CHECK_THROWS_AS(split_forget_retain(data.train, -1), InputError);
}

TEST_CASE("dataset save/load round-trips bitwise") {
  const SyntheticSpec spec = small_spec();
  Rng rng(18);
  const TrainTest data = generate_synthetic(spec, rng);
  const auto path = std::filesystem::temp_directory_path() / "saeaudit_test_data.bin";
  save_dataset(data, path);
  const TrainTest loaded = load_dataset(path);
  CHECK(loaded.train.inputs == data.train.inputs);
  CHECK(loaded.test.inputs == data.test.inputs);
  CHECK(loaded.train.labels == data.train.labels);
  CHECK(loaded.test.labels == data.test.labels);
  CHECK(loaded.train.num_classes == data.train.num_classes);
  CHECK(loaded.test.split_tag == SplitTag::Test);
  std::filesystem::remove(path);
}

TEST_CASE("container rejects wrong kind and bad magic") {
  const SyntheticSpec spec = small_spec();
  Rng rng(19);
  const TrainTest data = generate_synthetic(spec, rng);
  const auto path = std::filesystem::temp_directory_path() / "saeaudit_test_kind.bin";
  save_dataset(data, path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::filesystem::remove(path);
}
