#include "saeaudit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "saeaudit/container.hpp"
#include "saeaudit/errors.hpp"

namespace saeaudit {

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.split_tag = ds.split_tag;
  out.inputs = Matrix(rows.size(), ds.inputs.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* src = ds.inputs.row_ptr(rows[i]);
    std::copy(src, src + ds.inputs.cols(), out.inputs.row_ptr(i));
    out.labels.push_back(ds.labels[rows[i]]);
  }
  return out;
}

// Gram-Schmidt on seeded Gaussian rows; gives `count` orthonormal
// directions in dim-dimensional space.
Matrix random_orthonormal_rows(int count, int dim, Rng& rng) {
  Matrix frame(count, dim);
  for (int i = 0; i < count; ++i) {
    for (;;) {
      for (int j = 0; j < dim; ++j) frame(i, j) = rng.normal();
      for (int p = 0; p < i; ++p) {
        double dot = 0.0;
        for (int j = 0; j < dim; ++j) dot += frame(i, j) * frame(p, j);
        for (int j = 0; j < dim; ++j) frame(i, j) -= dot * frame(p, j);
      }
      double norm = 0.0;
      for (int j = 0; j < dim; ++j) norm += frame(i, j) * frame(i, j);
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (int j = 0; j < dim; ++j) frame(i, j) /= norm;
        break;
      }
      // degenerate draw, resample this row
    }
  }
  return frame;
}

void write_dataset_block(ContainerWriter& w, const Dataset& ds) {
  w.u32(static_cast<std::uint32_t>(ds.num_classes));
  w.u8(static_cast<std::uint8_t>(ds.split_tag));
  w.matrix(ds.inputs);
  w.u64(ds.labels.size());
  for (int y : ds.labels) w.i32(y);
}

Dataset read_dataset_block(ContainerReader& r) {
  Dataset ds;
  ds.num_classes = static_cast<int>(r.u32());
  ds.split_tag = static_cast<SplitTag>(r.u8());
  ds.inputs = r.matrix();
  const std::uint64_t n = r.u64();
  ds.labels.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) ds.labels[i] = r.i32();
  return ds;
}

}  // namespace

Dataset Dataset::rows_with_label(int label) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) rows.push_back(i);
  return take_rows(*this, rows);
}

Dataset Dataset::rows_without_label(int label) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != label) rows.push_back(i);
  return take_rows(*this, rows);
}

void validate_dataset(const Dataset& ds) {
  if (ds.inputs.rows() != ds.labels.size()) {
    throw InputError("dataset: " + std::to_string(ds.inputs.rows()) + " input rows vs " +
                     std::to_string(ds.labels.size()) + " labels");
  }
  if (ds.num_classes <= 0) throw InputError("dataset: num_classes must be positive");
  for (int y : ds.labels) {
    if (y < 0 || y >= ds.num_classes) {
      throw InputError("dataset: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(ds.num_classes) + ")");
    }
  }
}

TrainTest generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
  if (spec.num_classes < 2) throw InputError("generate_synthetic: need at least 2 classes");
  if (spec.samples_per_class < 5) {
    throw InputError("generate_synthetic: need at least 5 samples per class for an 80/20 split");
  }
  if (spec.class_separation <= 0.0 || spec.intra_noise <= 0.0) {
    throw InputError("generate_synthetic: separation and noise must be positive");
  }
  if (spec.input_dim < spec.num_classes) {
    throw InputError("generate_synthetic: cannot place " + std::to_string(spec.num_classes) +
                     " means pairwise " + std::to_string(spec.class_separation) +
                     " apart on an orthonormal frame in dimension " +
                     std::to_string(spec.input_dim));
  }

  // Orthonormal directions scaled so every pair of means is exactly
  // class_separation apart (|s*u_a - s*u_b| = s*sqrt(2)).
  const Matrix frame = random_orthonormal_rows(spec.num_classes, spec.input_dim, rng);
  const double scale = spec.class_separation / std::sqrt(2.0);

  // Per-class, per-dimension sigmas in [0.5, 1.5) * intra_noise make the
  // Gaussians anisotropic.
  Matrix sigma(spec.num_classes, spec.input_dim);
  for (double& v : sigma.data()) v = spec.intra_noise * (0.5 + rng.uniform());

  const int per_class = spec.samples_per_class;
  const int test_per_class = per_class / 5;
  const int train_per_class = per_class - test_per_class;

  Dataset train, test;
  train.num_classes = test.num_classes = spec.num_classes;
  train.split_tag = SplitTag::Train;
  test.split_tag = SplitTag::Test;
  train.inputs = Matrix(static_cast<std::size_t>(train_per_class) * spec.num_classes, spec.input_dim);
  test.inputs = Matrix(static_cast<std::size_t>(test_per_class) * spec.num_classes, spec.input_dim);

  std::size_t train_row = 0, test_row = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int s = 0; s < per_class; ++s) {
      const bool is_train = s < train_per_class;
      double* row = is_train ? train.inputs.row_ptr(train_row) : test.inputs.row_ptr(test_row);
      for (int j = 0; j < spec.input_dim; ++j) {
        row[j] = scale * frame(c, j) + sigma(c, j) * rng.normal();
      }
      if (is_train) {
        train.labels.push_back(c);
        ++train_row;
      } else {
        test.labels.push_back(c);
        ++test_row;
      }
    }
  }

  // Shuffle row order within each split so batches mix classes from the
  // first epoch on.
  auto shuffle_rows = [&rng](Dataset& ds) {
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    Dataset shuffled = take_rows(ds, order);
    ds.inputs = std::move(shuffled.inputs);
    ds.labels = std::move(shuffled.labels);
  };
  shuffle_rows(train);
  shuffle_rows(test);

  validate_dataset(train);
  validate_dataset(test);
  return {std::move(train), std::move(test)};
}

ForgetRetainSplit split_forget_retain(const Dataset& ds, int forget_class) {
  validate_dataset(ds);
  if (forget_class < 0 || forget_class >= ds.num_classes) {
    throw InputError("split_forget_retain: class " + std::to_string(forget_class) +
                     " outside [0, " + std::to_string(ds.num_classes) + ")");
  }
  ForgetRetainSplit split;
  split.forget_class = forget_class;
  split.forget = ds.rows_with_label(forget_class);
  split.retain = ds.rows_without_label(forget_class);
  if (split.forget.size() == 0) {
    throw InputError("split_forget_retain: class " + std::to_string(forget_class) +
                     " has no samples");
  }
  return split;
}

void save_dataset(const TrainTest& data, const std::filesystem::path& path) {
  ContainerWriter w(path, ContainerKind::Dataset);
  write_dataset_block(w, data.train);
  write_dataset_block(w, data.test);
  w.close();
}

TrainTest load_dataset(const std::filesystem::path& path) {
  ContainerReader r(path, ContainerKind::Dataset);
  TrainTest data;
  data.train = read_dataset_block(r);
  data.test = read_dataset_block(r);
  validate_dataset(data.train);
  validate_dataset(data.test);
  return data;
}

}  // namespace saeaudit
