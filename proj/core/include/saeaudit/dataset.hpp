#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "saeaudit/matrix.hpp"
#include "saeaudit/rng.hpp"

namespace saeaudit {

enum class SplitTag : std::uint8_t { Train = 0, Test = 1 };

struct Dataset {
  Matrix inputs;            // N x d_in
  std::vector<int> labels;  // length N, values in [0, num_classes)
  int num_classes = 0;
  SplitTag split_tag = SplitTag::Train;

  std::size_t size() const { return labels.size(); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }

  // Rows whose label equals (or differs from) the given class, in order.
  Dataset rows_with_label(int label) const;
  Dataset rows_without_label(int label) const;
};

// Throws InputError when labels are out of range or row counts disagree.
void validate_dataset(const Dataset& ds);

struct TrainTest {
  Dataset train;
  Dataset test;
};

struct SyntheticSpec {
  int num_classes = 10;
  int samples_per_class = 500;
  int input_dim = 32;
  double class_separation = 6.0;
  double intra_noise = 1.0;
};

// Each class is an anisotropic Gaussian around a distinct mean placed on a
// scaled random orthonormal frame, so class means sit pairwise at least
// class_separation apart. The 80/20 train/test split is stratified per
// class. Deterministic given the Rng.
TrainTest generate_synthetic(const SyntheticSpec& spec, Rng& rng);

struct ForgetRetainSplit {
  int forget_class = 0;
  Dataset forget;  // exactly the samples labeled forget_class
  Dataset retain;  // all the others, order preserved
};

ForgetRetainSplit split_forget_retain(const Dataset& ds, int forget_class);

void save_dataset(const TrainTest& data, const std::filesystem::path& path);
TrainTest load_dataset(const std::filesystem::path& path);

}  // namespace saeaudit
