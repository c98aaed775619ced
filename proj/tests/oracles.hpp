// Independent test oracles. Everything here stays deliberately naive so
// it cannot share a failure mode with the implementation it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "saeaudit/matrix.hpp"

namespace oracles {

// Plain triple-loop matrix product, scalar accumulator, k ascending.
inline saeaudit::Matrix naive_matmul(const saeaudit::Matrix& a, const saeaudit::Matrix& b) {
  saeaudit::Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

inline double max_abs_diff(const saeaudit::Matrix& a, const saeaudit::Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
  return worst;
}

// Central finite difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x, double eps) {
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

inline double rel_err(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-12});
  return std::abs(got - want) / denom;
}

// Exhaustive minimum-cost assignment for small square matrices.
struct BruteAssignment {
  std::vector<int> assignment;
  double total_cost;
};

inline BruteAssignment brute_force_assignment(const saeaudit::Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += cost(static_cast<std::size_t>(i), static_cast<std::size_t>(perm[i]));
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  // recompute the winning cost in ascending-row order, matching the solver
  double final_cost = 0.0;
  for (int i = 0; i < n; ++i) {
    final_cost += cost(static_cast<std::size_t>(i), static_cast<std::size_t>(best[i]));
  }
  return {best, final_cost};
}

// Brute-force per-(feature, class) counting statistics.
struct CountingStats {
  std::vector<int> activation_count;
  std::vector<std::vector<int>> co_count;  // [feature][class]
  std::vector<std::vector<double>> precision, recall, f1;
};

inline CountingStats counting_oracle(const saeaudit::Matrix& code, const std::vector<int>& labels,
                                     int num_classes) {
  const int features = static_cast<int>(code.cols());
  CountingStats st;
  st.activation_count.assign(static_cast<std::size_t>(features), 0);
  st.co_count.assign(static_cast<std::size_t>(features),
                     std::vector<int>(static_cast<std::size_t>(num_classes), 0));
  st.precision.assign(static_cast<std::size_t>(features),
                      std::vector<double>(static_cast<std::size_t>(num_classes), 0.0));
  st.recall = st.precision;
  st.f1 = st.precision;
  std::vector<int> class_count(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) ++class_count[static_cast<std::size_t>(y)];
  for (int j = 0; j < features; ++j) {
    for (std::size_t i = 0; i < code.rows(); ++i) {
      if (code(i, static_cast<std::size_t>(j)) > 0.0) {
        ++st.activation_count[static_cast<std::size_t>(j)];
        ++st.co_count[static_cast<std::size_t>(j)][static_cast<std::size_t>(labels[i])];
      }
    }
    for (int c = 0; c < num_classes; ++c) {
      const int act = st.activation_count[static_cast<std::size_t>(j)];
      const int co = st.co_count[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
      const double p = act > 0 ? double(co) / double(act) : 0.0;
      const double r = class_count[static_cast<std::size_t>(c)] > 0
                           ? double(co) / double(class_count[static_cast<std::size_t>(c)])
                           : 0.0;
      st.precision[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] = p;
      st.recall[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] = r;
      st.f1[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] =
          (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
  }
  return st;
}

}  // namespace oracles
