#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmdforge/kernels.hpp"
#include "mmdforge/tensor.hpp"

namespace mmdforge {

enum class EstimatorKind { Biased, Unbiased };

struct MmdReport {
  double estimate = 0.0;
  EstimatorKind estimator_kind = EstimatorKind::Unbiased;
  KernelSpec kernel;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  // Per-bandwidth contributions for mixtures; estimate is their exact sum.
  std::vector<double> per_component;
};

struct TestDecision {
  double statistic = 0.0;
  double threshold = 0.0;  // empirical (1-alpha) quantile of permuted statistics
  double alpha = 0.0;
  int n_permutations = 0;
  bool reject = false;
};

struct MomentDiagnostic {
  double first_moment_gap = 0.0;   // squared distance of sample means
  double second_moment_gap = 0.0;  // squared Frobenius gap of second moments
  double poly_mmd2 = 0.0;          // biased estimate under (1 + x.y)^2
};

// U-statistic estimate; may be negative. Requires n >= 2 and m >= 2.
MmdReport mmd2_unbiased(const Matrix& x, const Matrix& y, const KernelSpec& k);

// Plug-in squared norm of the mean-embedding gap; always >= 0 up to round-off.
MmdReport mmd2_biased(const Matrix& x, const Matrix& y, const KernelSpec& k);

// Two-sample test: pool X and Y, re-split uniformly n_permutations times with
// seeded replicate streams, threshold at the empirical (1-alpha) quantile.
// Replicates are merged by index, so the result is thread-count independent.
TestDecision permutation_test(const Matrix& x, const Matrix& y, const KernelSpec& k,
                              double alpha, int n_permutations, std::uint64_t seed);

// First and second moment gaps plus the degree-2 polynomial MMD. Satisfies
// poly_mmd2 == 2*first_moment_gap + second_moment_gap up to round-off.
MomentDiagnostic moment_diagnostic(const Matrix& x, const Matrix& y);

// Differentiable estimators from precomputed Gram tensors.
Tensor mmd2_biased_from_grams(const Tensor& kxx, const Tensor& kxy, const Tensor& kyy);
Tensor mmd2_unbiased_from_grams(const Tensor& kxx, const Tensor& kxy, const Tensor& kyy);

// Differentiable estimators that evaluate the kernel internally.
Tensor mmd2_biased(const Tensor& x, const Tensor& y, const KernelSpec& k);
Tensor mmd2_unbiased(const Tensor& x, const Tensor& y, const KernelSpec& k);

// One JSON object per line, no trailing newline.
std::string to_json_line(const MmdReport& report);
std::string to_json_line(const TestDecision& decision);

}  // namespace mmdforge
