#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmdforge/data.hpp"
#include "mmdforge/kernels.hpp"
#include "mmdforge/networks.hpp"
#include "mmdforge/training.hpp"

namespace mmdforge {

struct CoverageReport {
  int covered = 0;                    // centers with >= N/(10M) nearby samples
  double high_quality_fraction = 0.0;  // samples within radius of any center
};

CoverageReport mode_coverage(const Matrix& samples, const Matrix& centers, double radius);

struct PowerOptions {
  double alpha = 0.05;
  int n_permutations = 200;
  double learn_rate = 0.001;
  // Wide enough to keep the Glorot init inside the box; a tighter clip
  // truncates the init to near-binary weights and the codes collapse below
  // the code-kernel bandwidths.
  double clip = 0.5;
  Eigen::Index code_dim = 16;
  std::vector<Eigen::Index> hidden = {32, 32};
  Activation activation = Activation::Relu;
  KernelSpec code_kernel = KernelSpec::mixture_rbf({1, 2, 4, 8, 16});
};

struct PowerReport {
  double fixed_power = 0.0;
  double learned_power = 0.0;
  int trials = 0;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
  double wall_secs = 0.0;
};

// Per trial: fresh X ~ P, Y ~ Q; the fixed arm permutation-tests directly;
// the learned arm maximizes the estimate over a clipped encoder on one half
// and tests the composed kernel on the other half, so kernel selection never
// sees the test split.
PowerReport power_experiment(const DatasetSpec& p_spec, const DatasetSpec& q_spec,
                             Eigen::Index n, int trials, const KernelSpec& fixed_kernel,
                             int learn_budget, const PowerOptions& options, std::uint64_t seed);

struct WeakstarOptions {
  double mu0 = 4.0;  // initial mean offset along the first axis
  Eigen::Index n = 256;
  int budget = 200;  // ascent steps per sequence element
  double learn_rate = 0.001;
  double clip = 0.01;
  Eigen::Index code_dim = 8;
  std::vector<Eigen::Index> hidden = {32};
  Activation activation = Activation::Relu;
  int null_permutations = 200;
};

struct WeakstarReport {
  std::vector<double> mean_offsets;  // ||mu_n||, final entry exactly 0
  std::vector<double> values;        // maximized estimates on held-out halves
  double endpoint_null_std = 0.0;    // permutation-null std at the P=Q endpoint
  std::uint64_t seed = 0;
  double wall_secs = 0.0;
};

// Target N(0, I2) against N(mu_n, I2) with mu_n halving each step and the
// final element at zero; each element trains a fresh encoder from the same
// initialization so the curve isolates the distribution gap.
WeakstarReport weakstar_experiment(const KernelSpec& code_kernel, int length,
                                   const WeakstarOptions& options, std::uint64_t seed);

struct TimingReport {
  std::vector<Eigen::Index> batch_sizes;
  std::vector<double> median_secs;  // per critic+generator iteration
  double exponent = 0.0;            // least-squares slope of log t vs log B
  std::uint64_t seed = 0;
};

TimingReport timing_bench(const std::vector<Eigen::Index>& batch_sizes, const KernelSpec& kernel,
                          int repetitions, std::uint64_t seed);

struct CurveReport {
  std::vector<int> iters;
  std::vector<double> smoothed;  // moving average of held-out estimates
  double spearman = 0.0;         // rank correlation vs iteration; 0 if constant
};

CurveReport curve_correlation(const TrainTrace& trace, int window);

// CSV (grid + metric columns) plus a JSON summary carrying seeds and timing.
void save_report(const std::string& out_dir, const PowerReport& report);
void save_report(const std::string& out_dir, const WeakstarReport& report);
void save_report(const std::string& out_dir, const TimingReport& report);
void save_report(const std::string& out_dir, const CurveReport& report);
void save_report(const std::string& out_dir, const CoverageReport& report);

}  // namespace mmdforge
