#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "mmdforge/errors.hpp"
#include "mmdforge/eval.hpp"

using namespace mmdforge;

namespace {

std::string temp_dir(const std::string& name) {
  const std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::filesystem::create_directories(path);
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

TrainTrace trace_from(const std::vector<double>& held) {
  TrainTrace trace;
  for (std::size_t i = 0; i < held.size(); ++i) {
    TraceRow row;
    row.iter = static_cast<int>(i) * 10;
    row.held_out_mmd2 = held[i];
    trace.rows.push_back(row);
  }
  return trace;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("coverage counts centers with enough nearby samples") {
  DatasetSpec ring;
  const Matrix centers = mode_centers(ring);  // 8 modes on radius 2
  REQUIRE(centers.rows() == 8);

  // Ten exact copies of every center: all modes covered, all samples close.
  Matrix samples(80, 2);
  for (Eigen::Index i = 0; i < 80; ++i) samples.row(i) = centers.row(i % 8);
  const CoverageReport full = mode_coverage(samples, centers, 0.1);
  CHECK(full.covered == 8);
  CHECK(full.high_quality_fraction == 1.0);

  // Collapse onto one mode: a single center is covered.
  Matrix collapsed = Matrix::Zero(40, 2);
  collapsed.rowwise() = centers.row(0);
  const CoverageReport one = mode_coverage(collapsed, centers, 0.1);
  CHECK(one.covered == 1);
  CHECK(one.high_quality_fraction == 1.0);

  // Far off the ring: nothing is covered or high quality.
  const CoverageReport none = mode_coverage(Matrix::Constant(40, 2, 100.0), centers, 0.1);
  CHECK(none.covered == 0);
  CHECK(none.high_quality_fraction == 0.0);
}

TEST_CASE("coverage threshold is n over ten m") {
  Matrix centers(2, 2);
  centers << -5.0, 0.0, 5.0, 0.0;
  Matrix samples(20, 2);
  samples.rowwise() = centers.row(1);
  samples.row(0) = centers.row(0);  // exactly one sample at the left mode
  const CoverageReport at = mode_coverage(samples, centers, 0.5);
  CHECK(at.covered == 2);  // needed = 20 / (10 * 2) = 1, and 1 >= 1
  CHECK(at.high_quality_fraction == 1.0);

  samples.row(0) = Eigen::RowVector2d(-4.4, 0.0);  // outside the radius
  const CoverageReport miss = mode_coverage(samples, centers, 0.5);
  CHECK(miss.covered == 1);
  CHECK(miss.high_quality_fraction == 0.95);
}

TEST_CASE("a sample near two centers counts for both but once for quality") {
  Matrix centers(2, 2);
  centers << 0.0, 0.0, 0.1, 0.0;
  Matrix sample_row(1, 2);
  sample_row << 0.05, 0.0;
  const CoverageReport r = mode_coverage(sample_row, centers, 1.0);
  CHECK(r.covered == 2);
  CHECK(r.high_quality_fraction == 1.0);
}

TEST_CASE("coverage contracts") {
  Matrix centers(1, 2);
  centers << 0.0, 0.0;
  CHECK_THROWS_AS(mode_coverage(Matrix::Zero(4, 2), centers, 0.0), ContractError);
  CHECK_THROWS_AS(mode_coverage(Matrix::Zero(4, 3), centers, 1.0), DimensionError);
}

TEST_CASE("curve correlation ranks the smoothed held-out curve") {
  const CurveReport down = curve_correlation(trace_from({5, 4, 3, 2}), 1);
  CHECK(down.spearman == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(down.smoothed == std::vector<double>{5, 4, 3, 2});
  CHECK(down.iters == std::vector<int>{0, 10, 20, 30});

  const CurveReport up = curve_correlation(trace_from({1, 2, 3, 4}), 1);
  CHECK(up.spearman == doctest::Approx(1.0).epsilon(1e-12));

  const CurveReport flat = curve_correlation(trace_from({1, 1, 1}), 1);
  CHECK(flat.spearman == 0.0);

  const CurveReport windowed = curve_correlation(trace_from({4, 2, 8}), 2);
  CHECK(windowed.smoothed == std::vector<double>{4, 3, 5});
  CHECK(windowed.spearman == doctest::Approx(0.5).epsilon(1e-12));

  // A window longer than the trace averages every prefix.
  const CurveReport wide = curve_correlation(trace_from({3, 6, 9}), 10);
  CHECK(wide.smoothed[2] == doctest::Approx(6.0).epsilon(1e-15));

  CHECK_THROWS_AS(curve_correlation(TrainTrace{}, 1), ContractError);
  CHECK_THROWS_AS(curve_correlation(trace_from({1, 2}), 0), ContractError);
}

TEST_CASE("power experiment separates a strong alternative from the null") {
  DatasetSpec p;  // ring, radius 2
  DatasetSpec q;
  q.radius = 0.5;

  PowerOptions options;
  options.n_permutations = 100;
  options.hidden = {8};
  options.code_dim = 4;

  const KernelSpec fixed = KernelSpec::mixture_rbf({1, 2, 4, 8, 16});
  const PowerReport strong = power_experiment(p, q, 16, 50, fixed, 2, options, 7);
  CHECK(strong.trials == 50);
  CHECK(strong.n == 16);
  CHECK(strong.seed == 7);
  CHECK(strong.wall_secs >= 0.0);
  CHECK(strong.fixed_power >= 0.9);
  CHECK(strong.learned_power >= 0.0);
  CHECK(strong.learned_power <= 1.0);

  const PowerReport again = power_experiment(p, q, 16, 50, fixed, 2, options, 7);
  CHECK(again.fixed_power == strong.fixed_power);
  CHECK(again.learned_power == strong.learned_power);

  const PowerReport null_case = power_experiment(p, p, 16, 50, fixed, 2, options, 8);
  CHECK(null_case.fixed_power <= 0.2);
  CHECK(null_case.learned_power <= 0.3);

  CHECK_THROWS_AS(power_experiment(p, q, 16, 49, fixed, 2, options, 7), ContractError);
  CHECK_THROWS_AS(power_experiment(p, q, 7, 50, fixed, 2, options, 7), ContractError);
}

TEST_CASE("weakstar sequence halves the offset and ends at the null") {
  WeakstarOptions options;
  options.n = 48;
  options.budget = 3;
  options.hidden = {8};
  options.code_dim = 4;
  options.null_permutations = 40;

  const KernelSpec kernel = KernelSpec::mixture_rbf({1, 2, 4});
  const WeakstarReport report = weakstar_experiment(kernel, 3, options, 5);
  CHECK(report.mean_offsets == std::vector<double>{4.0, 2.0, 0.0});
  REQUIRE(report.values.size() == 3);
  for (double v : report.values) CHECK(std::isfinite(v));
  CHECK(report.values[0] > report.values[2]);  // offset 4 beats the P=Q endpoint
  CHECK(report.endpoint_null_std > 0.0);
  CHECK(report.seed == 5);

  const WeakstarReport again = weakstar_experiment(kernel, 3, options, 5);
  CHECK(again.values == report.values);
  CHECK(again.endpoint_null_std == report.endpoint_null_std);

  CHECK_THROWS_AS(weakstar_experiment(kernel, 2, options, 5), ContractError);
}

TEST_CASE("timing bench reports a median per batch size") {
  const KernelSpec kernel = KernelSpec::mixture_rbf({1, 2, 4, 8, 16});
  const TimingReport report = timing_bench({8, 16}, kernel, 1, 3);
  CHECK(report.batch_sizes == std::vector<Eigen::Index>{8, 16});
  REQUIRE(report.median_secs.size() == 2);
  CHECK(report.median_secs[0] > 0.0);
  CHECK(report.median_secs[1] > 0.0);
  CHECK(std::isfinite(report.exponent));
  CHECK(report.seed == 3);

  CHECK_THROWS_AS(timing_bench({8, 16}, kernel, 0, 3), ContractError);
  CHECK_THROWS_AS(timing_bench({1, 16}, kernel, 1, 3), ContractError);
}

TEST_CASE("reports land in named csv and json files") {
  const std::string dir = temp_dir("eval_reports");

  PowerReport power;
  power.fixed_power = 0.5;
  power.learned_power = 0.75;
  power.trials = 100;
  power.n = 50;
  power.seed = 9;
  save_report(dir, power);
  CHECK(slurp(dir + "/power.csv") == "arm,power\nfixed,0.5\nlearned,0.75\n");
  CHECK(slurp(dir + "/power.json").find("\"learned_power\": 0.75") != std::string::npos);

  WeakstarReport weak;
  weak.mean_offsets = {4.0, 0.0};
  weak.values = {0.25, 0.5};
  save_report(dir, weak);
  CHECK(slurp(dir + "/weakstar.csv") == "mean_offset,mmd2\n4,0.25\n0,0.5\n");
  CHECK(slurp(dir + "/weakstar.json").find("\"experiment\": \"weakstar\"") != std::string::npos);

  TimingReport timing;
  timing.batch_sizes = {16, 64};
  timing.median_secs = {0.125, 0.5};
  timing.exponent = 1.0;
  save_report(dir, timing);
  CHECK(slurp(dir + "/timing.csv") ==
        "batch_size,median_secs_per_iter\n16,0.125\n64,0.5\n");

  CurveReport curve;
  curve.iters = {0, 10};
  curve.smoothed = {1.5, 0.5};
  curve.spearman = -1.0;
  save_report(dir, curve);
  CHECK(slurp(dir + "/curve.csv") == "iter,smoothed_held_out_mmd2\n0,1.5\n10,0.5\n");

  CoverageReport coverage;
  coverage.covered = 7;
  coverage.high_quality_fraction = 0.875;
  save_report(dir, coverage);
  CHECK(slurp(dir + "/coverage.csv") == "covered,high_quality_fraction\n7,0.875\n");
  CHECK(slurp(dir + "/coverage.json").find("\"covered\": 7") != std::string::npos);

  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
