// Command-line front end: train, test, gen, bench, experiment.
//
// Exit codes:
//   0  success (for `test`: fail to reject H0)
//   1  runtime error (IO, invalid arguments caught late, internal contract)
//   2  config/usage parse error
//   3  `test` rejected H0
//   4  training aborted on a non-finite loss

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmdforge/config.hpp"
#include "mmdforge/data.hpp"
#include "mmdforge/errors.hpp"
#include "mmdforge/eval.hpp"
#include "mmdforge/mmd.hpp"
#include "mmdforge/networks.hpp"
#include "mmdforge/training.hpp"

namespace {

using namespace mmdforge;

struct KernelFlags {
  std::string family = "mixture_rbf";
  double sigma = 1.0;
  std::string sigmas = "1,2,4,8,16";
  int degree = 2;
  double offset = 1.0;
  std::string rbf_scaling = "two_sigma_sq";
};

void add_kernel_flags(CLI::App* cmd, KernelFlags& flags) {
  cmd->add_option("--kernel", flags.family,
                  "Kernel family: gaussian|mixture_rbf|linear|polynomial");
  cmd->add_option("--sigma", flags.sigma, "Gaussian bandwidth");
  cmd->add_option("--sigmas", flags.sigmas, "Mixture bandwidths, comma separated");
  cmd->add_option("--degree", flags.degree, "Polynomial degree");
  cmd->add_option("--offset", flags.offset, "Polynomial offset");
  cmd->add_option("--rbf-scaling", flags.rbf_scaling,
                  "RBF exponent denominator: two_sigma_sq|sigma|sigma_sq");
}

KernelSpec kernel_from_flags(const KernelFlags& flags) {
  RunConfig scratch;
  apply_override(scratch, "kernel.family=" + flags.family);
  apply_override(scratch, "kernel.sigma=" + std::to_string(flags.sigma));
  apply_override(scratch, "kernel.sigmas=" + flags.sigmas);
  apply_override(scratch, "kernel.degree=" + std::to_string(flags.degree));
  apply_override(scratch, "kernel.offset=" + std::to_string(flags.offset));
  apply_override(scratch, "kernel.rbf_scaling=" + flags.rbf_scaling);
  validate(scratch.train.kernel);
  return scratch.train.kernel;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw IoError(path + ": cannot open for writing");
  file << text;
  if (!file) throw IoError(path + ": write failed");
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::string>& overrides) {
  RunConfig cfg = config_path.empty() ? default_config() : load_config(config_path);
  for (const std::string& o : overrides) apply_override(cfg, o);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir + "/config.echo", serialize_config(cfg));
  train(cfg.train, cfg.data, cfg.noise, cfg.model, out_dir);
  return 0;
}

int cmd_test(const std::string& x_path, const std::string& y_path, const KernelFlags& flags,
             double alpha, int permutations, std::uint64_t seed) {
  const Matrix x = load_csv(x_path);
  const Matrix y = load_csv(y_path);
  if (x.cols() != y.cols()) {
    throw DimensionError("test: files disagree in dimension, " + std::to_string(x.cols()) +
                         " vs " + std::to_string(y.cols()));
  }
  const KernelSpec kernel = kernel_from_flags(flags);
  const TestDecision decision = permutation_test(x, y, kernel, alpha, permutations, seed);
  std::cout << to_json_line(decision) << "\n";
  return decision.reject ? 3 : 0;
}

int cmd_gen(const std::string& checkpoint_path, long long count, std::uint64_t seed,
            const std::string& out_path, const std::string& noise_family) {
  const ModelBundle bundle = load_checkpoint(checkpoint_path);
  NoiseSpec noise;
  noise.dimension = bundle.generator.input_dim();
  if (noise_family == "standard_normal") {
    noise.family = NoiseFamily::StandardNormal;
  } else if (noise_family == "uniform") {
    noise.family = NoiseFamily::Uniform;
  } else {
    throw ParseError("gen: unknown noise family '" + noise_family + "'");
  }
  if (count < 0) throw ContractError("gen: count must be >= 0");
  if (count == 0) {
    write_file(out_path, "");
    return 0;
  }
  Rng rng(seed);
  const Matrix z = sample_noise(noise, static_cast<Eigen::Index>(count), rng);
  save_csv(out_path, bundle.generator.forward(z));
  return 0;
}

int cmd_bench(const std::string& batch_sizes, int reps, std::uint64_t seed,
              const KernelFlags& flags, const std::string& out_dir) {
  RunConfig scratch;
  std::vector<Eigen::Index> sizes;
  {
    std::stringstream ss(batch_sizes);
    std::string item;
    while (std::getline(ss, item, ',')) sizes.push_back(std::stoll(item));
  }
  const TimingReport report = timing_bench(sizes, kernel_from_flags(flags), reps, seed);
  save_report(out_dir, report);
  std::string echo = "command = bench\nbatch_sizes = " + batch_sizes +
                     "\nreps = " + std::to_string(reps) + "\nseed = " + std::to_string(seed) +
                     "\n";
  write_file(out_dir + "/args.echo", echo);
  std::printf("fitted exponent: %.4f\n", report.exponent);
  return 0;
}

DatasetSpec power_q_spec() {
  // Mean-zero pair of isotropic components at (0,-0.8) and (0,+0.8).
  DatasetSpec q;
  q.source = DataSource::GaussianGrid;
  q.grid_rows = 1;
  q.grid_cols = 2;
  q.grid_spacing = 1.6;
  q.sigma = 0.5;
  return q;
}

DatasetSpec power_p_spec() {
  // N(0, s^2 I) with s matching the covariance trace of the alternative.
  const DatasetSpec q = power_q_spec();
  DatasetSpec p;
  p.source = DataSource::GaussianGrid;
  p.grid_rows = 1;
  p.grid_cols = 1;
  p.sigma = std::sqrt((2.0 * q.sigma * q.sigma + q.grid_spacing * q.grid_spacing / 4.0) / 2.0);
  return p;
}

int cmd_experiment(const std::string& name, Eigen::Index n, int trials, int budget, int length,
                   std::uint64_t seed, const KernelFlags& flags, const std::string& out_dir,
                   const std::string& samples_path, double radius, int ring_modes,
                   double ring_radius, const std::string& batch_sizes, int reps) {
  if (name == "power") {
    PowerOptions options;
    const PowerReport report = power_experiment(power_p_spec(), power_q_spec(), n, trials,
                                                kernel_from_flags(flags), budget, options, seed);
    save_report(out_dir, report);
    write_file(out_dir + "/args.echo",
               "command = experiment power\nn = " + std::to_string(n) +
                   "\ntrials = " + std::to_string(trials) + "\nbudget = " +
                   std::to_string(budget) + "\nseed = " + std::to_string(seed) + "\n");
    std::printf("fixed power: %.4f  learned power: %.4f\n", report.fixed_power,
                report.learned_power);
    return 0;
  }
  if (name == "weakstar") {
    WeakstarOptions options;
    options.n = n;
    options.budget = budget;
    const WeakstarReport report =
        weakstar_experiment(kernel_from_flags(flags), length, options, seed);
    save_report(out_dir, report);
    write_file(out_dir + "/args.echo",
               "command = experiment weakstar\nlength = " + std::to_string(length) +
                   "\nn = " + std::to_string(n) + "\nbudget = " + std::to_string(budget) +
                   "\nseed = " + std::to_string(seed) + "\n");
    for (std::size_t i = 0; i < report.values.size(); ++i) {
      std::printf("offset %.6g -> mmd2 %.6g\n", report.mean_offsets[i], report.values[i]);
    }
    return 0;
  }
  if (name == "timing") {
    return cmd_bench(batch_sizes, reps, seed, flags, out_dir);
  }
  if (name == "coverage") {
    const Matrix samples = load_csv(samples_path);
    DatasetSpec ring;
    ring.source = DataSource::GaussianRing;
    ring.modes = ring_modes;
    ring.radius = ring_radius;
    const CoverageReport report = mode_coverage(samples, mode_centers(ring), radius);
    save_report(out_dir, report);
    write_file(out_dir + "/args.echo",
               "command = experiment coverage\nsamples = " + samples_path + "\nradius = " +
                   std::to_string(radius) + "\nring_modes = " + std::to_string(ring_modes) +
                   "\nring_radius = " + std::to_string(ring_radius) + "\n");
    std::printf("covered: %d  high-quality fraction: %.4f\n", report.covered,
                report.high_quality_fraction);
    return 0;
  }
  std::cerr << "unknown experiment '" << name
            << "' (valid: power, weakstar, timing, coverage)\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel two-sample testing and adversarial kernel learning toolkit"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a generator against a learned critic");
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  train_cmd->add_option("--config", config_path, "Run-config file (defaults when omitted)");
  train_cmd->add_option("--out", out_dir, "Output directory");
  train_cmd->add_option("--set", overrides, "Override, e.g. --set train.iters=500");

  // test
  auto* test_cmd = app.add_subcommand("test", "Two-sample permutation test on two CSV files");
  std::string x_path, y_path;
  KernelFlags test_kernel;
  double alpha = 0.05;
  int permutations = 500;
  std::uint64_t seed = 1;
  test_cmd->add_option("--x", x_path, "First sample CSV")->required();
  test_cmd->add_option("--y", y_path, "Second sample CSV")->required();
  add_kernel_flags(test_cmd, test_kernel);
  test_cmd->add_option("--alpha", alpha, "Allowed false-rejection rate");
  test_cmd->add_option("--permutations", permutations, "Permutation count");
  test_cmd->add_option("--seed", seed, "RNG seed");

  // gen
  auto* gen_cmd = app.add_subcommand("gen", "Sample from a trained generator checkpoint");
  std::string checkpoint_path, gen_out = "samples.csv", noise_family = "standard_normal";
  long long count = 1000;
  std::uint64_t gen_seed = 1;
  gen_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint.bin path")->required();
  gen_cmd->add_option("--count", count, "Number of samples");
  gen_cmd->add_option("--seed", gen_seed, "RNG seed");
  gen_cmd->add_option("--out", gen_out, "Output CSV");
  gen_cmd->add_option("--noise-family", noise_family, "standard_normal|uniform");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Time critic+generator iterations per batch size");
  std::string batch_sizes = "16,64,256,1024";
  int reps = 3;
  std::uint64_t bench_seed = 1;
  std::string bench_out = "bench_out";
  KernelFlags bench_kernel;
  bench_cmd->add_option("--batch-sizes", batch_sizes, "Comma-separated batch sizes");
  bench_cmd->add_option("--reps", reps, "Repetitions per size");
  bench_cmd->add_option("--seed", bench_seed, "RNG seed");
  bench_cmd->add_option("--out", bench_out, "Output directory");
  add_kernel_flags(bench_cmd, bench_kernel);

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Run a named experiment");
  std::string exp_name;
  Eigen::Index exp_n = 100;
  int exp_trials = 100, exp_budget = 100, exp_length = 5, exp_reps = 3;
  std::uint64_t exp_seed = 1;
  std::string exp_out = "experiment_out", exp_samples, exp_batch_sizes = "16,64,256,1024";
  double exp_radius = 0.25, exp_ring_radius = 2.0;
  int exp_ring_modes = 8;
  KernelFlags exp_kernel;
  exp_cmd->add_option("name", exp_name, "power|weakstar|timing|coverage")->required();
  exp_cmd->add_option("--n", exp_n, "Samples per side");
  exp_cmd->add_option("--trials", exp_trials, "Monte Carlo trials");
  exp_cmd->add_option("--budget", exp_budget, "Kernel-learning steps");
  exp_cmd->add_option("--length", exp_length, "Sequence length (weakstar)");
  exp_cmd->add_option("--seed", exp_seed, "RNG seed");
  exp_cmd->add_option("--out", exp_out, "Output directory");
  exp_cmd->add_option("--samples", exp_samples, "Samples CSV (coverage)");
  exp_cmd->add_option("--radius", exp_radius, "Coverage radius");
  exp_cmd->add_option("--ring-modes", exp_ring_modes, "Ring mode count (coverage)");
  exp_cmd->add_option("--ring-radius", exp_ring_radius, "Ring radius (coverage)");
  exp_cmd->add_option("--batch-sizes", exp_batch_sizes, "Batch sizes (timing)");
  exp_cmd->add_option("--reps", exp_reps, "Repetitions (timing)");
  add_kernel_flags(exp_cmd, exp_kernel);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and friends
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, out_dir, overrides);
    if (*test_cmd) return cmd_test(x_path, y_path, test_kernel, alpha, permutations, seed);
    if (*gen_cmd) return cmd_gen(checkpoint_path, count, gen_seed, gen_out, noise_family);
    if (*bench_cmd) return cmd_bench(batch_sizes, reps, bench_seed, bench_kernel, bench_out);
    if (*exp_cmd) {
      return cmd_experiment(exp_name, exp_n, exp_trials, exp_budget, exp_length, exp_seed,
                            exp_kernel, exp_out, exp_samples, exp_radius, exp_ring_modes,
                            exp_ring_radius, exp_batch_sizes, exp_reps);
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
