#include "mmdforge/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mmdforge/errors.hpp"
#include "mmdforge/mmd.hpp"
#include "mmdforge/optim.hpp"
#include "mmdforge/parallel.hpp"

namespace mmdforge {

CoverageReport mode_coverage(const Matrix& samples, const Matrix& centers, double radius) {
  if (!(radius > 0.0)) throw ContractError("mode_coverage: radius must be positive");
  if (samples.cols() != centers.cols()) {
    throw DimensionError("mode_coverage: samples and centers disagree in dimension");
  }
  const Eigen::Index n = samples.rows();
  const Eigen::Index m = centers.rows();
  const double needed = static_cast<double>(n) / (10.0 * static_cast<double>(m));
  const double r2 = radius * radius;

  CoverageReport report;
  Eigen::Index near_any = 0;
  std::vector<Eigen::Index> per_center(static_cast<std::size_t>(m), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    bool hit = false;
    for (Eigen::Index c = 0; c < m; ++c) {
      if ((samples.row(i) - centers.row(c)).squaredNorm() <= r2) {
        ++per_center[static_cast<std::size_t>(c)];
        hit = true;
      }
    }
    if (hit) ++near_any;
  }
  for (Eigen::Index c = 0; c < m; ++c) {
    if (static_cast<double>(per_center[static_cast<std::size_t>(c)]) >= needed) ++report.covered;
  }
  report.high_quality_fraction = n > 0 ? static_cast<double>(near_any) / static_cast<double>(n)
                                       : 0.0;
  return report;
}

namespace {

Matrix gaussian_batch(Eigen::Index n, double mu0, Rng& rng) {
  Matrix out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, 0) = mu0 + rng.normal();
    out(i, 1) = rng.normal();
  }
  return out;
}

// Full-batch ascent of the estimate over a clipped encoder; the returned net
// defines the learned k(enc(.), enc(.)) kernel.
Mlp learn_encoder(const Matrix& x, const Matrix& y, const KernelSpec& code_kernel,
                  const MlpConfig& enc_cfg, int budget, double learn_rate, double clip,
                  std::uint64_t init_seed) {
  Rng init_rng(init_seed);
  Mlp encoder(enc_cfg, init_rng);
  RmsPropState state;
  for (int step = 0; step < budget; ++step) {
    TapeScope scope;
    Tape& tape = scope.tape();
    TrackedMlp enc(encoder, tape);
    const Tensor cx = enc.forward(Tensor::constant(x));
    const Tensor cy = enc.forward(Tensor::constant(y));
    const Tensor kxx = gram(cx, cx, code_kernel);
    const Tensor kxy = gram(cx, cy, code_kernel);
    const Tensor kyy = gram(cy, cy, code_kernel);
    const Tensor loss = mmd2_biased_from_grams(kxx, kxy, kyy);
    const std::vector<Matrix> grads = tape.gradients(loss, enc.params());
    rmsprop_step(encoder.params(), grads, state, learn_rate, 1.0);
    clip_params(encoder.params(), clip);
  }
  return encoder;
}

double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

PowerReport power_experiment(const DatasetSpec& p_spec, const DatasetSpec& q_spec,
                             Eigen::Index n, int trials, const KernelSpec& fixed_kernel,
                             int learn_budget, const PowerOptions& options, std::uint64_t seed) {
  if (trials < 50) throw ContractError("power_experiment: needs at least 50 trials");
  if (n < 8) throw ContractError("power_experiment: needs at least 8 samples per side");
  const auto start = std::chrono::steady_clock::now();

  MlpConfig enc_cfg;
  enc_cfg.activation = options.activation;
  enc_cfg.widths.push_back(p_spec.dimension);
  enc_cfg.widths.insert(enc_cfg.widths.end(), options.hidden.begin(), options.hidden.end());
  enc_cfg.widths.push_back(options.code_dim);

  const Rng root(seed);
  std::vector<int> fixed_reject(static_cast<std::size_t>(trials), 0);
  std::vector<int> learned_reject(static_cast<std::size_t>(trials), 0);

  parallel_for(static_cast<std::size_t>(trials), [&](std::size_t t) {
    Rng trial = root.derive(static_cast<std::uint64_t>(t) + 1);
    const Matrix x = sample(p_spec, n, trial);
    const Matrix y = sample(q_spec, n, trial);

    const TestDecision fixed = permutation_test(x, y, fixed_kernel, options.alpha,
                                                options.n_permutations, trial.next_u64());
    fixed_reject[t] = fixed.reject ? 1 : 0;

    // Halves: learn the kernel on the first, test on the second.
    const Eigen::Index half = n / 2;
    const Matrix x_learn = x.topRows(half);
    const Matrix y_learn = y.topRows(half);
    const Matrix x_test = x.bottomRows(n - half);
    const Matrix y_test = y.bottomRows(n - half);
    const Mlp encoder = learn_encoder(x_learn, y_learn, options.code_kernel, enc_cfg,
                                      learn_budget, options.learn_rate, options.clip,
                                      trial.next_u64());
    const KernelSpec learned =
        KernelSpec::composed(options.code_kernel, make_encoder_handle(encoder));
    const TestDecision decision = permutation_test(x_test, y_test, learned, options.alpha,
                                                   options.n_permutations, trial.next_u64());
    learned_reject[t] = decision.reject ? 1 : 0;
  });

  PowerReport report;
  report.trials = trials;
  report.n = n;
  report.seed = seed;
  report.fixed_power =
      std::accumulate(fixed_reject.begin(), fixed_reject.end(), 0) / static_cast<double>(trials);
  report.learned_power = std::accumulate(learned_reject.begin(), learned_reject.end(), 0) /
                         static_cast<double>(trials);
  report.wall_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

WeakstarReport weakstar_experiment(const KernelSpec& code_kernel, int length,
                                   const WeakstarOptions& options, std::uint64_t seed) {
  if (length < 3) throw ContractError("weakstar_experiment: needs length >= 3");
  const auto start = std::chrono::steady_clock::now();

  MlpConfig enc_cfg;
  enc_cfg.activation = options.activation;
  enc_cfg.widths.push_back(2);
  enc_cfg.widths.insert(enc_cfg.widths.end(), options.hidden.begin(), options.hidden.end());
  enc_cfg.widths.push_back(options.code_dim);

  const Rng root(seed);
  const std::uint64_t init_seed = root.derive(1).seed();

  WeakstarReport report;
  report.seed = seed;
  report.mean_offsets.resize(static_cast<std::size_t>(length));
  report.values.resize(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    // Halving sequence; the last element sits at the P=Q limit exactly.
    report.mean_offsets[static_cast<std::size_t>(i)] =
        i + 1 == length ? 0.0 : options.mu0 / std::pow(2.0, i);
  }

  const Eigen::Index n = options.n;
  for (int i = 0; i < length; ++i) {
    Rng draw = root.derive(static_cast<std::uint64_t>(i) + 2);
    const double mu = report.mean_offsets[static_cast<std::size_t>(i)];
    const Matrix x_learn = gaussian_batch(n, 0.0, draw);
    const Matrix y_learn = gaussian_batch(n, mu, draw);
    const Matrix x_eval = gaussian_batch(n, 0.0, draw);
    const Matrix y_eval = gaussian_batch(n, mu, draw);

    const Mlp encoder = learn_encoder(x_learn, y_learn, code_kernel, enc_cfg, options.budget,
                                      options.learn_rate, options.clip, init_seed);
    const Matrix cx = encoder.forward(x_eval);
    const Matrix cy = encoder.forward(y_eval);
    // Unbiased on the held-out half: centered at zero in the P=Q limit, so
    // the endpoint is comparable against the permutation null.
    report.values[static_cast<std::size_t>(i)] = mmd2_unbiased(cx, cy, code_kernel).estimate;

    if (i + 1 == length) {
      // Permutation null of the same statistic under the learned kernel.
      Matrix pooled(2 * n, cx.cols());
      pooled.topRows(n) = cx;
      pooled.bottomRows(n) = cy;
      std::vector<double> null_stats(static_cast<std::size_t>(options.null_permutations));
      Rng perm_root = draw.derive(1);
      std::vector<int> order(static_cast<std::size_t>(2 * n));
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t b = 0; b < null_stats.size(); ++b) {
        Rng stream = perm_root.derive(static_cast<std::uint64_t>(b) + 1);
        std::vector<int> perm = order;
        stream.shuffle(perm);
        Matrix px(n, cx.cols());
        Matrix py(n, cx.cols());
        for (Eigen::Index r = 0; r < n; ++r) {
          px.row(r) = pooled.row(perm[static_cast<std::size_t>(r)]);
          py.row(r) = pooled.row(perm[static_cast<std::size_t>(n + r)]);
        }
        null_stats[b] = mmd2_unbiased(px, py, code_kernel).estimate;
      }
      const double mean =
          std::accumulate(null_stats.begin(), null_stats.end(), 0.0) / null_stats.size();
      double var = 0.0;
      for (double s : null_stats) var += (s - mean) * (s - mean);
      var /= static_cast<double>(null_stats.size() - 1);
      report.endpoint_null_std = std::sqrt(var);
    }
  }
  report.wall_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

TimingReport timing_bench(const std::vector<Eigen::Index>& batch_sizes, const KernelSpec& kernel,
                          int repetitions, std::uint64_t seed) {
  if (repetitions < 1) throw ContractError("timing_bench: needs at least one repetition");
  for (Eigen::Index b : batch_sizes) {
    if (b < 2) throw ContractError("timing_bench: batch sizes must be >= 2");
  }

  DatasetSpec data_spec;  // 8-Gaussian ring, the default workload
  NoiseSpec noise_spec;
  TrainConfig cfg;
  cfg.kernel = kernel;
  cfg.seed = seed;
  ModelShape shape;

  TimingReport report;
  report.seed = seed;
  for (Eigen::Index b : batch_sizes) {
    cfg.batch_size = b;
    Rng rng(seed);
    Rng data_rng = rng.derive(1);
    Rng noise_rng = rng.derive(2);
    Rng penalty_rng = rng.derive(3);
    ModelBundle bundle =
        init_model(generator_config(shape, noise_spec.dimension, 2),
                   encoder_config(shape, 2), decoder_config(shape, 2), rng.derive(4).seed());
    // Warm-up allocates buffers outside the timed region.
    {
      const Matrix x = sample(data_spec, b, data_rng);
      const Matrix z = sample_noise(noise_spec, b, noise_rng);
      critic_step(bundle, x, z, cfg, penalty_rng);
      generator_step(bundle, x, z, cfg);
    }
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(repetitions));
    for (int rep = 0; rep < repetitions; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int j = 0; j < cfg.n_critic; ++j) {
        const Matrix x = sample(data_spec, b, data_rng);
        const Matrix z = sample_noise(noise_spec, b, noise_rng);
        critic_step(bundle, x, z, cfg, penalty_rng);
      }
      const Matrix x = sample(data_spec, b, data_rng);
      const Matrix z = sample_noise(noise_spec, b, noise_rng);
      generator_step(bundle, x, z, cfg);
      times.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    report.batch_sizes.push_back(b);
    report.median_secs.push_back(median_of(times));
  }

  // Least-squares slope of log t on log B.
  const std::size_t k = report.batch_sizes.size();
  if (k >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const double lx = std::log(static_cast<double>(report.batch_sizes[i]));
      const double ly = std::log(report.median_secs[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    const double denom = k * sxx - sx * sx;
    report.exponent = denom != 0.0 ? (k * sxy - sx * sy) / denom : 0.0;
  }
  return report;
}

namespace {

std::vector<double> ranks_with_ties(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return num / std::sqrt(va * vb);
}

}  // namespace

CurveReport curve_correlation(const TrainTrace& trace, int window) {
  if (trace.rows.empty()) throw ContractError("curve_correlation: empty trace");
  if (window < 1) throw ContractError("curve_correlation: window must be >= 1");
  const std::size_t n = trace.rows.size();
  CurveReport report;
  report.iters.reserve(n);
  report.smoothed.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - window : 0;
    double acc = 0.0;
    for (std::size_t j = lo; j <= i; ++j) acc += trace.rows[j].held_out_mmd2;
    report.iters.push_back(trace.rows[i].iter);
    report.smoothed.push_back(acc / static_cast<double>(i - lo + 1));
  }
  std::vector<double> iter_values(n);
  for (std::size_t i = 0; i < n; ++i) iter_values[i] = static_cast<double>(report.iters[i]);
  report.spearman = pearson(ranks_with_ties(iter_values), ranks_with_ties(report.smoothed));
  return report;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw IoError(path + ": cannot open for writing");
  file << text;
  if (!file) throw IoError(path + ": write failed");
}

std::string csv_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_report(const std::string& out_dir, const PowerReport& report) {
  std::filesystem::create_directories(out_dir);
  std::string csv = "arm,power\nfixed," + csv_num(report.fixed_power) + "\nlearned," +
                    csv_num(report.learned_power) + "\n";
  write_text(out_dir + "/power.csv", csv);
  nlohmann::json j;
  j["experiment"] = "power";
  j["fixed_power"] = report.fixed_power;
  j["learned_power"] = report.learned_power;
  j["trials"] = report.trials;
  j["n"] = report.n;
  j["seed"] = report.seed;
  j["wall_secs"] = report.wall_secs;
  write_text(out_dir + "/power.json", j.dump(2) + "\n");
}

void save_report(const std::string& out_dir, const WeakstarReport& report) {
  std::filesystem::create_directories(out_dir);
  std::string csv = "mean_offset,mmd2\n";
  for (std::size_t i = 0; i < report.values.size(); ++i) {
    csv += csv_num(report.mean_offsets[i]) + "," + csv_num(report.values[i]) + "\n";
  }
  write_text(out_dir + "/weakstar.csv", csv);
  nlohmann::json j;
  j["experiment"] = "weakstar";
  j["mean_offsets"] = report.mean_offsets;
  j["values"] = report.values;
  j["endpoint_null_std"] = report.endpoint_null_std;
  j["seed"] = report.seed;
  j["wall_secs"] = report.wall_secs;
  write_text(out_dir + "/weakstar.json", j.dump(2) + "\n");
}

void save_report(const std::string& out_dir, const TimingReport& report) {
  std::filesystem::create_directories(out_dir);
  std::string csv = "batch_size,median_secs_per_iter\n";
  for (std::size_t i = 0; i < report.batch_sizes.size(); ++i) {
    csv += std::to_string(report.batch_sizes[i]) + "," + csv_num(report.median_secs[i]) + "\n";
  }
  write_text(out_dir + "/timing.csv", csv);
  nlohmann::json j;
  j["experiment"] = "timing";
  j["batch_sizes"] = report.batch_sizes;
  j["median_secs"] = report.median_secs;
  j["exponent"] = report.exponent;
  j["seed"] = report.seed;
  write_text(out_dir + "/timing.json", j.dump(2) + "\n");
}

void save_report(const std::string& out_dir, const CurveReport& report) {
  std::filesystem::create_directories(out_dir);
  std::string csv = "iter,smoothed_held_out_mmd2\n";
  for (std::size_t i = 0; i < report.smoothed.size(); ++i) {
    csv += std::to_string(report.iters[i]) + "," + csv_num(report.smoothed[i]) + "\n";
  }
  write_text(out_dir + "/curve.csv", csv);
  nlohmann::json j;
  j["experiment"] = "curve";
  j["spearman"] = report.spearman;
  write_text(out_dir + "/curve.json", j.dump(2) + "\n");
}

void save_report(const std::string& out_dir, const CoverageReport& report) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir + "/coverage.csv",
             "covered,high_quality_fraction\n" + std::to_string(report.covered) + "," +
                 csv_num(report.high_quality_fraction) + "\n");
  nlohmann::json j;
  j["experiment"] = "coverage";
  j["covered"] = report.covered;
  j["high_quality_fraction"] = report.high_quality_fraction;
  write_text(out_dir + "/coverage.json", j.dump(2) + "\n");
}

}  // namespace mmdforge
