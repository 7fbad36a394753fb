#include "mmdforge/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

#include "mmdforge/errors.hpp"
#include "mmdforge/optim.hpp"

namespace mmdforge {

namespace {

// Derived-stream tags; any fixed distinct values work.
constexpr std::uint64_t kTagModel = 1;
constexpr std::uint64_t kTagBatch = 2;
constexpr std::uint64_t kTagNoise = 3;
constexpr std::uint64_t kTagEval = 4;
constexpr std::uint64_t kTagPenalty = 5;
constexpr std::uint64_t kTagPretrain = 6;

Matrix draw_rows(const Matrix& pool, Eigen::Index count, Rng& rng) {
  Matrix out(count, pool.cols());
  for (Eigen::Index i = 0; i < count; ++i) {
    out.row(i) = pool.row(
        static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(pool.rows()))));
  }
  return out;
}

Tensor estimate_from_codes(const Tensor& cx, const Tensor& cf, const KernelSpec& k,
                           EstimatorKind kind) {
  const Tensor kxx = gram(cx, cx, k);
  const Tensor kxy = gram(cx, cf, k);
  const Tensor kyy = gram(cf, cf, k);
  return kind == EstimatorKind::Biased ? mmd2_biased_from_grams(kxx, kxy, kyy)
                                       : mmd2_unbiased_from_grams(kxx, kxy, kyy);
}

}  // namespace

MlpConfig generator_config(const ModelShape& shape, Eigen::Index noise_dim,
                           Eigen::Index data_dim) {
  MlpConfig cfg;
  cfg.activation = shape.activation;
  cfg.widths.push_back(noise_dim);
  cfg.widths.insert(cfg.widths.end(), shape.gen_hidden.begin(), shape.gen_hidden.end());
  cfg.widths.push_back(data_dim);
  return cfg;
}

MlpConfig encoder_config(const ModelShape& shape, Eigen::Index data_dim) {
  MlpConfig cfg;
  cfg.activation = shape.activation;
  cfg.widths.push_back(data_dim);
  cfg.widths.insert(cfg.widths.end(), shape.enc_hidden.begin(), shape.enc_hidden.end());
  cfg.widths.push_back(shape.code_dim);
  return cfg;
}

MlpConfig decoder_config(const ModelShape& shape, Eigen::Index data_dim) {
  MlpConfig cfg;
  cfg.activation = shape.activation;
  cfg.widths.push_back(shape.code_dim);
  cfg.widths.insert(cfg.widths.end(), shape.enc_hidden.rbegin(), shape.enc_hidden.rend());
  cfg.widths.push_back(data_dim);
  return cfg;
}

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 2) throw ContractError("train: batch size must be >= 2");
  if (cfg.n_critic < 1) throw ContractError("train: n_critic must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ContractError("train: learning rate must be positive");
  if (cfg.lambda_ae < 0.0 || cfg.lambda_fsr < 0.0 || cfg.lambda_gp < 0.0) {
    throw ContractError("train: penalty weights must be >= 0");
  }
  if (cfg.iters < 1) throw ContractError("train: needs at least one iteration");
  if (cfg.eval_every < 1) throw ContractError("train: eval cadence must be >= 1");
  if (cfg.lipschitz == LipschitzMode::Clip && !(cfg.clip > 0.0)) {
    throw ContractError("train: clip must be positive");
  }
  validate(cfg.kernel);
  validate(cfg.eval_kernel);
}

CriticLog critic_step(ModelBundle& bundle, const Matrix& x, const Matrix& z,
                      const TrainConfig& cfg, Rng& rng) {
  if (cfg.mode != TrainMode::MmdGan && cfg.mode != TrainMode::WganLinear) {
    throw ContractError("critic_step: mode has no critic update");
  }
  const Eigen::Index b = x.rows();
  if (b != z.rows()) throw DimensionError("critic_step: batch sizes differ");
  const Matrix fake = bundle.generator.forward(z);

  TapeScope scope;
  Tape& tape = scope.tape();
  TrackedMlp enc(bundle.encoder, tape);
  TrackedMlp dec(bundle.decoder, tape);

  // One encoder pass over [x; fake]; both the MMD term and the autoencoder
  // term read the same code tensor.
  Matrix stacked(2 * b, x.cols());
  stacked.topRows(b) = x;
  stacked.bottomRows(b) = fake;
  const Tensor batch = Tensor::constant(stacked);
  const Tensor codes = enc.forward(batch);
  const Tensor cx = slice_rows(codes, 0, b);
  const Tensor cf = slice_rows(codes, b, b);

  const KernelSpec code_kernel =
      cfg.mode == TrainMode::WganLinear ? KernelSpec::linear() : cfg.kernel;
  const EstimatorKind kind =
      cfg.mode == TrainMode::WganLinear ? EstimatorKind::Biased : cfg.train_estimator;
  const Tensor mmd2 = estimate_from_codes(cx, cf, code_kernel, kind);

  CriticLog log;
  log.mmd2 = mmd2.item();
  Tensor objective = mmd2;

  if (cfg.lambda_ae > 0.0) {
    const Tensor recon = dec.forward(codes);
    const Tensor ae = scale(sum(square(sub(recon, batch))), 1.0 / static_cast<double>(2 * b));
    log.ae_loss = ae.item();
    objective = sub(objective, scale(ae, cfg.lambda_ae));
  }
  if (cfg.lambda_fsr > 0.0) {
    const Tensor ones_row = Tensor::constant(Matrix::Ones(1, b) / static_cast<double>(b));
    const Tensor mean_x = matmul(ones_row, cx);
    const Tensor mean_f = matmul(ones_row, cf);
    // sum_h min(gap_h, 0), written as -sum max(-gap, 0).
    const Tensor gap = sub(mean_x, mean_f);
    const Tensor hinge = neg(sum(maximum(neg(gap), 0.0)));
    log.fsr_penalty = cfg.lambda_fsr * hinge.item();
    objective = add(objective, scale(hinge, cfg.lambda_fsr));
  }
  if (cfg.lipschitz == LipschitzMode::GradientPenalty) {
    const Tensor gp = gradient_penalty(enc, x, fake, code_kernel, rng);
    objective = sub(objective, scale(gp, cfg.lambda_gp));
  }

  std::vector<Tensor> targets = enc.params();
  targets.insert(targets.end(), dec.params().begin(), dec.params().end());
  const std::vector<Matrix> grads = tape.gradients(objective, targets);
  const std::size_t enc_count = enc.params().size();
  std::vector<Matrix> enc_grads(grads.begin(), grads.begin() + static_cast<std::ptrdiff_t>(enc_count));
  std::vector<Matrix> dec_grads(grads.begin() + static_cast<std::ptrdiff_t>(enc_count), grads.end());
  rmsprop_step(bundle.encoder.params(), enc_grads, bundle.encoder_state, cfg.learning_rate, 1.0);
  rmsprop_step(bundle.decoder.params(), dec_grads, bundle.decoder_state, cfg.learning_rate, 1.0);
  if (cfg.lipschitz == LipschitzMode::Clip) {
    clip_params(bundle.encoder.params(), cfg.clip);
    clip_params(bundle.decoder.params(), cfg.clip);
  }
  return log;
}

double generator_step(ModelBundle& bundle, const Matrix& x, const Matrix& z,
                      const TrainConfig& cfg) {
  if (x.rows() != z.rows()) throw DimensionError("generator_step: batch sizes differ");
  TapeScope scope;
  Tape& tape = scope.tape();
  TrackedMlp gen(bundle.generator, tape);
  const Tensor fake = gen.forward(Tensor::constant(z));

  Tensor loss;
  switch (cfg.mode) {
    case TrainMode::GmmnD: {
      const Tensor cx = Tensor::constant(x);
      loss = estimate_from_codes(cx, fake, cfg.kernel, cfg.train_estimator);
      break;
    }
    case TrainMode::MmdGan:
    case TrainMode::GmmnC: {
      TrackedMlp enc(bundle.encoder, tape);  // gradients flow through, phi not updated
      const Tensor cx = enc.forward(Tensor::constant(x));
      const Tensor cf = enc.forward(fake);
      loss = estimate_from_codes(cx, cf, cfg.kernel, cfg.train_estimator);
      break;
    }
    case TrainMode::WganLinear: {
      TrackedMlp enc(bundle.encoder, tape);
      const Tensor cx = enc.forward(Tensor::constant(x));
      const Tensor cf = enc.forward(fake);
      loss = estimate_from_codes(cx, cf, KernelSpec::linear(), EstimatorKind::Biased);
      break;
    }
  }

  const std::vector<Matrix> grads = tape.gradients(loss, gen.params());
  rmsprop_step(bundle.generator.params(), grads, bundle.generator_state, cfg.learning_rate,
               -1.0);
  return loss.item();
}

double sign_flip_check(const ModelBundle& bundle, const Matrix& x, const Matrix& z,
                       const KernelSpec& code_kernel) {
  const Matrix fake = bundle.generator.forward(z);
  const Matrix cx = bundle.encoder.forward(x);
  const Matrix cf = bundle.encoder.forward(fake);
  const Mlp flipped = negate_output_layer(bundle.encoder);
  const Matrix fx = flipped.forward(x);
  const Matrix ff = flipped.forward(fake);
  const double original = mmd2_unbiased(cx, cf, code_kernel).estimate;
  const double mirrored = mmd2_unbiased(fx, ff, code_kernel).estimate;
  return std::abs(original - mirrored);
}

void save_trace(const std::string& path, const TrainTrace& trace) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw IoError(path + ": cannot open for writing");
  file << "iter,mmd2_critic,ae_loss,fsr_penalty,held_out_mmd2,secs_per_iter\n";
  char buf[64];
  for (const TraceRow& row : trace.rows) {
    file << row.iter;
    const double vals[5] = {row.mmd2_critic, row.ae_loss, row.fsr_penalty, row.held_out_mmd2,
                            row.secs_per_iter};
    for (double v : vals) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      file << ',' << buf;
    }
    file << '\n';
  }
  if (!file) throw IoError(path + ": write failed");
}

TrainTrace load_trace(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw IoError(path + ": cannot open");
  std::string line;
  if (!std::getline(file, line)) throw ParseError(path + ": empty trace");
  TrainTrace trace;
  std::size_t line_no = 1;
  while (std::getline(file, line)) {
    ++line_no;
    if (line.empty()) continue;
    TraceRow row;
    double iter = 0;
    double* fields[6] = {&iter,           &row.mmd2_critic,   &row.ae_loss,
                         &row.fsr_penalty, &row.held_out_mmd2, &row.secs_per_iter};
    const char* p = line.c_str();
    for (int f = 0; f < 6; ++f) {
      char* end = nullptr;
      *fields[f] = std::strtod(p, &end);
      if (end == p || (f < 5 && *end != ',')) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": malformed trace row");
      }
      p = end + 1;
    }
    row.iter = static_cast<int>(iter);
    trace.rows.push_back(row);
  }
  return trace;
}

namespace {

double held_out_metric(const ModelBundle& bundle, const Matrix& held, const NoiseSpec& noise,
                       const KernelSpec& eval_kernel, Rng rng) {
  const Eigen::Index n_eval = std::min<Eigen::Index>(held.rows(), 1024);
  const Matrix z = sample_noise(noise, n_eval, rng);
  const Matrix fake = bundle.generator.forward(z);
  return mmd2_unbiased(held.topRows(n_eval), fake, eval_kernel).estimate;
}

void pretrain_autoencoder(ModelBundle& bundle, const Matrix& pool, const TrainConfig& cfg,
                          Rng& rng) {
  RmsPropState enc_state;
  RmsPropState dec_state;
  for (int i = 0; i < cfg.pretrain_iters; ++i) {
    const Matrix batch = draw_rows(pool, cfg.batch_size, rng);
    TapeScope scope;
    Tape& tape = scope.tape();
    TrackedMlp enc(bundle.encoder, tape);
    TrackedMlp dec(bundle.decoder, tape);
    const Tensor loss = reconstruction_loss(enc, dec, batch);
    std::vector<Tensor> targets = enc.params();
    targets.insert(targets.end(), dec.params().begin(), dec.params().end());
    const std::vector<Matrix> grads = tape.gradients(loss, targets);
    const std::size_t enc_count = enc.params().size();
    std::vector<Matrix> enc_grads(grads.begin(),
                                  grads.begin() + static_cast<std::ptrdiff_t>(enc_count));
    std::vector<Matrix> dec_grads(grads.begin() + static_cast<std::ptrdiff_t>(enc_count),
                                  grads.end());
    rmsprop_step(bundle.encoder.params(), enc_grads, enc_state, cfg.pretrain_lr, -1.0);
    rmsprop_step(bundle.decoder.params(), dec_grads, dec_state, cfg.pretrain_lr, -1.0);
  }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetSpec& data_spec,
                  const NoiseSpec& noise_spec, const ModelShape& shape,
                  const std::string& out_dir) {
  validate(cfg);
  validate(data_spec);
  validate(noise_spec);
  std::filesystem::create_directories(out_dir);
  const std::string trace_path = out_dir + "/trace.csv";
  const std::string checkpoint_path = out_dir + "/checkpoint.bin";

  Rng data_rng(data_spec.seed);
  const Matrix pool = data_spec.source == DataSource::File
                          ? load_csv(data_spec.path)
                          : sample(data_spec, data_spec.samples, data_rng);
  auto [train_pool, held] = split(data_spec, pool);
  const Eigen::Index data_dim = pool.cols();

  const Rng root(cfg.seed);
  TrainResult result;
  result.bundle = init_model(generator_config(shape, noise_spec.dimension, data_dim),
                             encoder_config(shape, data_dim), decoder_config(shape, data_dim),
                             root.derive(kTagModel).seed());
  ModelBundle& bundle = result.bundle;

  Rng batch_rng = root.derive(kTagBatch);
  Rng noise_rng = root.derive(kTagNoise);
  Rng penalty_rng = root.derive(kTagPenalty);
  const Rng eval_root = root.derive(kTagEval);

  const bool has_critic = cfg.mode == TrainMode::MmdGan || cfg.mode == TrainMode::WganLinear;
  if (cfg.mode == TrainMode::GmmnC) {
    Rng pre_rng = root.derive(kTagPretrain);
    pretrain_autoencoder(bundle, train_pool, cfg, pre_rng);
  }

  TrainTrace& trace = result.trace;
  auto flush = [&]() {
    save_trace(trace_path, trace);
    save_checkpoint(checkpoint_path, bundle);
  };

  TraceRow first;
  first.iter = 0;
  first.held_out_mmd2 =
      held_out_metric(bundle, held, noise_spec, cfg.eval_kernel, eval_root.derive(0));
  trace.rows.push_back(first);
  flush();

  auto last_flush_time = std::chrono::steady_clock::now();
  int last_flush_iter = 0;
  CriticLog critic_log;
  double gen_loss = 0.0;

  try {
    for (int iter = 1; iter <= cfg.iters; ++iter) {
      if (has_critic) {
        for (int j = 0; j < cfg.n_critic; ++j) {
          const Matrix x = draw_rows(train_pool, cfg.batch_size, batch_rng);
          const Matrix z = sample_noise(noise_spec, cfg.batch_size, noise_rng);
          critic_log = critic_step(bundle, x, z, cfg, penalty_rng);
        }
      }
      const Matrix x = draw_rows(train_pool, cfg.batch_size, batch_rng);
      const Matrix z = sample_noise(noise_spec, cfg.batch_size, noise_rng);
      gen_loss = generator_step(bundle, x, z, cfg);

      if (iter % cfg.eval_every == 0 || iter == cfg.iters) {
        TraceRow row;
        row.iter = iter;
        row.mmd2_critic = has_critic ? critic_log.mmd2 : gen_loss;
        row.ae_loss = critic_log.ae_loss;
        row.fsr_penalty = critic_log.fsr_penalty;
        row.held_out_mmd2 = held_out_metric(bundle, held, noise_spec, cfg.eval_kernel,
                                            eval_root.derive(static_cast<std::uint64_t>(iter)));
        const auto now = std::chrono::steady_clock::now();
        row.secs_per_iter = std::chrono::duration<double>(now - last_flush_time).count() /
                            static_cast<double>(iter - last_flush_iter);
        last_flush_time = now;
        last_flush_iter = iter;
        trace.rows.push_back(row);
        flush();
      }
    }
  } catch (const NumericError& err) {
    // Divergence: keep the last written checkpoint, record the failure.
    save_trace(trace_path, trace);
    std::ofstream diag(out_dir + "/diagnostics.txt", std::ios::trunc);
    diag << "non-finite loss during training\n" << err.what() << '\n';
    throw;
  }
  return result;
}

}  // namespace mmdforge
