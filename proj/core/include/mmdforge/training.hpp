#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmdforge/data.hpp"
#include "mmdforge/kernels.hpp"
#include "mmdforge/mmd.hpp"
#include "mmdforge/networks.hpp"

namespace mmdforge {

enum class TrainMode { MmdGan, GmmnD, GmmnC, WganLinear };
enum class LipschitzMode { Clip, GradientPenalty, None };

// Widths around the data/noise dims; generator is noise -> gen_hidden ->
// data, encoder data -> enc_hidden -> code_dim, decoder mirrors the encoder.
struct ModelShape {
  std::vector<Eigen::Index> gen_hidden = {64, 64};
  std::vector<Eigen::Index> enc_hidden = {64, 64};
  Eigen::Index code_dim = 16;
  Activation activation = Activation::Relu;
};

MlpConfig generator_config(const ModelShape& shape, Eigen::Index noise_dim,
                           Eigen::Index data_dim);
MlpConfig encoder_config(const ModelShape& shape, Eigen::Index data_dim);
MlpConfig decoder_config(const ModelShape& shape, Eigen::Index data_dim);

struct TrainConfig {
  TrainMode mode = TrainMode::MmdGan;
  // Critic-space kernel (raw data space for gmmn_d).
  KernelSpec kernel = KernelSpec::mixture_rbf({1, 2, 4, 8, 16});
  // Fixed raw-space kernel for held-out curves, comparable across modes.
  KernelSpec eval_kernel = KernelSpec::mixture_rbf({1, 2, 4, 8, 16});
  LipschitzMode lipschitz = LipschitzMode::Clip;
  double clip = 0.01;
  double lambda_gp = 1.0;
  double lambda_ae = 8.0;
  double lambda_fsr = 16.0;
  Eigen::Index batch_size = 64;
  int n_critic = 5;
  int iters = 2000;  // generator iterations
  double learning_rate = 0.00005;
  std::uint64_t seed = 1;
  EstimatorKind train_estimator = EstimatorKind::Biased;
  int eval_every = 100;  // held-out metric and trace cadence
  int pretrain_iters = 2000;  // gmmn_c autoencoder pretraining
  double pretrain_lr = 0.001;
};

void validate(const TrainConfig& cfg);

struct TraceRow {
  int iter = 0;
  double mmd2_critic = 0.0;
  double ae_loss = 0.0;
  double fsr_penalty = 0.0;
  double held_out_mmd2 = 0.0;
  double secs_per_iter = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
};

// Header: iter,mmd2_critic,ae_loss,fsr_penalty,held_out_mmd2,secs_per_iter.
void save_trace(const std::string& path, const TrainTrace& trace);
TrainTrace load_trace(const std::string& path);

struct CriticLog {
  double mmd2 = 0.0;
  double ae_loss = 0.0;
  double fsr_penalty = 0.0;  // hinge term as it enters the objective
};

// One RMSProp ascent step on the critic (encoder + decoder), theta frozen.
// Applies clipping or subtracts the gradient penalty per cfg.lipschitz.
// Valid for the modes with an adversarial critic (mmdgan, wgan_linear).
CriticLog critic_step(ModelBundle& bundle, const Matrix& x, const Matrix& z,
                      const TrainConfig& cfg, Rng& rng);

// One RMSProp descent step on the generator through the frozen critic
// (mmdgan/gmmn_c), raw data space (gmmn_d), or the squared mean gap of
// encoder outputs (wgan_linear). Returns the loss value.
double generator_step(ModelBundle& bundle, const Matrix& x, const Matrix& z,
                      const TrainConfig& cfg);

// |M^2 with k(enc(.)) - M^2 with k(-enc(.))| where the second encoder negates
// the final affine layer; the distance is invariant under this flip.
double sign_flip_check(const ModelBundle& bundle, const Matrix& x, const Matrix& z,
                       const KernelSpec& code_kernel);

struct TrainResult {
  TrainTrace trace;
  ModelBundle bundle;
};

// Full run: materialize pool, split, init, optional autoencoder pretraining
// (gmmn_c), alternate n_c critic steps with one generator step, log the
// held-out metric at the cadence, write trace.csv and checkpoint.bin into
// out_dir. Deterministic given cfg and spec seeds. On a non-finite loss the
// last written checkpoint is kept, diagnostics.txt records the failure, and
// the NumericError propagates.
TrainResult train(const TrainConfig& cfg, const DatasetSpec& data_spec,
                  const NoiseSpec& noise_spec, const ModelShape& shape,
                  const std::string& out_dir);

}  // namespace mmdforge
