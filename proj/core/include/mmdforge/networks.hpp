#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmdforge/kernels.hpp"
#include "mmdforge/optim.hpp"
#include "mmdforge/rng.hpp"
#include "mmdforge/tensor.hpp"

namespace mmdforge {

enum class Activation { Relu, Tanh, Elu };

struct MlpConfig {
  std::vector<Eigen::Index> widths;  // input, hidden..., output
  Activation activation = Activation::Relu;
};

// Fully connected stack; the final layer is affine with no activation.
// Parameters live in one flat vector [W0, b0, W1, b1, ...] so optimizer
// steps, clipping and checkpoints all see the same declaration order.
class Mlp {
 public:
  Mlp() = default;
  // Weights uniform in [-s, s] with s = sqrt(6/(fan_in+fan_out)), biases zero.
  Mlp(MlpConfig config, Rng& rng);

  const MlpConfig& config() const { return config_; }
  Eigen::Index input_dim() const { return config_.widths.front(); }
  Eigen::Index output_dim() const { return config_.widths.back(); }
  std::size_t layer_count() const { return config_.widths.size() - 1; }

  Matrix& weight(std::size_t layer) { return params_[2 * layer]; }
  const Matrix& weight(std::size_t layer) const { return params_[2 * layer]; }
  Matrix& bias(std::size_t layer) { return params_[2 * layer + 1]; }
  const Matrix& bias(std::size_t layer) const { return params_[2 * layer + 1]; }

  std::vector<Matrix>& params() { return params_; }
  const std::vector<Matrix>& params() const { return params_; }

  // Batch is rows-of-points; returns rows-of-outputs. Untracked evaluation.
  Matrix forward(const Matrix& batch) const;

 private:
  friend Mlp mlp_from_parts(MlpConfig config, std::vector<Matrix> params);
  MlpConfig config_;
  std::vector<Matrix> params_;
};

// Rebuild an Mlp from a config and a parameter list in declaration order.
Mlp mlp_from_parts(MlpConfig config, std::vector<Matrix> params);

void validate(const MlpConfig& config);

// Tape-resident view of an Mlp: one leaf per parameter matrix, created at
// construction, so gradients land in the same declaration order.
class TrackedMlp {
 public:
  TrackedMlp(const Mlp& net, Tape& tape);

  Tensor forward(const Tensor& batch) const;
  const std::vector<Tensor>& params() const { return params_; }
  Tape& tape() const { return *tape_; }

 private:
  MlpConfig config_;
  std::vector<Tensor> params_;
  Tape* tape_;
};

struct ModelBundle {
  Mlp generator;  // noise dim -> data dim
  Mlp encoder;    // data dim -> code dim h
  Mlp decoder;    // h -> data dim
  RmsPropState generator_state;
  RmsPropState encoder_state;
  RmsPropState decoder_state;
};

// Validates the dimension chain (enc out == dec in, dec out == enc in ==
// gen out) and initialises each net from an independent derived stream.
ModelBundle init_model(const MlpConfig& gen_cfg, const MlpConfig& enc_cfg,
                       const MlpConfig& dec_cfg, std::uint64_t seed);

// Mean over rows of the squared error ||y - dec(enc(y))||^2, differentiable
// through both nets.
Tensor reconstruction_loss(const TrackedMlp& encoder, const TrackedMlp& decoder,
                           const Matrix& batch);

// Penalty mean((||grad_t w(t)|| - 1)^2) where w is the empirical
// witness mean_i k(enc(t), enc(x_i)) - mean_j k(enc(t), enc(x_fake_j)) and t
// interpolates real and fake rows with the given uniform coefficients u
// (B x 1). Differentiable in the encoder parameters.
Tensor gradient_penalty(const TrackedMlp& encoder, const Matrix& x_real, const Matrix& x_fake,
                        const KernelSpec& inner_kernel, const Matrix& u);
Tensor gradient_penalty(const TrackedMlp& encoder, const Matrix& x_real, const Matrix& x_fake,
                        const KernelSpec& inner_kernel, Rng& rng);

// Copy with the final affine layer negated: composing any symmetric kernel
// with the result leaves every Gram entry unchanged.
Mlp negate_output_layer(const Mlp& net);

// Frozen snapshot of a net as a type-erased encoder for composed kernels.
EncoderHandle make_encoder_handle(const Mlp& net);

// Binary checkpoint: magic, version, dims, per-net layer tables, then raw
// little-endian 64-bit parameter buffers in declaration order.
void save_checkpoint(const std::string& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::string& path);

}  // namespace mmdforge
