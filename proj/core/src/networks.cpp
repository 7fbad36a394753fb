#include "mmdforge/networks.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

#include "mmdforge/errors.hpp"

namespace mmdforge {

void validate(const MlpConfig& config) {
  if (config.widths.size() < 2) throw ContractError("mlp: needs at least one affine layer");
  for (Eigen::Index w : config.widths) {
    if (w < 1) throw ContractError("mlp: layer widths must be >= 1");
  }
}

Mlp::Mlp(MlpConfig config, Rng& rng) : config_(std::move(config)) {
  validate(config_);
  const std::size_t layers = config_.widths.size() - 1;
  params_.reserve(2 * layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const Eigen::Index fan_in = config_.widths[l];
    const Eigen::Index fan_out = config_.widths[l + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-s, s);
    }
    params_.push_back(std::move(w));
    params_.push_back(Matrix::Zero(1, fan_out));
  }
}

Mlp mlp_from_parts(MlpConfig config, std::vector<Matrix> params) {
  validate(config);
  const std::size_t layers = config.widths.size() - 1;
  if (params.size() != 2 * layers) throw ContractError("mlp: parameter list length mismatch");
  for (std::size_t l = 0; l < layers; ++l) {
    if (params[2 * l].rows() != config.widths[l] || params[2 * l].cols() != config.widths[l + 1] ||
        params[2 * l + 1].rows() != 1 || params[2 * l + 1].cols() != config.widths[l + 1]) {
      throw ContractError("mlp: parameter shape mismatch at layer " + std::to_string(l));
    }
  }
  Mlp net;
  net.config_ = std::move(config);
  net.params_ = std::move(params);
  return net;
}

namespace {

Matrix activate(const Matrix& x, Activation act) {
  switch (act) {
    case Activation::Relu: return x.cwiseMax(0.0);
    case Activation::Tanh: return x.array().tanh().matrix();
    case Activation::Elu:
      return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  }
  throw ContractError("mlp: unknown activation");
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::Relu: return maximum(x, 0.0);
    case Activation::Tanh: return tanh(x);
    case Activation::Elu: return elu(x);
  }
  throw ContractError("mlp: unknown activation");
}

}  // namespace

Matrix Mlp::forward(const Matrix& batch) const {
  if (batch.cols() != input_dim()) {
    throw DimensionError("mlp: input dimension " + std::to_string(batch.cols()) +
                         ", expected " + std::to_string(input_dim()));
  }
  Matrix h = batch;
  const std::size_t layers = layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    h = ((h * weight(l)).rowwise() + bias(l).row(0)).eval();
    if (l + 1 < layers) h = activate(h, config_.activation);
  }
  if (!h.allFinite()) throw NumericError("mlp: non-finite forward output");
  return h;
}

TrackedMlp::TrackedMlp(const Mlp& net, Tape& tape) : config_(net.config()), tape_(&tape) {
  params_.reserve(net.params().size());
  for (const Matrix& p : net.params()) params_.push_back(tape.leaf(p));
}

Tensor TrackedMlp::forward(const Tensor& batch) const {
  if (batch.cols() != config_.widths.front()) {
    throw DimensionError("mlp: input dimension " + std::to_string(batch.cols()) +
                         ", expected " + std::to_string(config_.widths.front()));
  }
  Tensor h = batch;
  const std::size_t layers = config_.widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add(matmul(h, params_[2 * l]), params_[2 * l + 1]);
    if (l + 1 < layers) h = activate(h, config_.activation);
  }
  return h;
}

ModelBundle init_model(const MlpConfig& gen_cfg, const MlpConfig& enc_cfg,
                       const MlpConfig& dec_cfg, std::uint64_t seed) {
  validate(gen_cfg);
  validate(enc_cfg);
  validate(dec_cfg);
  if (enc_cfg.widths.back() != dec_cfg.widths.front()) {
    throw ContractError("init_model: encoder output must match decoder input");
  }
  if (dec_cfg.widths.back() != enc_cfg.widths.front()) {
    throw ContractError("init_model: decoder output must match encoder input");
  }
  if (gen_cfg.widths.back() != enc_cfg.widths.front()) {
    throw ContractError("init_model: generator output must match data dimension");
  }
  Rng root(seed);
  ModelBundle bundle;
  Rng gen_rng = root.derive(1);
  Rng enc_rng = root.derive(2);
  Rng dec_rng = root.derive(3);
  bundle.generator = Mlp(gen_cfg, gen_rng);
  bundle.encoder = Mlp(enc_cfg, enc_rng);
  bundle.decoder = Mlp(dec_cfg, dec_rng);
  return bundle;
}

Tensor reconstruction_loss(const TrackedMlp& encoder, const TrackedMlp& decoder,
                           const Matrix& batch) {
  const Tensor y = Tensor::constant(batch);
  const Tensor recon = decoder.forward(encoder.forward(y));
  const Tensor diff = sub(recon, y);
  return scale(sum(square(diff)), 1.0 / static_cast<double>(batch.rows()));
}

Tensor gradient_penalty(const TrackedMlp& encoder, const Matrix& x_real, const Matrix& x_fake,
                        const KernelSpec& inner_kernel, const Matrix& u) {
  if (x_real.rows() != x_fake.rows() || x_real.cols() != x_fake.cols()) {
    throw DimensionError("gradient_penalty: real and fake batches must share shape");
  }
  if (u.rows() != x_real.rows() || u.cols() != 1) {
    throw DimensionError("gradient_penalty: u must be B x 1");
  }
  const Eigen::Index b = x_real.rows();
  Matrix interp(b, x_real.cols());
  for (Eigen::Index i = 0; i < b; ++i) {
    interp.row(i) = u(i, 0) * x_real.row(i) + (1.0 - u(i, 0)) * x_fake.row(i);
  }

  Tape& tape = encoder.tape();
  const Tensor t = tape.leaf(interp);
  const Tensor e_t = encoder.forward(t);
  const Tensor e_real = encoder.forward(Tensor::constant(x_real));
  const Tensor e_fake = encoder.forward(Tensor::constant(x_fake));

  // Row i of t only feeds w(t_i), so the gradient of the summed witness
  // recovers every per-row witness gradient in one backward pass.
  const Tensor k_real = gram(e_t, e_real, inner_kernel);
  const Tensor k_fake = gram(e_t, e_fake, inner_kernel);
  const Tensor witness_sum = scale(sub(sum(k_real), sum(k_fake)), 1.0 / static_cast<double>(b));

  const Tensor grad_t = tape.gradients_tracked(witness_sum, {t})[0];
  const Tensor row_sq = matmul(square(grad_t), Tensor::constant(Matrix::Ones(x_real.cols(), 1)));
  // 1e-12 keeps sqrt differentiable if a row gradient vanishes exactly.
  const Tensor norms = sqrt(add_scalar(row_sq, 1e-12));
  return mean(square(add_scalar(norms, -1.0)));
}

Tensor gradient_penalty(const TrackedMlp& encoder, const Matrix& x_real, const Matrix& x_fake,
                        const KernelSpec& inner_kernel, Rng& rng) {
  Matrix u(x_real.rows(), 1);
  for (Eigen::Index i = 0; i < u.rows(); ++i) u(i, 0) = rng.uniform01();
  return gradient_penalty(encoder, x_real, x_fake, inner_kernel, u);
}

Mlp negate_output_layer(const Mlp& net) {
  Mlp flipped = net;
  const std::size_t last = flipped.layer_count() - 1;
  flipped.weight(last) = -flipped.weight(last);
  flipped.bias(last) = -flipped.bias(last);
  return flipped;
}

EncoderHandle make_encoder_handle(const Mlp& net) {
  EncoderHandle handle;
  handle.input_dim = net.input_dim();
  handle.plain = [net](const Matrix& x) { return net.forward(x); };
  handle.tracked = [net](const Tensor& x) -> Tensor {
    Tape* tape = active_tape();
    if (tape == nullptr || !x.tracked()) return Tensor::constant(net.forward(x.v()));
    TrackedMlp lifted(net, *tape);
    return lifted.forward(x);
  };
  return handle;
}

// ---- checkpoint IO ----

namespace {

constexpr char kMagic[8] = {'M', 'M', 'D', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  const std::string& path;

  void need(std::size_t count) const {
    if (pos + count > buf.size()) throw ParseError(path + ": truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
};

void put_net_header(std::string& out, const Mlp& net) {
  put_u32(out, static_cast<std::uint32_t>(net.config().activation));
  put_u32(out, static_cast<std::uint32_t>(net.config().widths.size()));
  for (Eigen::Index w : net.config().widths) put_u32(out, static_cast<std::uint32_t>(w));
}

void put_net_params(std::string& out, const Mlp& net) {
  for (const Matrix& p : net.params()) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) put_f64(out, p(i, j));
    }
  }
}

MlpConfig read_net_header(Reader& r) {
  MlpConfig cfg;
  const std::uint32_t act = r.u32();
  if (act > 2) throw ParseError(r.path + ": unknown activation code");
  cfg.activation = static_cast<Activation>(act);
  const std::uint32_t widths = r.u32();
  if (widths < 2 || widths > 64) throw ParseError(r.path + ": bad layer table");
  cfg.widths.reserve(widths);
  for (std::uint32_t i = 0; i < widths; ++i) {
    const std::uint32_t w = r.u32();
    if (w < 1 || w > 1u << 20) throw ParseError(r.path + ": bad layer width");
    cfg.widths.push_back(static_cast<Eigen::Index>(w));
  }
  return cfg;
}

Mlp read_net_params(Reader& r, MlpConfig cfg) {
  std::vector<Matrix> params;
  const std::size_t layers = cfg.widths.size() - 1;
  params.reserve(2 * layers);
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix w(cfg.widths[l], cfg.widths[l + 1]);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = r.f64();
    }
    params.push_back(std::move(w));
    Matrix b(1, cfg.widths[l + 1]);
    for (Eigen::Index j = 0; j < b.cols(); ++j) b(0, j) = r.f64();
    params.push_back(std::move(b));
  }
  return mlp_from_parts(std::move(cfg), std::move(params));
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& bundle) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(bundle.encoder.input_dim()));   // data dim
  put_u32(out, static_cast<std::uint32_t>(bundle.encoder.output_dim()));  // h
  put_u32(out, static_cast<std::uint32_t>(bundle.generator.input_dim()));
  put_net_header(out, bundle.generator);
  put_net_header(out, bundle.encoder);
  put_net_header(out, bundle.decoder);
  put_net_params(out, bundle.generator);
  put_net_params(out, bundle.encoder);
  put_net_params(out, bundle.decoder);

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError(path + ": cannot open for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError(path + ": write failed");
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError(path + ": cannot open");
  std::string buf((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  Reader r{buf, 0, path};
  r.need(sizeof(kMagic));
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path + ": not a checkpoint file");
  }
  r.pos = sizeof(kMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t data_dim = r.u32();
  const std::uint32_t code_dim = r.u32();
  const std::uint32_t noise_dim = r.u32();

  MlpConfig gen_cfg = read_net_header(r);
  MlpConfig enc_cfg = read_net_header(r);
  MlpConfig dec_cfg = read_net_header(r);

  ModelBundle bundle;
  bundle.generator = read_net_params(r, std::move(gen_cfg));
  bundle.encoder = read_net_params(r, std::move(enc_cfg));
  bundle.decoder = read_net_params(r, std::move(dec_cfg));
  if (r.pos != buf.size()) throw ParseError(path + ": trailing bytes after parameters");

  if (bundle.encoder.input_dim() != static_cast<Eigen::Index>(data_dim) ||
      bundle.encoder.output_dim() != static_cast<Eigen::Index>(code_dim) ||
      bundle.generator.input_dim() != static_cast<Eigen::Index>(noise_dim) ||
      bundle.generator.output_dim() != static_cast<Eigen::Index>(data_dim) ||
      bundle.decoder.input_dim() != static_cast<Eigen::Index>(code_dim) ||
      bundle.decoder.output_dim() != static_cast<Eigen::Index>(data_dim)) {
    throw ParseError(path + ": header dims disagree with layer tables");
  }
  return bundle;
}

}  // namespace mmdforge
