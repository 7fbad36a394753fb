#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>

#include "mmdforge/errors.hpp"
#include "mmdforge/networks.hpp"
#include "mmdforge/rng.hpp"
#include "testing_oracles.hpp"

using namespace mmdforge;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("networks") {

TEST_CASE("initialisation bounds and determinism") {
  MlpConfig cfg{{4, 10, 3}, Activation::Relu};
  Rng a(9);
  Rng b(9);
  const Mlp net1(cfg, a);
  const Mlp net2(cfg, b);
  REQUIRE(net1.layer_count() == 2);
  for (std::size_t l = 0; l < net1.layer_count(); ++l) {
    CHECK(net1.weight(l) == net2.weight(l));
    CHECK(net1.bias(l).isZero(0.0));
    const double s = std::sqrt(6.0 / static_cast<double>(net1.weight(l).rows() +
                                                         net1.weight(l).cols()));
    CHECK(net1.weight(l).cwiseAbs().maxCoeff() <= s);
    CHECK(net1.weight(l).cwiseAbs().maxCoeff() > 0.0);
  }
  Rng c(10);
  const Mlp net3(cfg, c);
  CHECK(net1.weight(0) != net3.weight(0));
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(validate(MlpConfig{{4}, Activation::Relu}), ContractError);
  CHECK_THROWS_AS(validate(MlpConfig{{4, 0, 2}, Activation::Relu}), ContractError);
  CHECK_NOTHROW(validate(MlpConfig{{4, 2}, Activation::Relu}));
}

TEST_CASE("forward matches the loop oracle for every activation") {
  Rng rng(2211);
  for (Activation act : {Activation::Relu, Activation::Tanh, Activation::Elu}) {
    MlpConfig cfg{{3, 7, 5, 2}, act};
    Rng init = rng.derive(static_cast<std::uint64_t>(act) + 1);
    const Mlp net(cfg, init);
    const Matrix batch = oracles::random_matrix(6, 3, rng);
    const Matrix got = net.forward(batch);
    const Matrix want = oracles::mlp_forward_oracle(net, batch);
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("single affine layer and input checking") {
  Rng rng(4);
  MlpConfig cfg{{3, 2}, Activation::Tanh};
  const Mlp net(cfg, rng);
  const Matrix batch = oracles::random_matrix(5, 3, rng);
  const Matrix got = net.forward(batch);  // no activation on the only layer
  CHECK((got - ((batch * net.weight(0)).rowwise() + net.bias(0).row(0))).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK_THROWS_AS(net.forward(Matrix::Ones(2, 4)), DimensionError);
}

TEST_CASE("mlp_from_parts round trip and shape checks") {
  Rng rng(8);
  MlpConfig cfg{{2, 6, 3}, Activation::Elu};
  const Mlp net(cfg, rng);
  const Mlp rebuilt = mlp_from_parts(net.config(), net.params());
  const Matrix batch = oracles::random_matrix(4, 2, rng);
  CHECK(net.forward(batch) == rebuilt.forward(batch));

  std::vector<Matrix> bad = net.params();
  bad[0] = Matrix::Zero(2, 5);
  CHECK_THROWS_AS(mlp_from_parts(net.config(), bad), ContractError);
  std::vector<Matrix> short_list(net.params().begin(), net.params().end() - 1);
  CHECK_THROWS_AS(mlp_from_parts(net.config(), short_list), ContractError);
}

TEST_CASE("tracked forward equals the plain forward") {
  Rng rng(31);
  MlpConfig cfg{{3, 9, 4}, Activation::Elu};
  const Mlp net(cfg, rng);
  const Matrix batch = oracles::random_matrix(10, 3, rng);
  TapeScope scope;
  TrackedMlp tracked(net, scope.tape());
  const Tensor out = tracked.forward(Tensor::constant(batch));
  CHECK(out.tracked());
  CHECK((out.v() - net.forward(batch)).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(tracked.params().size() == net.params().size());
}

TEST_CASE("init_model validates the dimension chain") {
  MlpConfig gen{{3, 4, 2}, Activation::Relu};
  MlpConfig enc{{2, 4, 5}, Activation::Relu};
  MlpConfig dec{{5, 4, 2}, Activation::Relu};
  CHECK_NOTHROW(init_model(gen, enc, dec, 1));

  MlpConfig dec_bad{{4, 4, 2}, Activation::Relu};  // decoder input != encoder output
  CHECK_THROWS_AS(init_model(gen, enc, dec_bad, 1), ContractError);
  MlpConfig gen_bad{{3, 4, 7}, Activation::Relu};  // generator output != data dim
  CHECK_THROWS_AS(init_model(gen_bad, enc, dec, 1), ContractError);

  // Distinct seeds give distinct models; the same seed reproduces.
  const ModelBundle a = init_model(gen, enc, dec, 5);
  const ModelBundle b = init_model(gen, enc, dec, 5);
  const ModelBundle c = init_model(gen, enc, dec, 6);
  CHECK(a.generator.weight(0) == b.generator.weight(0));
  CHECK(a.generator.weight(0) != c.generator.weight(0));
  // The three nets are initialised from independent streams.
  CHECK(a.generator.weight(0)(0, 0) != a.encoder.weight(0)(0, 0));
}

TEST_CASE("reconstruction loss of a perfect autoencoder is zero") {
  MlpConfig id_cfg{{2, 2}, Activation::Relu};
  const Mlp enc = mlp_from_parts(id_cfg, {Matrix::Identity(2, 2), Matrix::Zero(1, 2)});
  const Mlp dec = mlp_from_parts(id_cfg, {Matrix::Identity(2, 2), Matrix::Zero(1, 2)});
  Rng rng(3);
  const Matrix batch = oracles::random_matrix(5, 2, rng);
  TapeScope scope;
  TrackedMlp te(enc, scope.tape());
  TrackedMlp td(dec, scope.tape());
  CHECK(reconstruction_loss(te, td, batch).item() == 0.0);
}

TEST_CASE("reconstruction loss matches a hand computation") {
  Rng rng(41);
  MlpConfig enc_cfg{{2, 3}, Activation::Relu};
  MlpConfig dec_cfg{{3, 2}, Activation::Relu};
  Rng e(1), d(2);
  const Mlp enc(enc_cfg, e);
  const Mlp dec(dec_cfg, d);
  const Matrix batch = oracles::random_matrix(6, 2, rng);
  const Matrix recon = dec.forward(enc.forward(batch));
  const double expected = (recon - batch).squaredNorm() / 6.0;

  TapeScope scope;
  TrackedMlp te(enc, scope.tape());
  TrackedMlp td(dec, scope.tape());
  CHECK(reconstruction_loss(te, td, batch).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gradient penalty is nonnegative and zero at unit slope") {
  // Encoder = identity: the witness of a linear kernel in 1-D is
  // w(t) = t * (mean(x) - mean(f)), so its gradient is constant.
  MlpConfig id_cfg{{1, 1}, Activation::Relu};
  const Mlp identity = mlp_from_parts(id_cfg, {Matrix::Identity(1, 1), Matrix::Zero(1, 1)});
  Matrix x_real(4, 1), x_fake(4, 1);
  x_real << 2.25, 2.75, 3.25, 3.75;  // mean 3
  x_fake << 0.75, 1.25, 0.75, 1.25;  // mean 1, so the witness slope is exactly 2

  TapeScope scope;
  TrackedMlp enc(identity, scope.tape());
  Matrix u = Matrix::Constant(4, 1, 0.5);
  const double penalty =
      gradient_penalty(enc, x_real, x_fake, KernelSpec::linear(), u).item();
  CHECK(penalty == doctest::Approx((2.0 - 1.0) * (2.0 - 1.0)).epsilon(1e-6));

  // Halving the gap puts the slope at exactly 1 and the penalty at zero.
  Matrix x_fake_unit = x_real;
  x_fake_unit.col(0).array() -= 1.0;  // mean 2, slope 1
  TapeScope scope2;
  TrackedMlp enc2(identity, scope2.tape());
  const double zero_penalty =
      gradient_penalty(enc2, x_real, x_fake_unit, KernelSpec::linear(), u).item();
  CHECK(zero_penalty <= 1e-6);

  CHECK_THROWS_AS(
      gradient_penalty(enc2, x_real, Matrix::Zero(3, 1), KernelSpec::linear(), u),
      DimensionError);
  CHECK_THROWS_AS(
      gradient_penalty(enc2, x_real, x_fake, KernelSpec::linear(), Matrix::Zero(4, 2)),
      DimensionError);
}

TEST_CASE("gradient penalty differentiates through the encoder") {
  Rng rng(66);
  MlpConfig cfg{{2, 5, 3}, Activation::Tanh};
  Rng init(7);
  Mlp enc(cfg, init);
  const Matrix x_real = oracles::random_matrix(6, 2, rng);
  const Matrix x_fake = oracles::random_matrix(6, 2, rng);
  Matrix u(6, 1);
  for (Eigen::Index i = 0; i < 6; ++i) u(i, 0) = rng.uniform01();
  const KernelSpec inner = KernelSpec::gaussian(1.0);

  auto penalty_at = [&](const Mlp& net) {
    TapeScope scope;
    TrackedMlp tracked(net, scope.tape());
    return gradient_penalty(tracked, x_real, x_fake, inner, u).item();
  };

  std::vector<Matrix> grads;
  {
    TapeScope scope;
    TrackedMlp tracked(enc, scope.tape());
    const Tensor p = gradient_penalty(tracked, x_real, x_fake, inner, u);
    CHECK(p.item() >= 0.0);
    grads = scope.tape().gradients(p, tracked.params());
  }

  // Central differences on a handful of encoder coordinates.
  const double h = 1e-5;
  int checked = 0;
  for (std::size_t slot = 0; slot < enc.params().size() && checked < 6; ++slot) {
    const Eigen::Index i = 0;
    const Eigen::Index j = enc.params()[slot].cols() - 1;
    Mlp plus = enc;
    Mlp minus = enc;
    plus.params()[slot](i, j) += h;
    minus.params()[slot](i, j) -= h;
    const double fd = (penalty_at(plus) - penalty_at(minus)) / (2.0 * h);
    const double ad = grads[slot](i, j);
    if (std::abs(fd) < 1e-7 && std::abs(ad) < 1e-7) continue;
    CHECK(std::abs(ad - fd) <= 1e-3 * std::max(1.0, std::max(std::abs(ad), std::abs(fd))));
    ++checked;
  }
  CHECK(checked >= 3);
}

TEST_CASE("negating the output layer negates the code exactly") {
  Rng rng(14);
  MlpConfig cfg{{2, 6, 3}, Activation::Relu};
  Rng init(21);
  const Mlp net(cfg, init);
  const Mlp flipped = negate_output_layer(net);
  const Matrix batch = oracles::random_matrix(8, 2, rng);
  CHECK(flipped.forward(batch) == -net.forward(batch));

  const Mlp twice = negate_output_layer(flipped);
  for (std::size_t s = 0; s < net.params().size(); ++s) {
    CHECK(twice.params()[s] == net.params()[s]);
  }

  // A symmetric kernel cannot see the flip.
  const Matrix cx = net.forward(batch);
  const Matrix fx = flipped.forward(batch);
  const Matrix g1 = gram(cx, cx, KernelSpec::gaussian(1.0));
  const Matrix g2 = gram(fx, fx, KernelSpec::gaussian(1.0));
  CHECK((g1 - g2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encoder handles freeze a snapshot of the net") {
  Rng rng(3);
  MlpConfig cfg{{2, 4, 2}, Activation::Tanh};
  Rng init(5);
  Mlp net(cfg, init);
  const EncoderHandle handle = make_encoder_handle(net);
  const Matrix batch = oracles::random_matrix(5, 2, rng);
  const Matrix before = net.forward(batch);
  CHECK(handle.plain(batch) == before);
  CHECK(handle.input_dim == 2);

  net.weight(0).setZero();  // the handle must not see the mutation
  CHECK(handle.plain(batch) == before);

  // Tracked evaluation under a tape matches and records.
  TapeScope scope;
  const Tensor out = handle.tracked(scope.tape().leaf(batch));
  CHECK(out.tracked());
  CHECK((out.v() - before).cwiseAbs().maxCoeff() == 0.0);
  // Without a tape the handle degrades to a constant evaluation.
  const Tensor plain = handle.tracked(Tensor::constant(batch));
  CHECK(!plain.tracked());
  CHECK((plain.v() - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint round trip preserves every parameter bit") {
  MlpConfig gen{{3, 8, 2}, Activation::Elu};
  MlpConfig enc{{2, 8, 4}, Activation::Relu};
  MlpConfig dec{{4, 8, 2}, Activation::Tanh};
  const ModelBundle bundle = init_model(gen, enc, dec, 77);
  const std::string path = temp_path("ckpt_roundtrip.bin");
  save_checkpoint(path, bundle);
  const ModelBundle loaded = load_checkpoint(path);
  CHECK(loaded.generator.config().widths == gen.widths);
  CHECK(loaded.encoder.config().activation == Activation::Relu);
  CHECK(loaded.decoder.config().activation == Activation::Tanh);
  for (std::size_t s = 0; s < bundle.generator.params().size(); ++s) {
    CHECK(loaded.generator.params()[s] == bundle.generator.params()[s]);
  }
  for (std::size_t s = 0; s < bundle.encoder.params().size(); ++s) {
    CHECK(loaded.encoder.params()[s] == bundle.encoder.params()[s]);
  }
  for (std::size_t s = 0; s < bundle.decoder.params().size(); ++s) {
    CHECK(loaded.decoder.params()[s] == bundle.decoder.params()[s]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects corrupted files") {
  MlpConfig gen{{3, 4, 2}, Activation::Relu};
  MlpConfig enc{{2, 4, 3}, Activation::Relu};
  MlpConfig dec{{3, 4, 2}, Activation::Relu};
  const ModelBundle bundle = init_model(gen, enc, dec, 1);
  const std::string path = temp_path("ckpt_corrupt.bin");
  save_checkpoint(path, bundle);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }

  auto write_bytes = [&](const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << data;
  };

  write_bytes("NOTACKPT" + bytes.substr(8));
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);

  write_bytes(bytes.substr(0, bytes.size() / 2));  // truncated
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);

  write_bytes(bytes + std::string(4, '\0'));  // trailing bytes
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);

  std::string bad_version = bytes;
  bad_version[8] = 99;  // version field follows the magic
  write_bytes(bad_version);
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);

  CHECK_THROWS_AS(load_checkpoint(temp_path("missing_ckpt.bin")), IoError);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
