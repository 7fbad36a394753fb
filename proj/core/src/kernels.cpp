#include "mmdforge/kernels.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "mmdforge/errors.hpp"
#include "mmdforge/parallel.hpp"
#include "mmdforge/rng.hpp"

namespace mmdforge {

double rbf_denominator(double sigma, RbfScaling scaling) {
  switch (scaling) {
    case RbfScaling::TwoSigmaSq: return 2.0 * sigma * sigma;
    case RbfScaling::Sigma: return sigma;
    case RbfScaling::SigmaSq: return sigma * sigma;
  }
  throw ContractError("rbf_denominator: unknown scaling");
}

KernelSpec KernelSpec::gaussian(double sigma, RbfScaling scaling) {
  KernelSpec k;
  k.family = KernelFamily::Gaussian;
  k.sigma = sigma;
  k.rbf_scaling = scaling;
  return k;
}

KernelSpec KernelSpec::mixture_rbf(std::vector<double> sigmas, RbfScaling scaling) {
  KernelSpec k;
  k.family = KernelFamily::MixtureRbf;
  k.sigmas = std::move(sigmas);
  k.rbf_scaling = scaling;
  return k;
}

KernelSpec KernelSpec::linear() {
  KernelSpec k;
  k.family = KernelFamily::Linear;
  return k;
}

KernelSpec KernelSpec::polynomial(int degree, double offset) {
  KernelSpec k;
  k.family = KernelFamily::Polynomial;
  k.degree = degree;
  k.offset = offset;
  return k;
}

KernelSpec KernelSpec::composed(KernelSpec inner, EncoderHandle encoder) {
  KernelSpec k;
  k.family = KernelFamily::Composed;
  k.inner = std::make_shared<const KernelSpec>(std::move(inner));
  k.encoder = std::move(encoder);
  return k;
}

void validate(const KernelSpec& k) {
  switch (k.family) {
    case KernelFamily::Gaussian:
      if (!(k.sigma > 0.0)) throw ContractError("kernel: bandwidth must be positive");
      return;
    case KernelFamily::MixtureRbf:
      if (k.sigmas.empty()) throw ContractError("kernel: mixture needs at least one bandwidth");
      for (double s : k.sigmas) {
        if (!(s > 0.0)) throw ContractError("kernel: bandwidth must be positive");
      }
      return;
    case KernelFamily::Linear:
      return;
    case KernelFamily::Polynomial:
      if (k.degree < 1) throw ContractError("kernel: polynomial degree must be >= 1");
      if (k.offset < 0.0) throw ContractError("kernel: polynomial offset must be >= 0");
      return;
    case KernelFamily::Composed:
      if (!k.inner) throw ContractError("kernel: composed kernel needs an inner kernel");
      if (k.inner->family == KernelFamily::Composed) {
        throw ContractError("kernel: composition nests at most once");
      }
      if (!k.encoder.valid()) throw ContractError("kernel: composed kernel needs an encoder");
      validate(*k.inner);
      return;
  }
  throw ContractError("kernel: unknown family");
}

std::size_t component_count(const KernelSpec& k) {
  if (k.family == KernelFamily::MixtureRbf) return k.sigmas.size();
  if (k.family == KernelFamily::Composed) return component_count(*k.inner);
  return 1;
}

namespace {

Matrix sqdist_plain(const Matrix& x, const Matrix& y) {
  const Eigen::VectorXd xs = x.rowwise().squaredNorm();
  const Eigen::VectorXd ys = y.rowwise().squaredNorm();
  Matrix out = (-2.0 * (x * y.transpose())).rowwise() + ys.transpose();
  out.colwise() += xs;
  return out.cwiseMax(0.0);
}

// exp(-d2/den) applied over row blocks; the map dominates for large grams.
Matrix rbf_from_sqdist(const Matrix& d2, double den) {
  Matrix out(d2.rows(), d2.cols());
  const double inv = -1.0 / den;
  const Eigen::Index n = d2.rows();
  if (worker_threads() > 1 && n * d2.cols() >= 4096) {
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
      out.row(static_cast<Eigen::Index>(i)) =
          (d2.row(static_cast<Eigen::Index>(i)).array() * inv).exp().matrix();
    });
  } else {
    out = (d2.array() * inv).exp().matrix();
  }
  return out;
}

void require_same_dim(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) {
    throw DimensionError("gram: feature dimensions differ, " + std::to_string(x.cols()) +
                         " vs " + std::to_string(y.cols()));
  }
}

Matrix encode_plain(const EncoderHandle& enc, const Matrix& x) {
  if (enc.input_dim > 0 && x.cols() != enc.input_dim) {
    throw DimensionError("gram: encoder expects dimension " + std::to_string(enc.input_dim) +
                         ", got " + std::to_string(x.cols()));
  }
  Matrix out = enc.plain(x);
  if (!out.allFinite()) throw NumericError("gram: encoder produced a non-finite output");
  return out;
}

}  // namespace

Matrix gram(const Matrix& x, const Matrix& y, const KernelSpec& k) {
  validate(k);
  require_same_dim(x, y);
  switch (k.family) {
    case KernelFamily::Gaussian:
      return rbf_from_sqdist(sqdist_plain(x, y), rbf_denominator(k.sigma, k.rbf_scaling));
    case KernelFamily::MixtureRbf: {
      const Matrix d2 = sqdist_plain(x, y);
      Matrix out = Matrix::Zero(x.rows(), y.rows());
      for (double s : k.sigmas) out += rbf_from_sqdist(d2, rbf_denominator(s, k.rbf_scaling));
      return out;
    }
    case KernelFamily::Linear:
      return x * y.transpose();
    case KernelFamily::Polynomial: {
      Matrix base = ((x * y.transpose()).array() + k.offset).matrix();
      Matrix out = base;
      for (int p = 1; p < k.degree; ++p) out = out.cwiseProduct(base);
      return out;
    }
    case KernelFamily::Composed:
      return gram(encode_plain(k.encoder, x), encode_plain(k.encoder, y), *k.inner);
  }
  throw ContractError("gram: unknown family");
}

Matrix gram_component(const Matrix& x, const Matrix& y, const KernelSpec& k,
                      std::size_t component) {
  if (component >= component_count(k)) throw ContractError("gram_component: index out of range");
  if (k.family == KernelFamily::MixtureRbf) {
    KernelSpec one = KernelSpec::gaussian(k.sigmas[component], k.rbf_scaling);
    return gram(x, y, one);
  }
  if (k.family == KernelFamily::Composed && k.inner->family == KernelFamily::MixtureRbf) {
    return gram_component(encode_plain(k.encoder, x), encode_plain(k.encoder, y), *k.inner,
                          component);
  }
  return gram(x, y, k);
}

Tensor gram(const Tensor& x, const Tensor& y, const KernelSpec& k) {
  validate(k);
  if (x.cols() != y.cols()) {
    throw DimensionError("gram: feature dimensions differ, " + std::to_string(x.cols()) +
                         " vs " + std::to_string(y.cols()));
  }
  switch (k.family) {
    case KernelFamily::Gaussian:
      return exp(scale(pairwise_sqdist(x, y), -1.0 / rbf_denominator(k.sigma, k.rbf_scaling)));
    case KernelFamily::MixtureRbf: {
      const Tensor d2 = pairwise_sqdist(x, y);
      Tensor out;
      for (double s : k.sigmas) {
        Tensor term = exp(scale(d2, -1.0 / rbf_denominator(s, k.rbf_scaling)));
        out = out.defined() ? add(out, term) : term;
      }
      return out;
    }
    case KernelFamily::Linear:
      return matmul(x, transpose(y));
    case KernelFamily::Polynomial: {
      const Tensor base = add_scalar(matmul(x, transpose(y)), k.offset);
      Tensor out = base;
      for (int p = 1; p < k.degree; ++p) out = mul(out, base);
      return out;
    }
    case KernelFamily::Composed: {
      if (k.encoder.input_dim > 0 && x.cols() != k.encoder.input_dim) {
        throw DimensionError("gram: encoder expects dimension " +
                             std::to_string(k.encoder.input_dim) + ", got " +
                             std::to_string(x.cols()));
      }
      return gram(k.encoder.tracked(x), k.encoder.tracked(y), *k.inner);
    }
  }
  throw ContractError("gram: unknown family");
}

std::vector<Matrix> gram_components(const Matrix& x, const Matrix& y, const KernelSpec& k) {
  validate(k);
  require_same_dim(x, y);
  if (k.family == KernelFamily::Composed) {
    return gram_components(encode_plain(k.encoder, x), encode_plain(k.encoder, y), *k.inner);
  }
  if (k.family == KernelFamily::MixtureRbf) {
    const Matrix d2 = sqdist_plain(x, y);
    std::vector<Matrix> out;
    out.reserve(k.sigmas.size());
    for (double s : k.sigmas) out.push_back(rbf_from_sqdist(d2, rbf_denominator(s, k.rbf_scaling)));
    return out;
  }
  return {gram(x, y, k)};
}

std::string describe(const KernelSpec& k) {
  auto fmt = [](double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  switch (k.family) {
    case KernelFamily::Gaussian:
      return "gaussian(" + fmt(k.sigma) + ")";
    case KernelFamily::MixtureRbf: {
      std::string out = "mixture_rbf(";
      for (std::size_t i = 0; i < k.sigmas.size(); ++i) {
        if (i) out += ",";
        out += fmt(k.sigmas[i]);
      }
      return out + ")";
    }
    case KernelFamily::Linear:
      return "linear";
    case KernelFamily::Polynomial:
      return "polynomial(" + std::to_string(k.degree) + "," + fmt(k.offset) + ")";
    case KernelFamily::Composed:
      return "composed(" + describe(*k.inner) + ")";
  }
  return "unknown";
}

double check_psd(const Matrix& g) {
  if (g.rows() != g.cols()) throw ContractError("check_psd: matrix is not square");
  const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12) {
    throw ContractError("check_psd: asymmetry " + std::to_string(asym) + " exceeds 1e-12");
  }
  const Eigen::Index n = g.rows();
  if (n == 0) throw ContractError("check_psd: empty matrix");
  if (n == 1) return g(0, 0);

  // lambda_min(G) = c - lambda_max(c*I - G) for any c >= lambda_max(G);
  // the infinity norm bounds the spectral radius of a symmetric matrix.
  const double c = g.cwiseAbs().rowwise().sum().maxCoeff();
  const Matrix shifted = c * Matrix::Identity(n, n) - g;

  Rng rng(0x9c5d2f8b1ull);  // fixed seed, deterministic diagnostic
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  v.normalize();

  double rayleigh = 0.0;
  for (int iter = 0; iter < 20000; ++iter) {
    Eigen::VectorXd w = shifted * v;
    const double norm = w.norm();
    if (norm <= 1e-300) break;  // shifted matrix annihilates v: eigenvalue 0
    v = w / norm;
    const double next = v.dot(shifted * v);
    if (std::abs(next - rayleigh) <= 1e-13 * std::max(1.0, std::abs(next)) && iter > 4) {
      rayleigh = next;
      break;
    }
    rayleigh = next;
  }
  return c - rayleigh;
}

}  // namespace mmdforge
