#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mmdforge/tensor.hpp"

namespace mmdforge {

enum class KernelFamily { Gaussian, MixtureRbf, Linear, Polynomial, Composed };

// Denominator convention for the RBF exponent exp(-dist2 / den):
//   TwoSigmaSq -> den = 2*sigma^2 (default), Sigma -> den = sigma,
//   SigmaSq -> den = sigma^2. Exposed as a config knob.
enum class RbfScaling { TwoSigmaSq, Sigma, SigmaSq };

double rbf_denominator(double sigma, RbfScaling scaling);

// Type-erased encoder so kernels can compose with a learned map without
// depending on the networks module. Both callables must represent the same
// function; `tracked` must be usable under an active tape.
struct EncoderHandle {
  std::function<Matrix(const Matrix&)> plain;
  std::function<Tensor(const Tensor&)> tracked;
  Eigen::Index input_dim = 0;

  bool valid() const { return static_cast<bool>(plain) && static_cast<bool>(tracked); }
};

struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  RbfScaling rbf_scaling = RbfScaling::TwoSigmaSq;
  double sigma = 1.0;             // Gaussian
  std::vector<double> sigmas;     // MixtureRbf
  int degree = 2;                 // Polynomial
  double offset = 1.0;            // Polynomial
  std::shared_ptr<const KernelSpec> inner;  // Composed
  EncoderHandle encoder;                    // Composed

  static KernelSpec gaussian(double sigma, RbfScaling scaling = RbfScaling::TwoSigmaSq);
  static KernelSpec mixture_rbf(std::vector<double> sigmas,
                                RbfScaling scaling = RbfScaling::TwoSigmaSq);
  static KernelSpec linear();
  static KernelSpec polynomial(int degree, double offset);
  static KernelSpec composed(KernelSpec inner, EncoderHandle encoder);
};

// Throws ContractError when an invariant is violated: non-positive bandwidth,
// empty mixture, degree < 1, offset < 0, nested composition, missing encoder.
void validate(const KernelSpec& k);

// Number of additive mixture components (1 for non-mixtures; Composed
// delegates to its inner kernel).
std::size_t component_count(const KernelSpec& k);

// Gram matrix, entry (i,j) = k(x_i, y_j). Rows are points. The untracked
// overload is pure and parallelizes over row blocks; the Tensor overload
// records on the active tape so entries stay differentiable through an
// encoder. component, when given, selects a single mixture term.
Matrix gram(const Matrix& x, const Matrix& y, const KernelSpec& k);
Matrix gram_component(const Matrix& x, const Matrix& y, const KernelSpec& k,
                      std::size_t component);
Tensor gram(const Tensor& x, const Tensor& y, const KernelSpec& k);

// One Gram matrix per additive component, sharing the distance computation.
// Non-mixtures yield a single entry.
std::vector<Matrix> gram_components(const Matrix& x, const Matrix& y, const KernelSpec& k);

// Short human-readable label, e.g. "mixture_rbf(1,2,4,8,16)".
std::string describe(const KernelSpec& k);

// Smallest eigenvalue of a symmetric Gram matrix, estimated by power
// iteration on the spectrally shifted matrix. Asymmetry beyond 1e-12 is a
// contract violation. Diagnostic code path, not used in training.
double check_psd(const Matrix& g);

}  // namespace mmdforge
