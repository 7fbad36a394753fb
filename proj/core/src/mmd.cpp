#include "mmdforge/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include <nlohmann/json.hpp>

#include "mmdforge/errors.hpp"
#include "mmdforge/parallel.hpp"
#include "mmdforge/rng.hpp"

namespace mmdforge {

namespace {

void require_samples(const Matrix& x, const Matrix& y, Eigen::Index least, const char* who) {
  if (x.rows() < least || y.rows() < least) {
    throw ContractError(std::string(who) + ": needs at least " + std::to_string(least) +
                        " samples per side, got " + std::to_string(x.rows()) + " and " +
                        std::to_string(y.rows()));
  }
  if (x.cols() != y.cols()) {
    throw DimensionError(std::string(who) + ": feature dimensions differ");
  }
}

double unbiased_from_grams(const Matrix& kxx, const Matrix& kxy, const Matrix& kyy) {
  const double n = static_cast<double>(kxx.rows());
  const double m = static_cast<double>(kyy.rows());
  const double sxx = kxx.sum() - kxx.trace();
  const double syy = kyy.sum() - kyy.trace();
  return sxx / (n * (n - 1.0)) - 2.0 * kxy.sum() / (n * m) + syy / (m * (m - 1.0));
}

double biased_from_grams(const Matrix& kxx, const Matrix& kxy, const Matrix& kyy) {
  const double n = static_cast<double>(kxx.rows());
  const double m = static_cast<double>(kyy.rows());
  return kxx.sum() / (n * n) - 2.0 * kxy.sum() / (n * m) + kyy.sum() / (m * m);
}

MmdReport estimate_report(const Matrix& x, const Matrix& y, const KernelSpec& k,
                          EstimatorKind kind) {
  MmdReport report;
  report.estimator_kind = kind;
  report.kernel = k;
  report.n = x.rows();
  report.m = y.rows();
  const std::vector<Matrix> kxx = gram_components(x, x, k);
  const std::vector<Matrix> kxy = gram_components(x, y, k);
  const std::vector<Matrix> kyy = gram_components(y, y, k);
  const bool mixture = kxx.size() > 1;
  double total = 0.0;
  for (std::size_t c = 0; c < kxx.size(); ++c) {
    const double part = kind == EstimatorKind::Unbiased
                            ? unbiased_from_grams(kxx[c], kxy[c], kyy[c])
                            : biased_from_grams(kxx[c], kxy[c], kyy[c]);
    if (mixture) report.per_component.push_back(part);
    total += part;
  }
  report.estimate = total;
  return report;
}

}  // namespace

MmdReport mmd2_unbiased(const Matrix& x, const Matrix& y, const KernelSpec& k) {
  require_samples(x, y, 2, "mmd2_unbiased");
  return estimate_report(x, y, k, EstimatorKind::Unbiased);
}

MmdReport mmd2_biased(const Matrix& x, const Matrix& y, const KernelSpec& k) {
  require_samples(x, y, 1, "mmd2_biased");
  return estimate_report(x, y, k, EstimatorKind::Biased);
}

TestDecision permutation_test(const Matrix& x, const Matrix& y, const KernelSpec& k,
                              double alpha, int n_permutations, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ContractError("permutation_test: alpha must lie in (0,1)");
  }
  if (n_permutations < 100) {
    throw ContractError("permutation_test: needs at least 100 permutations");
  }
  require_samples(x, y, 2, "permutation_test");

  const Eigen::Index n = x.rows();
  const Eigen::Index m = y.rows();
  const Eigen::Index total = n + m;
  Matrix pooled(total, x.cols());
  pooled.topRows(n) = x;
  pooled.bottomRows(m) = y;

  // The pooled Gram is built once; each replicate only gathers entries.
  const Matrix g = gram(pooled, pooled, k);
  const Eigen::VectorXd rowsums = g.rowwise().sum();
  const Eigen::VectorXd diag = g.diagonal();
  const double total_sum = g.sum();
  const double total_trace = diag.sum();
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);

  // Gather over the smaller side; the rest follows from row-sum identities:
  // s_xy = rx - s_xx, s_yy = total - 2*s_xy - s_xx.
  const bool x_smaller = n <= m;
  const Eigen::Index small = x_smaller ? n : m;

  auto split_stat = [&](const std::vector<int>& members) {
    double s_small = 0.0;
    double r_small = 0.0;
    double tr_small = 0.0;
    for (int i : members) {
      const double* col = g.data() + static_cast<std::ptrdiff_t>(i) * total;
      for (int j : members) s_small += col[j];
      r_small += rowsums(i);
      tr_small += diag(i);
    }
    const double s_cross = r_small - s_small;
    const double s_other = total_sum - 2.0 * s_cross - s_small;
    const double tr_other = total_trace - tr_small;
    const double s_xx = x_smaller ? s_small : s_other;
    const double s_yy = x_smaller ? s_other : s_small;
    const double tr_x = x_smaller ? tr_small : tr_other;
    const double tr_y = x_smaller ? tr_other : tr_small;
    return (s_xx - tr_x) / (dn * (dn - 1.0)) - 2.0 * s_cross / (dn * dm) +
           (s_yy - tr_y) / (dm * (dm - 1.0));
  };

  std::vector<int> identity_members(static_cast<std::size_t>(small));
  const Eigen::Index small_offset = x_smaller ? 0 : n;
  std::iota(identity_members.begin(), identity_members.end(), static_cast<int>(small_offset));
  const double statistic = split_stat(identity_members);

  std::vector<double> permuted(static_cast<std::size_t>(n_permutations));
  std::vector<int> pool_indices(static_cast<std::size_t>(total));
  std::iota(pool_indices.begin(), pool_indices.end(), 0);
  const Rng root(seed);
  parallel_for(permuted.size(), [&](std::size_t b) {
    Rng stream = root.derive(static_cast<std::uint64_t>(b) + 1);
    std::vector<int> order = pool_indices;
    stream.shuffle(order);
    std::vector<int> members(order.begin(), order.begin() + small);
    permuted[b] = split_stat(members);
  });

  // k-th smallest with k = ceil((1-alpha)(B+1)) is the standard conservative
  // quantile for a permutation null; clamp keeps tiny B and alpha legal.
  const int b_count = n_permutations;
  int rank = static_cast<int>(std::ceil((1.0 - alpha) * (b_count + 1)));
  rank = std::max(1, std::min(rank, b_count));
  std::nth_element(permuted.begin(), permuted.begin() + (rank - 1), permuted.end());
  const double threshold = permuted[static_cast<std::size_t>(rank - 1)];

  TestDecision decision;
  decision.statistic = statistic;
  decision.threshold = threshold;
  decision.alpha = alpha;
  decision.n_permutations = n_permutations;
  decision.reject = statistic > threshold;
  return decision;
}

MomentDiagnostic moment_diagnostic(const Matrix& x, const Matrix& y) {
  require_samples(x, y, 2, "moment_diagnostic");
  const Eigen::VectorXd mean_x = x.colwise().mean();
  const Eigen::VectorXd mean_y = y.colwise().mean();
  const Matrix second_x = (x.transpose() * x) / static_cast<double>(x.rows());
  const Matrix second_y = (y.transpose() * y) / static_cast<double>(y.rows());

  MomentDiagnostic out;
  out.first_moment_gap = (mean_x - mean_y).squaredNorm();
  out.second_moment_gap = (second_x - second_y).squaredNorm();
  out.poly_mmd2 = mmd2_biased(x, y, KernelSpec::polynomial(2, 1.0)).estimate;
  return out;
}

Tensor mmd2_biased_from_grams(const Tensor& kxx, const Tensor& kxy, const Tensor& kyy) {
  return add(sub(mean(kxx), scale(mean(kxy), 2.0)), mean(kyy));
}

Tensor mmd2_unbiased_from_grams(const Tensor& kxx, const Tensor& kxy, const Tensor& kyy) {
  const Eigen::Index n = kxx.rows();
  const Eigen::Index m = kyy.rows();
  if (n < 2 || m < 2) throw ContractError("mmd2_unbiased: needs at least 2 samples per side");
  const Tensor eye_n = Tensor::constant(Matrix::Identity(n, n));
  const Tensor eye_m = Tensor::constant(Matrix::Identity(m, m));
  const Tensor sxx = sub(sum(kxx), sum(mul(kxx, eye_n)));
  const Tensor syy = sub(sum(kyy), sum(mul(kyy, eye_m)));
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  return add(sub(scale(sxx, 1.0 / (dn * (dn - 1.0))), scale(sum(kxy), 2.0 / (dn * dm))),
             scale(syy, 1.0 / (dm * (dm - 1.0))));
}

Tensor mmd2_biased(const Tensor& x, const Tensor& y, const KernelSpec& k) {
  return mmd2_biased_from_grams(gram(x, x, k), gram(x, y, k), gram(y, y, k));
}

Tensor mmd2_unbiased(const Tensor& x, const Tensor& y, const KernelSpec& k) {
  return mmd2_unbiased_from_grams(gram(x, x, k), gram(x, y, k), gram(y, y, k));
}

std::string to_json_line(const MmdReport& report) {
  nlohmann::json j;
  j["estimate"] = report.estimate;
  j["estimator"] = report.estimator_kind == EstimatorKind::Biased ? "biased" : "unbiased";
  j["kernel"] = describe(report.kernel);
  j["n"] = report.n;
  j["m"] = report.m;
  if (!report.per_component.empty()) j["per_component"] = report.per_component;
  return j.dump();
}

std::string to_json_line(const TestDecision& decision) {
  nlohmann::json j;
  j["statistic"] = decision.statistic;
  j["threshold"] = decision.threshold;
  j["alpha"] = decision.alpha;
  j["n_permutations"] = decision.n_permutations;
  j["reject"] = decision.reject;
  return j.dump();
}

}  // namespace mmdforge
