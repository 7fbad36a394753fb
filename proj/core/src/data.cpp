#include "mmdforge/data.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <vector>

#include "mmdforge/errors.hpp"

namespace mmdforge {

void validate(const DatasetSpec& spec) {
  if (spec.dimension < 1) throw ContractError("dataset: dimension must be >= 1");
  if (!(spec.split_fraction > 0.0 && spec.split_fraction < 1.0)) {
    throw ContractError("dataset: split fraction must lie in (0,1)");
  }
  switch (spec.source) {
    case DataSource::GaussianGrid:
      if (spec.grid_rows < 1 || spec.grid_cols < 1) {
        throw ContractError("dataset: grid needs at least one row and column");
      }
      if (!(spec.sigma > 0.0)) throw ContractError("dataset: sigma must be positive");
      if (spec.dimension != 2) throw ContractError("dataset: gaussian_grid is 2-D");
      break;
    case DataSource::GaussianRing:
      if (spec.modes < 1) throw ContractError("dataset: ring needs at least one mode");
      if (!(spec.radius > 0.0)) throw ContractError("dataset: radius must be positive");
      if (!(spec.sigma > 0.0)) throw ContractError("dataset: sigma must be positive");
      if (spec.dimension != 2) throw ContractError("dataset: gaussian_ring is 2-D");
      break;
    case DataSource::TwoMoons:
    case DataSource::SwissRoll2d:
      if (spec.noise < 0.0) throw ContractError("dataset: noise must be >= 0");
      if (spec.dimension != 2) throw ContractError("dataset: source is 2-D");
      break;
    case DataSource::File:
      if (spec.path.empty()) throw ContractError("dataset: file source needs a path");
      break;
  }
  if (spec.samples < 2) throw ContractError("dataset: needs at least 2 samples");
}

void validate(const NoiseSpec& spec) {
  if (spec.dimension < 1) throw ContractError("noise: dimension must be >= 1");
}

Matrix mode_centers(const DatasetSpec& spec) {
  if (spec.source == DataSource::GaussianRing) {
    Matrix centers(spec.modes, 2);
    for (int k = 0; k < spec.modes; ++k) {
      const double angle = 2.0 * std::numbers::pi * k / spec.modes;
      centers(k, 0) = spec.radius * std::cos(angle);
      centers(k, 1) = spec.radius * std::sin(angle);
    }
    return centers;
  }
  if (spec.source == DataSource::GaussianGrid) {
    Matrix centers(static_cast<Eigen::Index>(spec.grid_rows) * spec.grid_cols, 2);
    Eigen::Index row = 0;
    for (int i = 0; i < spec.grid_rows; ++i) {
      for (int j = 0; j < spec.grid_cols; ++j, ++row) {
        centers(row, 0) = (i - (spec.grid_rows - 1) / 2.0) * spec.grid_spacing;
        centers(row, 1) = (j - (spec.grid_cols - 1) / 2.0) * spec.grid_spacing;
      }
    }
    return centers;
  }
  return Matrix(0, 2);
}

Matrix sample(const DatasetSpec& spec, Eigen::Index count, Rng& rng) {
  validate(spec);
  if (count < 1) throw ContractError("sample: count must be >= 1");
  switch (spec.source) {
    case DataSource::GaussianGrid:
    case DataSource::GaussianRing: {
      const Matrix centers = mode_centers(spec);
      Matrix out(count, 2);
      for (Eigen::Index i = 0; i < count; ++i) {
        const auto k = rng.uniform_index(static_cast<std::uint64_t>(centers.rows()));
        out(i, 0) = centers(static_cast<Eigen::Index>(k), 0) + spec.sigma * rng.normal();
        out(i, 1) = centers(static_cast<Eigen::Index>(k), 1) + spec.sigma * rng.normal();
      }
      return out;
    }
    case DataSource::TwoMoons: {
      Matrix out(count, 2);
      for (Eigen::Index i = 0; i < count; ++i) {
        const double t = rng.uniform(0.0, std::numbers::pi);
        if (rng.uniform01() < 0.5) {
          out(i, 0) = std::cos(t);
          out(i, 1) = std::sin(t);
        } else {
          out(i, 0) = 1.0 - std::cos(t);
          out(i, 1) = 0.5 - std::sin(t);
        }
        out(i, 0) += spec.noise * rng.normal();
        out(i, 1) += spec.noise * rng.normal();
      }
      return out;
    }
    case DataSource::SwissRoll2d: {
      // Spiral t*(cos t, sin t) rescaled so the outer arm sits near radius 2.
      Matrix out(count, 2);
      const double t_lo = 1.5 * std::numbers::pi;
      const double t_hi = 4.5 * std::numbers::pi;
      const double s = 2.0 / t_hi;
      for (Eigen::Index i = 0; i < count; ++i) {
        const double t = rng.uniform(t_lo, t_hi);
        out(i, 0) = s * t * std::cos(t) + spec.noise * rng.normal();
        out(i, 1) = s * t * std::sin(t) + spec.noise * rng.normal();
      }
      return out;
    }
    case DataSource::File: {
      const Matrix pool = load_csv(spec.path);
      Matrix out(count, pool.cols());
      for (Eigen::Index i = 0; i < count; ++i) {
        out.row(i) = pool.row(static_cast<Eigen::Index>(
            rng.uniform_index(static_cast<std::uint64_t>(pool.rows()))));
      }
      return out;
    }
  }
  throw ContractError("sample: unknown source");
}

Matrix sample_noise(const NoiseSpec& spec, Eigen::Index count, Rng& rng) {
  validate(spec);
  if (count < 1) throw ContractError("sample_noise: count must be >= 1");
  Matrix out(count, spec.dimension);
  for (Eigen::Index i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < spec.dimension; ++j) {
      out(i, j) = spec.family == NoiseFamily::StandardNormal ? rng.normal()
                                                             : rng.uniform(-1.0, 1.0);
    }
  }
  return out;
}

std::pair<Matrix, Matrix> split(const DatasetSpec& spec, const Matrix& data) {
  validate(spec);
  const Eigen::Index n = data.rows();
  if (n < 2) throw ContractError("split: needs at least 2 rows");
  std::vector<int> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
  Rng rng = Rng(spec.seed).derive(0x5714);  // split stream, independent of sampling
  rng.shuffle(order);
  Eigen::Index train_n = static_cast<Eigen::Index>(
      static_cast<double>(n) * spec.split_fraction);
  train_n = std::max<Eigen::Index>(1, std::min(train_n, n - 1));
  Matrix train(train_n, data.cols());
  Matrix held(n - train_n, data.cols());
  for (Eigen::Index i = 0; i < train_n; ++i) train.row(i) = data.row(order[static_cast<std::size_t>(i)]);
  for (Eigen::Index i = train_n; i < n; ++i) {
    held.row(i - train_n) = data.row(order[static_cast<std::size_t>(i)]);
  }
  return {std::move(train), std::move(held)};
}

Matrix load_csv(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw IoError(path + ": cannot open");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index cols = -1;
  while (std::getline(file, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.pop_back();
    }
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.c_str();
    while (true) {
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(p, &end);
      if (end == p || errno == ERANGE) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": malformed number");
      }
      if (!std::isfinite(v)) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": non-finite value");
      }
      row.push_back(v);
      while (*end == ' ' || *end == '\t') ++end;
      if (*end == '\0') break;
      if (*end != ',') {
        throw ParseError(path + ":" + std::to_string(line_no) + ": expected comma");
      }
      p = end + 1;
    }
    if (cols == -1) {
      cols = static_cast<Eigen::Index>(row.size());
    } else if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(cols) + " fields, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");
  Matrix out(static_cast<Eigen::Index>(rows.size()), cols);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return out;
}

void save_csv(const std::string& path, const Matrix& data) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw IoError(path + ": cannot open for writing");
  char buf[64];
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data(i, j));
      if (j) file << ',';
      file << buf;
    }
    file << '\n';
  }
  if (!file) throw IoError(path + ": write failed");
}

}  // namespace mmdforge
