#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "mmdforge/rng.hpp"
#include "mmdforge/tensor.hpp"

namespace mmdforge {

enum class DataSource { GaussianGrid, GaussianRing, TwoMoons, SwissRoll2d, File };

struct DatasetSpec {
  DataSource source = DataSource::GaussianRing;
  Eigen::Index dimension = 2;
  Eigen::Index samples = 4096;  // pool size for synthetic sources
  double split_fraction = 0.9;
  std::uint64_t seed = 1;

  int grid_rows = 2;  // gaussian_grid
  int grid_cols = 2;
  double grid_spacing = 2.0;

  int modes = 8;  // gaussian_ring
  double radius = 2.0;

  double sigma = 0.02;  // mode noise for grid and ring

  double noise = 0.05;  // jitter for two_moons and swiss_roll_2d

  std::string path;  // file
};

enum class NoiseFamily { StandardNormal, Uniform };  // uniform over (-1, 1)

struct NoiseSpec {
  NoiseFamily family = NoiseFamily::StandardNormal;
  Eigen::Index dimension = 4;
};

void validate(const DatasetSpec& spec);
void validate(const NoiseSpec& spec);

// Mode centers for the cluster sources (ring: angle 2*pi*k/modes on the
// radius; grid: centered lattice). Empty for the other sources.
Matrix mode_centers(const DatasetSpec& spec);

// B i.i.d. draws; the file source draws rows with replacement.
Matrix sample(const DatasetSpec& spec, Eigen::Index count, Rng& rng);

Matrix sample_noise(const NoiseSpec& spec, Eigen::Index count, Rng& rng);

// Seeded shuffle then partition into (train, held_out); disjoint, exhaustive.
std::pair<Matrix, Matrix> split(const DatasetSpec& spec, const Matrix& data);

// Headerless CSV of reals, one vector per row. Parse failures name the line.
// save_csv writes round-trip-exact decimal.
Matrix load_csv(const std::string& path);
void save_csv(const std::string& path, const Matrix& data);

}  // namespace mmdforge
