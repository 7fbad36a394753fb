#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <doctest.h>

#include "mmdforge/data.hpp"
#include "mmdforge/errors.hpp"
#include "mmdforge/rng.hpp"

using namespace mmdforge;

namespace {

std::string temp_csv(const std::string& name, const std::string& body) {
  const std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path, std::ios::trunc);
  out << body;
  return path;
}

double nearest_center_distance(const Eigen::RowVector2d& p, const Matrix& centers) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    best = std::min(best, (p - centers.row(k)).norm());
  }
  return best;
}

std::vector<std::vector<double>> sorted_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("sampling is deterministic in the generator state") {
  DatasetSpec spec;  // default ring
  Rng a(5), b(5), c(6);
  const Matrix xa = sample(spec, 64, a);
  const Matrix xb = sample(spec, 64, b);
  const Matrix xc = sample(spec, 64, c);
  CHECK(xa == xb);
  CHECK(xa != xc);
  const Matrix follow_up = sample(spec, 64, a);  // stream advances
  CHECK(xa != follow_up);
}

TEST_CASE("ring samples hug the mode centers") {
  DatasetSpec spec;
  spec.source = DataSource::GaussianRing;
  spec.modes = 8;
  spec.radius = 2.0;
  spec.sigma = 0.02;
  const Matrix centers = mode_centers(spec);
  REQUIRE(centers.rows() == 8);
  for (Eigen::Index k = 0; k < 8; ++k) {
    CHECK(centers.row(k).norm() == doctest::Approx(2.0).epsilon(1e-14));
  }
  Rng rng(11);
  const Matrix x = sample(spec, 400, rng);
  REQUIRE(x.rows() == 400);
  REQUIRE(x.cols() == 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    CHECK(nearest_center_distance(x.row(i), centers) <= 8.0 * spec.sigma);
  }
}

TEST_CASE("grid centers form the centered lattice") {
  DatasetSpec spec;
  spec.source = DataSource::GaussianGrid;
  spec.grid_rows = 2;
  spec.grid_cols = 2;
  spec.grid_spacing = 2.0;
  const Matrix centers = mode_centers(spec);
  REQUIRE(centers.rows() == 4);
  Matrix expected(4, 2);
  expected << -1, -1, -1, 1, 1, -1, 1, 1;
  CHECK(centers == expected);

  // A 1x3 grid centers on the middle column.
  spec.grid_rows = 1;
  spec.grid_cols = 3;
  spec.grid_spacing = 1.5;
  const Matrix line = mode_centers(spec);
  Matrix expected_line(3, 2);
  expected_line << 0, -1.5, 0, 0, 0, 1.5;
  CHECK(line == expected_line);

  Rng rng(3);
  const Matrix x = sample(spec, 300, rng);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    CHECK(nearest_center_distance(x.row(i), line) <= 8.0 * spec.sigma);
  }
}

TEST_CASE("curved sources stay finite and in range") {
  Rng rng(7);
  DatasetSpec moons;
  moons.source = DataSource::TwoMoons;
  const Matrix m = sample(moons, 500, rng);
  REQUIRE(m.cols() == 2);
  CHECK(m.allFinite());
  CHECK(m.cwiseAbs().maxCoeff() <= 2.5);

  DatasetSpec roll;
  roll.source = DataSource::SwissRoll2d;
  const Matrix r = sample(roll, 500, rng);
  REQUIRE(r.cols() == 2);
  CHECK(r.allFinite());
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const double radius = r.row(i).norm();
    CHECK(radius >= 0.35);
    CHECK(radius <= 2.35);
  }
}

TEST_CASE("noise families have the advertised support") {
  Rng rng(19);
  NoiseSpec uniform{NoiseFamily::Uniform, 3};
  const Matrix u = sample_noise(uniform, 500, rng);
  REQUIRE(u.rows() == 500);
  REQUIRE(u.cols() == 3);
  CHECK(u.minCoeff() > -1.0);
  CHECK(u.maxCoeff() < 1.0);

  NoiseSpec normal{NoiseFamily::StandardNormal, 2};
  const Matrix g = sample_noise(normal, 1000, rng);
  CHECK(g.cwiseAbs().maxCoeff() > 1.0);  // tails exist
  CHECK(std::abs(g.mean()) < 0.15);
  const double second = g.array().square().mean();
  CHECK(second == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("split partitions the pool exactly") {
  DatasetSpec spec;
  spec.split_fraction = 0.75;
  spec.seed = 21;
  Rng rng(2);
  const Matrix pool = sample(spec, 40, rng);
  const auto [train, held] = split(spec, pool);
  CHECK(train.rows() == 30);
  CHECK(held.rows() == 10);
  CHECK(train.cols() == 2);

  Matrix merged(train.rows() + held.rows(), 2);
  merged << train, held;
  CHECK(sorted_rows(merged) == sorted_rows(pool));

  // Same spec seed reproduces the split; a different seed reorders it.
  const auto [train2, held2] = split(spec, pool);
  CHECK(train == train2);
  CHECK(held == held2);
  DatasetSpec other = spec;
  other.seed = 22;
  const auto [train3, held3] = split(other, pool);
  CHECK(train != train3);
}

TEST_CASE("split clamps tiny partitions to one row each side") {
  DatasetSpec spec;
  Rng rng(2);
  const Matrix pool = sample(spec, 3, rng);

  spec.split_fraction = 0.99;
  const auto [big_train, big_held] = split(spec, pool);
  CHECK(big_train.rows() == 2);
  CHECK(big_held.rows() == 1);

  spec.split_fraction = 0.01;
  const auto [small_train, small_held] = split(spec, pool);
  CHECK(small_train.rows() == 1);
  CHECK(small_held.rows() == 2);

  CHECK_THROWS_AS(split(spec, pool.topRows(1)), ContractError);
}

TEST_CASE("csv round trip preserves values") {
  Matrix data(3, 3);
  data << 0.1, 1.0 / 3.0, -0.0,
      1e-300, 1.7976931348623157e308, -123456789.123456789,
      3.141592653589793, -2.2250738585072014e-308, 42.0;
  const std::string path = temp_csv("roundtrip.csv", "");
  save_csv(path, data);
  const Matrix back = load_csv(path);
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 3);
  CHECK(back == data);
  CHECK(std::signbit(back(0, 2)));  // negative zero survives
  std::filesystem::remove(path);
}

TEST_CASE("csv loader tolerates blank lines and carriage returns") {
  const std::string path = temp_csv("mixed.csv", "1,2\r\n\r\n 3 , 4 \n\n5,6\n");
  const Matrix m = load_csv(path);
  REQUIRE(m.rows() == 3);
  Matrix expected(3, 2);
  expected << 1, 2, 3, 4, 5, 6;
  CHECK(m == expected);
  std::filesystem::remove(path);
}

TEST_CASE("csv loader names the offending line") {
  const std::string bad_number = temp_csv("bad_number.csv", "1,2\n3,oops\n");
  CHECK_THROWS_WITH_AS(load_csv(bad_number), doctest::Contains(":2: malformed number"),
                       ParseError);

  const std::string ragged = temp_csv("ragged.csv", "1,2\n3\n");
  CHECK_THROWS_WITH_AS(load_csv(ragged), doctest::Contains(":2: expected 2 fields, got 1"),
                       ParseError);

  const std::string infinite = temp_csv("inf.csv", "1,inf\n");
  CHECK_THROWS_WITH_AS(load_csv(infinite), doctest::Contains(":1: non-finite value"), ParseError);

  const std::string spacey = temp_csv("spacey.csv", "1 2\n");
  CHECK_THROWS_WITH_AS(load_csv(spacey), doctest::Contains("expected comma"), ParseError);

  const std::string empty = temp_csv("empty.csv", "\n\n");
  CHECK_THROWS_WITH_AS(load_csv(empty), doctest::Contains("no data rows"), ParseError);

  CHECK_THROWS_AS(load_csv("/nonexistent/never.csv"), IoError);

  for (const auto& p : {bad_number, ragged, infinite, spacey, empty}) {
    std::filesystem::remove(p);
  }
}

TEST_CASE("file source resamples pool rows verbatim") {
  const std::string path = temp_csv("pool.csv", "1.5,2.5\n-3.25,4\n0,0.125\n");
  DatasetSpec spec;
  spec.source = DataSource::File;
  spec.path = path;
  Rng rng(13);
  const Matrix x = sample(spec, 50, rng);
  REQUIRE(x.cols() == 2);
  const Matrix pool = load_csv(path);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    bool found = false;
    for (Eigen::Index k = 0; k < pool.rows(); ++k) {
      if (x.row(i) == pool.row(k)) found = true;
    }
    CHECK(found);
  }
  std::filesystem::remove(path);
}

TEST_CASE("spec validation rejects out-of-range fields") {
  DatasetSpec spec;
  spec.dimension = 0;
  CHECK_THROWS_AS(validate(spec), ContractError);

  spec = DatasetSpec{};
  spec.split_fraction = 1.0;
  CHECK_THROWS_AS(validate(spec), ContractError);

  spec = DatasetSpec{};
  spec.source = DataSource::GaussianGrid;
  spec.grid_rows = 0;
  CHECK_THROWS_AS(validate(spec), ContractError);

  spec = DatasetSpec{};
  spec.modes = 0;
  CHECK_THROWS_AS(validate(spec), ContractError);

  spec = DatasetSpec{};
  spec.sigma = 0.0;
  CHECK_THROWS_AS(validate(spec), ContractError);

  spec = DatasetSpec{};
  spec.source = DataSource::TwoMoons;
  spec.noise = -0.1;
  CHECK_THROWS_AS(validate(spec), ContractError);

  spec = DatasetSpec{};
  spec.source = DataSource::GaussianRing;
  spec.dimension = 3;
  CHECK_THROWS_AS(validate(spec), ContractError);

  spec = DatasetSpec{};
  spec.source = DataSource::File;
  CHECK_THROWS_AS(validate(spec), ContractError);  // no path

  spec = DatasetSpec{};
  spec.samples = 1;
  CHECK_THROWS_AS(validate(spec), ContractError);

  NoiseSpec noise{NoiseFamily::Uniform, 0};
  CHECK_THROWS_AS(validate(noise), ContractError);

  DatasetSpec ok;
  Rng rng(1);
  CHECK_THROWS_AS(sample(ok, 0, rng), ContractError);
  CHECK_THROWS_AS(sample_noise(NoiseSpec{}, 0, rng), ContractError);
}

}  // TEST_SUITE
