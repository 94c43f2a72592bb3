#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "vsd/image_io.hpp"

namespace fs = std::filesystem;
using namespace vsd;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "vsd_io_test";
  fs::create_directories(dir);
  return dir;
}

std::vector<char> slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("ppm preserves images whose values sit on the 8-bit grid") {
  const fs::path file = temp_dir() / "grid.ppm";
  ImageBuffer img(5, 3);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> level(0, 255);
  for (double& v : img.values) v = level(rng) / 255.0;
  write_ppm(img, file);
  const ImageBuffer back = read_ppm(file);
  REQUIRE(back.width == 5);
  REQUIRE(back.height == 3);
  CHECK(back.values == img.values);
}

TEST_CASE("ppm quantizes off-grid values to the nearest 8-bit level") {
  const fs::path file = temp_dir() / "offgrid.ppm";
  const ImageBuffer img = ImageBuffer::filled(2, 2, 0.5, 0.0, 1.0);
  write_ppm(img, file);
  const ImageBuffer back = read_ppm(file);
  CHECK(back.at(0, 0, 0) == 128.0 / 255.0);  // round(127.5) rounds up
  CHECK(back.at(0, 0, 1) == 0.0);
  CHECK(back.at(0, 0, 2) == 1.0);
}

TEST_CASE("pgm stores masks as 0 or 255") {
  const fs::path file = temp_dir() / "mask.pgm";
  const std::vector<uint8_t> mask = {0, 1, 7, 0, 255, 0};
  write_pgm(mask, 3, 2, file);
  int w = 0, h = 0;
  const std::vector<uint8_t> back = read_pgm(file, &w, &h);
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(back == std::vector<uint8_t>({0, 255, 255, 0, 255, 0}));
}

TEST_CASE("pfm round trip keeps float-precision depth and validity") {
  const fs::path file = temp_dir() / "depth.pfm";
  DepthMap depth(6, 4);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dz(0.01, 80.0);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      depth.set(x, y, double(float(dz(rng))));
    }
  }
  depth.set(2, 1, 0.0, false);
  depth.set(5, 3, 0.0, false);
  write_pfm(depth, file);
  const DepthMap back = read_pfm(file);
  REQUIRE(back.width == depth.width);
  REQUIRE(back.height == depth.height);
  CHECK(back.values == depth.values);
  CHECK(back.valid == depth.valid);
}

TEST_CASE("pfm stores rows bottom to top with a negative scale") {
  const fs::path file = temp_dir() / "order.pfm";
  DepthMap depth(2, 2);
  depth.set(0, 0, 1.0);
  depth.set(1, 0, 2.0);
  depth.set(0, 1, 3.0);
  depth.set(1, 1, 4.0);
  write_pfm(depth, file);
  const std::vector<char> raw = slurp(file);
  const std::string header = "Pf\n2 2\n-1.0\n";
  REQUIRE(raw.size() == header.size() + 4 * sizeof(float));
  CHECK(std::memcmp(raw.data(), header.data(), header.size()) == 0);
  float px[4];
  std::memcpy(px, raw.data() + header.size(), sizeof(px));
  // The bottom image row (y = 1) comes first in the file.
  CHECK(px[0] == 3.0f);
  CHECK(px[1] == 4.0f);
  CHECK(px[2] == 1.0f);
  CHECK(px[3] == 2.0f);
}

TEST_CASE("pfm treats zero samples as invalid pixels") {
  const fs::path file = temp_dir() / "holes.pfm";
  DepthMap depth = DepthMap::filled(3, 1, 2.5);
  depth.set(1, 0, 0.0, false);
  write_pfm(depth, file);
  const DepthMap back = read_pfm(file);
  CHECK(back.is_valid(0, 0));
  CHECK_FALSE(back.is_valid(1, 0));
  CHECK(back.is_valid(2, 0));
  CHECK(back.valid_count() == 2);
}

TEST_CASE("pfm ingestion rejects negative and big-endian data") {
  const fs::path dir = temp_dir();
  const fs::path negative = dir / "negative.pfm";
  {
    std::ofstream out(negative, std::ios::binary);
    out << "Pf\n1 1\n-1.0\n";
    const float v = -2.0f;
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  CHECK_THROWS_AS(read_pfm(negative), IngestionError);

  const fs::path big_endian = dir / "big_endian.pfm";
  {
    std::ofstream out(big_endian, std::ios::binary);
    out << "Pf\n1 1\n1.0\n";
    const float v = 2.0f;
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  CHECK_THROWS_AS(read_pfm(big_endian), IngestionError);

  const fs::path truncated = dir / "truncated.pfm";
  std::ofstream(truncated, std::ios::binary) << "Pf\n4 4\n-1.0\n";
  CHECK_THROWS_AS(read_pfm(truncated), IngestionError);
}

TEST_CASE("raw pfm rasters store arbitrary float values") {
  const fs::path file = temp_dir() / "raster.pfm";
  const std::vector<double> values = {0.0, -1.5, 0.25, 3.75};
  write_pfm_raster(values, 2, 2, file);
  const std::vector<char> raw = slurp(file);
  const std::string header = "Pf\n2 2\n-1.0\n";
  REQUIRE(raw.size() == header.size() + 4 * sizeof(float));
  float px[4];
  std::memcpy(px, raw.data() + header.size(), sizeof(px));
  CHECK(px[0] == 0.25f);  // bottom row first
  CHECK(px[1] == 3.75f);
  CHECK(px[2] == 0.0f);
  CHECK(px[3] == -1.5f);
}

TEST_CASE("png16 depth quantizes to 1/256 meter steps") {
  const fs::path file = temp_dir() / "depth.png";
  DepthMap depth(3, 2);
  depth.set(0, 0, 20.0);        // stores 5120
  depth.set(1, 0, 0.0, false);  // stores 0
  depth.set(2, 0, 1.7);
  depth.set(0, 1, 0.001);  // rounds to 0 but valid pixels stay nonzero
  depth.set(1, 1, 250.0);  // within the 16-bit range at 64000
  depth.set(2, 1, 300.0);  // saturates at 65535
  write_depth_png16(depth, file);
  const DepthMap back = read_depth_png16(file);
  CHECK(back.at(0, 0) == 20.0);
  CHECK_FALSE(back.is_valid(1, 0));
  CHECK(back.at(2, 0) == std::round(1.7 * 256.0) / 256.0);
  CHECK(back.at(0, 1) == 1.0 / 256.0);
  CHECK(back.at(1, 1) == 250.0);
  CHECK(back.at(2, 1) == 65535.0 / 256.0);
  CHECK(back.valid_count() == 5);
}

TEST_CASE("png16 honors a custom divisor") {
  const fs::path file = temp_dir() / "depth_d100.png";
  DepthMap depth(1, 1);
  depth.set(0, 0, 12.34);
  write_depth_png16(depth, file, 100.0);
  const DepthMap back = read_depth_png16(file, 100.0);
  CHECK(back.at(0, 0) == 1234.0 / 100.0);
}

TEST_CASE("readers reject files of the wrong format") {
  const fs::path dir = temp_dir();
  CHECK_THROWS_AS(read_ppm(dir / "missing.ppm"), IngestionError);
  const fs::path pgm = dir / "actually.pgm";
  write_pgm(std::vector<uint8_t>{1}, 1, 1, pgm);
  CHECK_THROWS_AS(read_ppm(pgm), IngestionError);
  CHECK_THROWS_AS(read_pfm(pgm), IngestionError);
  CHECK_THROWS_AS(read_depth_png16(pgm), IngestionError);
}

TEST_CASE("false color maps the range ends to purple and yellow") {
  const std::vector<double> values = {0.0, 1.0, 0.5};
  const ImageBuffer img = false_color(values, {}, 3, 1, 0.0, 1.0);
  // Low end: dark purple.
  CHECK(img.at(0, 0, 0) == doctest::Approx(0.267));
  CHECK(img.at(0, 0, 1) == doctest::Approx(0.005));
  CHECK(img.at(0, 0, 2) == doctest::Approx(0.329));
  // High end: yellow.
  CHECK(img.at(1, 0, 0) == doctest::Approx(0.993));
  CHECK(img.at(1, 0, 1) == doctest::Approx(0.906));
  CHECK(img.at(1, 0, 2) == doctest::Approx(0.144));
  // Midpoint is neither.
  CHECK(img.at(2, 0, 1) > img.at(0, 0, 1));
  CHECK(img.at(2, 0, 0) < img.at(1, 0, 0));
}

TEST_CASE("false color renders masked entries black and clamps the rest") {
  const std::vector<double> values = {-5.0, 20.0, 0.5};
  const std::vector<uint8_t> mask = {1, 1, 0};
  const ImageBuffer img = false_color(values, mask, 3, 1, 0.0, 1.0);
  CHECK(img.at(0, 0, 0) == doctest::Approx(0.267));  // clamped to vmin
  CHECK(img.at(1, 0, 0) == doctest::Approx(0.993));  // clamped to vmax
  CHECK(img.at(2, 0, 0) == 0.0);
  CHECK(img.at(2, 0, 1) == 0.0);
  CHECK(img.at(2, 0, 2) == 0.0);
}

TEST_CASE("false color tolerates a degenerate value range") {
  const std::vector<double> values = {2.0, 2.0};
  const ImageBuffer img = false_color(values, {}, 2, 1, 2.0, 2.0);
  for (double v : img.values) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}
