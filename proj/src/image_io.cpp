#include "vsd/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace vsd {

namespace {

uint8_t quantize8(double v) {
  const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return uint8_t(q);
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(char(c));
  }
  return tok;
}

void parse_netpbm_dims(std::istream& in, const std::filesystem::path& file,
                       int* width, int* height) {
  try {
    *width = std::stoi(next_token(in));
    *height = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw IngestionError("malformed header in " + file.string());
  }
  if (*width <= 0 || *height <= 0) {
    throw IngestionError("bad dimensions in " + file.string());
  }
}

}  // namespace

void write_ppm(const ImageBuffer& img, const std::filesystem::path& file) {
  img.validate();
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + file.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> row(size_t(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        row[size_t(x) * 3 + c] = quantize8(img.at(x, y, c));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw IngestionError("short write to " + file.string());
}

ImageBuffer read_ppm(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + file.string());
  if (next_token(in) != "P6") {
    throw IngestionError("not a binary PPM: " + file.string());
  }
  int w = 0, h = 0;
  parse_netpbm_dims(in, file, &w, &h);
  if (next_token(in) != "255") {
    throw IngestionError("unsupported maxval in " + file.string());
  }
  ImageBuffer img(w, h);
  std::vector<uint8_t> data(size_t(w) * h * 3);
  in.read(reinterpret_cast<char*>(data.data()), data.size());
  if (size_t(in.gcount()) != data.size()) {
    throw IngestionError("truncated pixel data in " + file.string());
  }
  for (size_t i = 0; i < data.size(); ++i) {
    img.values[i] = data[i] / 255.0;
  }
  return img;
}

void write_pgm(std::span<const uint8_t> mask, int width, int height,
               const std::filesystem::path& file) {
  if (mask.size() != size_t(width) * height) {
    throw ConfigError("pgm: mask size does not match dimensions");
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + file.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  std::vector<uint8_t> data(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) data[i] = mask[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(data.data()), data.size());
  if (!out) throw IngestionError("short write to " + file.string());
}

std::vector<uint8_t> read_pgm(const std::filesystem::path& file, int* width,
                              int* height) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + file.string());
  if (next_token(in) != "P5") {
    throw IngestionError("not a binary PGM: " + file.string());
  }
  parse_netpbm_dims(in, file, width, height);
  if (next_token(in) != "255") {
    throw IngestionError("unsupported maxval in " + file.string());
  }
  std::vector<uint8_t> data(size_t(*width) * *height);
  in.read(reinterpret_cast<char*>(data.data()), data.size());
  if (size_t(in.gcount()) != data.size()) {
    throw IngestionError("truncated pixel data in " + file.string());
  }
  return data;
}

void write_pfm(const DepthMap& depth, const std::filesystem::path& file) {
  depth.validate();
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + file.string());
  out << "Pf\n" << depth.width << " " << depth.height << "\n-1.0\n";
  std::vector<float> row(depth.width);
  for (int y = depth.height - 1; y >= 0; --y) {
    for (int x = 0; x < depth.width; ++x) {
      row[x] = depth.is_valid(x, y) ? float(depth.at(x, y)) : 0.0f;
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              row.size() * sizeof(float));
  }
  if (!out) throw IngestionError("short write to " + file.string());
}

DepthMap read_pfm(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + file.string());
  if (next_token(in) != "Pf") {
    throw IngestionError("not a grayscale PFM: " + file.string());
  }
  int w = 0, h = 0;
  parse_netpbm_dims(in, file, &w, &h);
  double scale = 0.0;
  try {
    scale = std::stod(next_token(in));
  } catch (const std::exception&) {
    throw IngestionError("malformed scale in " + file.string());
  }
  if (!(scale < 0.0)) {
    throw IngestionError("big-endian PFM not supported: " + file.string());
  }
  DepthMap depth(w, h);
  std::vector<float> row(w);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
    if (size_t(in.gcount()) != row.size() * sizeof(float)) {
      throw IngestionError("truncated pixel data in " + file.string());
    }
    for (int x = 0; x < w; ++x) {
      const float v = row[x];
      if (v == 0.0f) {
        depth.set(x, y, 0.0, false);
      } else if (!(v > 0.0f) || !std::isfinite(v)) {
        throw IngestionError("nonpositive or non-finite depth in " +
                             file.string());
      } else {
        depth.set(x, y, v, true);
      }
    }
  }
  return depth;
}

void write_pfm_raster(std::span<const double> values, int width, int height,
                      const std::filesystem::path& file) {
  if (values.size() != size_t(width) * height) {
    throw ConfigError("pfm: raster size does not match dimensions");
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + file.string());
  out << "Pf\n" << width << " " << height << "\n-1.0\n";
  std::vector<float> row(width);
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) {
      row[x] = float(values[size_t(y) * width + x]);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              row.size() * sizeof(float));
  }
  if (!out) throw IngestionError("short write to " + file.string());
}

void write_depth_png16(const DepthMap& depth,
                       const std::filesystem::path& file, double divisor) {
  depth.validate();
  FILE* fp = std::fopen(file.string().c_str(), "wb");
  if (!fp) throw IngestionError("cannot write " + file.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  std::vector<uint8_t> data(size_t(depth.width) * depth.height * 2);
  std::vector<png_bytep> rows(depth.height);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IngestionError("png write failure: " + file.string());
  }
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      uint32_t v = 0;
      if (depth.is_valid(x, y)) {
        v = uint32_t(std::lround(depth.at(x, y) * divisor));
        v = std::clamp<uint32_t>(v, 1, 65535);  // keep valid pixels nonzero
      }
      const size_t o = (size_t(y) * depth.width + x) * 2;
      data[o] = uint8_t(v >> 8);  // PNG stores 16-bit samples big-endian
      data[o + 1] = uint8_t(v & 0xff);
    }
    rows[y] = data.data() + size_t(y) * depth.width * 2;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, depth.width, depth.height, 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

DepthMap read_depth_png16(const std::filesystem::path& file, double divisor) {
  FILE* fp = std::fopen(file.string().c_str(), "rb");
  if (!fp) throw IngestionError("cannot open " + file.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  std::vector<uint8_t> data;
  std::vector<png_bytep> rows;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IngestionError("png read failure: " + file.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const int w = int(png_get_image_width(png, info));
  const int h = int(png_get_image_height(png, info));
  if (png_get_bit_depth(png, info) != 16 ||
      png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IngestionError("expected 16-bit grayscale PNG: " + file.string());
  }
  data.resize(size_t(w) * h * 2);
  rows.resize(h);
  for (int y = 0; y < h; ++y) {
    rows[y] = data.data() + size_t(y) * w * 2;
  }
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  DepthMap depth(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t o = (size_t(y) * w + x) * 2;
      const uint32_t v = (uint32_t(data[o]) << 8) | data[o + 1];
      if (v == 0) {
        depth.set(x, y, 0.0, false);
      } else {
        depth.set(x, y, v / divisor, true);
      }
    }
  }
  return depth;
}

ImageBuffer false_color(std::span<const double> values,
                        std::span<const uint8_t> mask, int width, int height,
                        double vmin, double vmax) {
  if (values.size() != size_t(width) * height) {
    throw ConfigError("false_color: raster size does not match dimensions");
  }
  if (!mask.empty() && mask.size() != values.size()) {
    throw ConfigError("false_color: mask size does not match raster");
  }
  // Viridis anchor colors, dark purple at 0 through yellow at 1.
  static constexpr double ramp[11][3] = {
      {0.267, 0.005, 0.329}, {0.283, 0.141, 0.458}, {0.254, 0.265, 0.530},
      {0.207, 0.372, 0.553}, {0.164, 0.471, 0.558}, {0.128, 0.567, 0.551},
      {0.135, 0.659, 0.518}, {0.267, 0.749, 0.441}, {0.478, 0.821, 0.318},
      {0.741, 0.873, 0.150}, {0.993, 0.906, 0.144}};
  const double span = vmax > vmin ? vmax - vmin : 1.0;
  ImageBuffer img(width, height);
  for (size_t i = 0; i < values.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;  // stays black
    const double t = std::clamp((values[i] - vmin) / span, 0.0, 1.0);
    const double pos = t * 10.0;
    const int lo = std::min(int(pos), 9);
    const double f = pos - lo;
    for (int c = 0; c < 3; ++c) {
      img.values[i * 3 + c] = ramp[lo][c] + f * (ramp[lo + 1][c] - ramp[lo][c]);
    }
  }
  return img;
}

}  // namespace vsd
