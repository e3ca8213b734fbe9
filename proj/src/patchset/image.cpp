#include "cephlm/patchset/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "cephlm/binary_io.hpp"
#include "cephlm/error.hpp"

namespace cephlm::patchset {

double sample_bilinear(const GrayImage& image, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const long x0 = static_cast<long>(fx);
  const long y0 = static_cast<long>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  const long w = static_cast<long>(image.width);
  const long h = static_cast<long>(image.height);
  auto px = [&](long xi, long yi) -> double {
    if (xi < 0 || yi < 0 || xi >= w || yi >= h) return 0.0;
    return image.pixels[static_cast<std::size_t>(yi * w + xi)];
  };
  const double top = (1.0 - ax) * px(x0, y0) + ax * px(x0 + 1, y0);
  const double bottom = (1.0 - ax) * px(x0, y0 + 1) + ax * px(x0 + 1, y0 + 1);
  return (1.0 - ay) * top + ay * bottom;
}

namespace {

struct PngReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadGuard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct PngWriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteGuard() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

GrayImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(Errc::io_error, "cannot open " + path.string());
  PngReadGuard g;
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw Error(Errc::io_error, "libpng init failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw Error(Errc::io_error, "libpng init failed");

  GrayImage image;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(g.png))) throw Error(Errc::io_error, "corrupt PNG " + path.string());
  png_init_io(g.png, file.get());
  png_read_info(g.png, g.info);

  const png_byte color = png_get_color_type(g.png, g.info);
  const png_byte depth = png_get_bit_depth(g.png, g.info);
  if (depth == 16) png_set_strip_16(g.png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(g.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(g.png);
  if (png_get_valid(g.png, g.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(g.png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(g.png, g.info, PNG_INFO_tRNS)) png_set_strip_alpha(g.png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(g.png, 1, -1, -1);
  }
  png_read_update_info(g.png, g.info);

  image.width = png_get_image_width(g.png, g.info);
  image.height = png_get_image_height(g.png, g.info);
  if (png_get_rowbytes(g.png, g.info) != image.width) throw Error(Errc::io_error, "unsupported PNG layout");
  image.pixels.resize(image.width * image.height);
  rows.resize(image.height);
  for (std::size_t y = 0; y < image.height; ++y) rows[y] = image.pixels.data() + y * image.width;
  png_read_image(g.png, rows.data());
  png_read_end(g.png, nullptr);
  return image;
}

std::string next_pgm_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw Error(Errc::io_error, "truncated PGM header");
}

GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::string text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::istringstream in(text);
  const std::string magic = next_pgm_token(in);
  if (magic != "P5" && magic != "P2") throw Error(Errc::io_error, "not a PGM file: " + path.string());
  GrayImage image;
  image.width = std::stoul(next_pgm_token(in));
  image.height = std::stoul(next_pgm_token(in));
  const unsigned long maxval = std::stoul(next_pgm_token(in));
  if (maxval == 0 || maxval > 255) throw Error(Errc::io_error, "only 8-bit PGM is supported");
  image.pixels.resize(image.width * image.height);
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    const auto offset = static_cast<std::size_t>(in.tellg());
    if (offset + image.pixels.size() > bytes.size()) throw Error(Errc::io_error, "truncated PGM data");
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
      image.pixels[i] = static_cast<std::uint8_t>(std::to_integer<unsigned>(bytes[offset + i]) * 255 / maxval);
    }
  } else {
    for (auto& p : image.pixels) p = static_cast<std::uint8_t>(std::stoul(next_pgm_token(in)) * 255 / maxval);
  }
  return image;
}

}  // namespace

GrayImage read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::missing_file, path.string());
  const auto head = read_file_bytes(path);
  if (head.size() >= 8 && std::to_integer<unsigned char>(head[0]) == 0x89 &&
      std::to_integer<unsigned char>(head[1]) == 'P' && std::to_integer<unsigned char>(head[2]) == 'N') {
    return read_png(path);
  }
  if (head.size() >= 2 && std::to_integer<char>(head[0]) == 'P') return read_pgm(path);
  throw Error(Errc::io_error, "unrecognized image format: " + path.string());
}

void write_png(const GrayImage& image, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(Errc::io_error, "cannot write " + path.string());
  PngWriteGuard g;
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw Error(Errc::io_error, "libpng init failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw Error(Errc::io_error, "libpng init failed");
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(g.png))) throw Error(Errc::io_error, "PNG encode failed for " + path.string());
  png_init_io(g.png, file.get());
  png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(g.png, g.info);
  for (std::size_t y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.pixels.data() + y * image.width);
  }
  png_write_image(g.png, rows.data());
  png_write_end(g.png, nullptr);
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  ByteWriter w;
  const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  w.put_bytes(header.data(), header.size());
  w.put_bytes(image.pixels.data(), image.pixels.size());
  write_file_bytes(path, w.bytes());
}

}  // namespace cephlm::patchset
