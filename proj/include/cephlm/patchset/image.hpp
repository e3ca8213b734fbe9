#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace cephlm::patchset {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
};

// Bilinear sample at continuous (x, y); neighbours outside the image read as 0.
double sample_bilinear(const GrayImage& image, double x, double y);

// PNG (any bit depth / colour type, converted to 8-bit gray) or binary/ASCII PGM.
GrayImage read_image(const std::filesystem::path& path);
void write_png(const GrayImage& image, const std::filesystem::path& path);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);

}  // namespace cephlm::patchset
