#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace densedyn {

/// Grayscale raster normalized to [0,1] by the file's maxval.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // row-major, height*width

  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

enum class PgmErrorKind { kBadMagic, kBadHeader, kBadMaxval, kTruncated };

class PgmError : public std::runtime_error {
 public:
  PgmError(PgmErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  PgmErrorKind kind() const noexcept { return kind_; }

 private:
  PgmErrorKind kind_;
};

/// Parses P5 (binary, 8- or 16-bit big-endian samples) and P2 (ASCII) PGM.
/// Comment lines starting with '#' are skipped anywhere in the header.
GrayImage parse_pgm(std::span<const std::uint8_t> bytes);
GrayImage read_pgm(const std::filesystem::path& path);

/// Quantizes to round(v * maxval). `binary` selects P5 over P2.
std::vector<std::uint8_t> serialize_pgm(const GrayImage& image, bool binary = true, unsigned maxval = 255);

}  // namespace densedyn
