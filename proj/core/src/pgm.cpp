#include "densedyn/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

namespace densedyn {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ >= bytes_.size(); }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  /// Unsigned decimal token; throws `kind` on anything else.
  unsigned long next_uint(PgmErrorKind kind, const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw PgmError(PgmErrorKind::kTruncated, std::string("pgm: missing ") + field);
    if (!std::isdigit(bytes_[pos_])) throw PgmError(kind, std::string("pgm: expected integer for ") + field);
    unsigned long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > std::numeric_limits<std::uint32_t>::max()) throw PgmError(kind, std::string("pgm: ") + field + " overflow");
      ++pos_;
    }
    return value;
  }

  void expect_single_whitespace() {
    if (pos_ >= bytes_.size()) throw PgmError(PgmErrorKind::kTruncated, "pgm: header ends before raster");
    if (!std::isspace(bytes_[pos_])) throw PgmError(PgmErrorKind::kBadHeader, "pgm: expected whitespace after maxval");
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage parse_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2') ||
      (bytes.size() > 2 && !std::isspace(bytes[2]) && bytes[2] != '#')) {
    throw PgmError(PgmErrorKind::kBadMagic, "pgm: magic must be P5 or P2");
  }
  const bool binary = bytes[1] == '5';
  HeaderReader body(bytes.subspan(2));
  const auto width = body.next_uint(PgmErrorKind::kBadHeader, "width");
  const auto height = body.next_uint(PgmErrorKind::kBadHeader, "height");
  const auto maxval = body.next_uint(PgmErrorKind::kBadMaxval, "maxval");
  if (width == 0 || height == 0) throw PgmError(PgmErrorKind::kBadHeader, "pgm: zero width or height");
  if (maxval < 1 || maxval > 65535) {
    throw PgmError(PgmErrorKind::kBadMaxval, "pgm: maxval " + std::to_string(maxval) + " outside [1, 65535]");
  }

  GrayImage img;
  img.width = width;
  img.height = height;
  const std::size_t count = static_cast<std::size_t>(width) * height;
  img.pixels.resize(count);
  const double scale = 1.0 / static_cast<double>(maxval);

  if (binary) {
    body.expect_single_whitespace();
    const std::size_t offset = 2 + body.pos();
    const std::size_t sample_bytes = maxval < 256 ? 1 : 2;
    const std::size_t need = count * sample_bytes;
    if (bytes.size() - offset < need) {
      throw PgmError(PgmErrorKind::kTruncated, "pgm: raster truncated, expected " + std::to_string(need) +
                                                   " bytes, found " + std::to_string(bytes.size() - offset));
    }
    const std::uint8_t* p = bytes.data() + offset;
    for (std::size_t i = 0; i < count; ++i) {
      unsigned v = sample_bytes == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
      if (v > maxval) throw PgmError(PgmErrorKind::kBadMaxval, "pgm: sample exceeds maxval");
      img.pixels[i] = v * scale;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const auto v = body.next_uint(PgmErrorKind::kBadHeader, "sample");
      if (v > maxval) throw PgmError(PgmErrorKind::kBadMaxval, "pgm: sample exceeds maxval");
      img.pixels[i] = static_cast<double>(v) * scale;
    }
  }
  return img;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_pgm(bytes);
  } catch (const PgmError& e) {
    throw PgmError(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> serialize_pgm(const GrayImage& image, bool binary, unsigned maxval) {
  if (maxval < 1 || maxval > 65535) throw PgmError(PgmErrorKind::kBadMaxval, "pgm: maxval outside [1, 65535]");
  std::string header = std::string(binary ? "P5" : "P2") + "\n" + std::to_string(image.width) + " " +
                       std::to_string(image.height) + "\n" + std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  auto quantize = [&](double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned>(std::lround(c * maxval));
  };
  if (binary) {
    for (double v : image.pixels) {
      const unsigned q = quantize(v);
      if (maxval < 256) {
        out.push_back(static_cast<std::uint8_t>(q));
      } else {
        out.push_back(static_cast<std::uint8_t>(q >> 8));
        out.push_back(static_cast<std::uint8_t>(q & 0xff));
      }
    }
  } else {
    for (std::size_t y = 0; y < image.height; ++y) {
      std::string line;
      for (std::size_t x = 0; x < image.width; ++x) {
        if (x) line += ' ';
        line += std::to_string(quantize(image.at(x, y)));
      }
      line += '\n';
      out.insert(out.end(), line.begin(), line.end());
    }
  }
  return out;
}

}  // namespace densedyn
