#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include <png.h>

#include "lfd/error.hpp"
#include "lfd/image.hpp"

namespace lfd {

namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads the next whitespace-delimited header integer, skipping '#' comments.
long pnm_header_int(const std::vector<unsigned char>& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  long value = 0;
  while (pos < buf.size() && std::isdigit(buf[pos])) {
    value = value * 10 + (buf[pos] - '0');
    if (value > (1L << 24)) raise(ErrorCode::ParseError, "PNM header value too large at byte " + std::to_string(start));
    ++pos;
  }
  if (pos == start) raise(ErrorCode::ParseError, "malformed PNM header at byte " + std::to_string(start));
  return value;
}

GrayImage decode_pnm(const std::vector<unsigned char>& buf) {
  if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6')) {
    raise(ErrorCode::ParseError, "not a binary PGM/PPM file at byte 0");
  }
  const bool color = buf[1] == '6';
  std::size_t pos = 2;
  const long width = pnm_header_int(buf, pos);
  const long height = pnm_header_int(buf, pos);
  const long maxval = pnm_header_int(buf, pos);
  if (maxval <= 0 || maxval > 255) raise(ErrorCode::ParseError, "only 8-bit PNM is supported");
  if (pos >= buf.size() || !std::isspace(buf[pos])) raise(ErrorCode::ParseError, "missing header terminator at byte " + std::to_string(pos));
  ++pos;
  const std::size_t channels = color ? 3 : 1;
  const std::size_t needed = static_cast<std::size_t>(width) * height * channels;
  if (buf.size() - pos < needed) raise(ErrorCode::ParseError, "truncated pixel data at byte " + std::to_string(buf.size()));
  const double scale = 255.0 / maxval;
  PixelMatrix px(height, width);
  for (long y = 0; y < height; ++y) {
    for (long x = 0; x < width; ++x) {
      const unsigned char* p = &buf[pos + (static_cast<std::size_t>(y) * width + x) * channels];
      const double v = color ? kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2] : p[0];
      px(y, x) = std::min(255.0, v * scale);
    }
  }
  return GrayImage(std::move(px));
}

GrayImage decode_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    raise(ErrorCode::ParseError, "PNG header: " + std::string(image.message));
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> data(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    raise(ErrorCode::ParseError, "PNG data: " + msg);
  }
  const int channels = color ? 3 : 1;
  PixelMatrix px(image.height, image.width);
  for (png_uint_32 y = 0; y < image.height; ++y) {
    for (png_uint_32 x = 0; x < image.width; ++x) {
      const unsigned char* p = &data[(static_cast<std::size_t>(y) * image.width + x) * channels];
      px(y, x) = color ? std::min(255.0, kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2]) : p[0];
    }
  }
  return GrayImage(std::move(px));
}

}  // namespace

GrayImage load_image(const std::filesystem::path& path) {
  const auto buf = read_all(path);
  static constexpr unsigned char kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (buf.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, buf.begin())) return decode_png(path);
  return decode_pnm(buf);
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> row(img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      row[x] = static_cast<unsigned char>(std::lround(std::clamp(img(x, y), 0.0, 255.0)));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) raise(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace lfd
