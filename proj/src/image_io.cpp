#include "skyloc/image_io.hpp"

#include "skyloc/binary_io.hpp"

#include <zlib.h>

#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

namespace skyloc {

std::vector<std::uint8_t> read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptFileError(path.filename().string(), "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> data(size);
  if (size > 0 && !in.read(reinterpret_cast<char *>(data.data()), static_cast<std::streamsize>(size)))
    throw CorruptFileError(path.filename().string(), "read failed");
  return data;
}

void write_file(const std::filesystem::path &path, std::span<const std::uint8_t> data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char *>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for files above 4 GiB.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < data.size(); off += kChunk) {
    const std::size_t len = std::min(kChunk, data.size() - off);
    crc = ::crc32(crc, data.data() + off, static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

GrayImage to_gray(const RgbImage &image) {
  return 0.299f * image.channel[0].cast<float>() + 0.587f * image.channel[1].cast<float>() +
         0.114f * image.channel[2].cast<float>();
}

namespace {

struct NetpbmHeader {
  char kind = 0;
  int width = 0, height = 0;
  std::size_t data_offset = 0;
};

NetpbmHeader parse_header(const std::vector<std::uint8_t> &data, const std::string &name) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(data[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    if (pos >= data.size() || !std::isdigit(data[pos])) throw CorruptFileError(name, "malformed netpbm header");
    long v = 0;
    while (pos < data.size() && std::isdigit(data[pos])) {
      v = v * 10 + (data[pos++] - '0');
      if (v > 1 << 20) throw CorruptFileError(name, "netpbm dimension too large");
    }
    return static_cast<int>(v);
  };
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '6' && data[1] != '5'))
    throw CorruptFileError(name, "not a binary PPM/PGM file");
  NetpbmHeader h;
  h.kind = static_cast<char>(data[1]);
  pos = 2;
  h.width = read_int();
  h.height = read_int();
  const int maxval = read_int();
  if (maxval != 255) throw CorruptFileError(name, "only maxval 255 is supported");
  if (pos >= data.size() || !std::isspace(data[pos])) throw CorruptFileError(name, "malformed netpbm header");
  h.data_offset = pos + 1;
  const std::size_t channels = h.kind == '6' ? 3 : 1;
  if (data.size() - h.data_offset < channels * h.width * h.height) throw CorruptFileError(name, "truncated pixel data");
  return h;
}

}  // namespace

void write_ppm(const std::filesystem::path &path, const RgbImage &image) {
  const std::string header = "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + 3 * static_cast<std::size_t>(image.width()) * image.height());
  for (int v = 0; v < image.height(); ++v)
    for (int u = 0; u < image.width(); ++u)
      for (int c = 0; c < 3; ++c) out.push_back(image.channel[c](v, u));
  write_file(path, out);
}

RgbImage read_image(const std::filesystem::path &path) {
  const auto data = read_file(path);
  const auto h = parse_header(data, path.filename().string());
  RgbImage img(h.width, h.height);
  const std::uint8_t *p = data.data() + h.data_offset;
  for (int v = 0; v < h.height; ++v)
    for (int u = 0; u < h.width; ++u) {
      if (h.kind == '6') {
        for (int c = 0; c < 3; ++c) img.channel[c](v, u) = *p++;
      } else {
        const std::uint8_t g = *p++;
        for (int c = 0; c < 3; ++c) img.channel[c](v, u) = g;
      }
    }
  return img;
}

RgbImage read_ppm(const std::filesystem::path &path) {
  const auto data = read_file(path);
  if (data.size() < 2 || data[1] != '6') throw CorruptFileError(path.filename().string(), "not a P6 file");
  return read_image(path);
}

void write_pgm(const std::filesystem::path &path, const GrayImage &image) {
  const std::string header = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (Eigen::Index v = 0; v < image.rows(); ++v)
    for (Eigen::Index u = 0; u < image.cols(); ++u)
      out.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(image(v, u)), 0L, 255L)));
  write_file(path, out);
}

GrayImage read_pgm(const std::filesystem::path &path) {
  const auto data = read_file(path);
  const auto h = parse_header(data, path.filename().string());
  if (h.kind != '5') throw CorruptFileError(path.filename().string(), "not a P5 file");
  GrayImage img(h.height, h.width);
  const std::uint8_t *p = data.data() + h.data_offset;
  for (int v = 0; v < h.height; ++v)
    for (int u = 0; u < h.width; ++u) img(v, u) = *p++;
  return img;
}

}  // namespace skyloc
