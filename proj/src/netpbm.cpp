#include "corefd/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "corefd/errors.hpp"

namespace corefd::netpbm {

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image quantized(const Image& img) {
  Image out = img;
  for (double& v : out.pixels) v = quantize(v) / 255.0;
  return out;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

struct Header {
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

// Parses "P5/P6 <ws> width <ws> height <ws> maxval <single ws>" with # comments.
Header parse_header(const std::vector<char>& bytes, const std::filesystem::path& path) {
  Header h;
  std::size_t pos = 0;
  const auto fail = [&](const std::string& why) -> void {
    throw FormatError(path.string() + ": " + why);
  };
  const auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  const auto read_uint = [&](const char* what) {
    skip_ws();
    std::size_t v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) fail(std::string("malformed header (") + what + ")");
    return v;
  };
  if (bytes.size() < 2) fail("file too short for a netpbm header");
  h.magic = std::string(bytes.begin(), bytes.begin() + 2);
  pos = 2;
  h.width = read_uint("width");
  h.height = read_uint("height");
  h.maxval = read_uint("maxval");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) fail("malformed header");
  h.data_offset = pos + 1;
  if (h.maxval != 255) fail("only maxval 255 is supported");
  if (h.width == 0 || h.height == 0) fail("zero-sized image");
  return h;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read image file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out = open_out(path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::string buf(img.pixels.size(), '\0');
  for (std::size_t i = 0; i < img.pixels.size(); ++i) buf[i] = static_cast<char>(quantize(img.pixels[i]));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  const Header h = parse_header(bytes, path);
  if (h.magic != "P6") throw FormatError(path.string() + ": not a binary PPM (P6) file");
  const std::size_t n = h.width * h.height * 3;
  if (bytes.size() < h.data_offset + n) throw FormatError(path.string() + ": truncated pixel data");
  Image img(h.height, h.width);
  for (std::size_t i = 0; i < n; ++i) {
    img.pixels[i] = static_cast<unsigned char>(bytes[h.data_offset + i]) / 255.0;
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const std::vector<double>& values, std::size_t height,
               std::size_t width) {
  if (values.size() != height * width) throw ShapeError("write_pgm: value count does not match dims");
  std::ofstream out = open_out(path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  std::string buf(values.size(), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<char>(quantize(values[i]));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  const Header h = parse_header(bytes, path);
  if (h.magic != "P5") throw FormatError(path.string() + ": not a binary PGM (P5) file");
  const std::size_t n = h.width * h.height;
  if (bytes.size() < h.data_offset + n) throw FormatError(path.string() + ": truncated pixel data");
  GrayImage g{h.height, h.width, {}};
  g.pixels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) g.pixels.push_back(static_cast<std::uint8_t>(bytes[h.data_offset + i]));
  return g;
}

}  // namespace corefd::netpbm
