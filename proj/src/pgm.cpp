#include "twise/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace twise {

namespace {

struct Header {
  long width = 0;
  long height = 0;
  long maxval = 0;
};

void skip_space_and_comments(std::istream& in) {
  for (;;) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

long read_number(std::istream& in, const std::string& path) {
  skip_space_and_comments(in);
  long v = -1;
  if (!(in >> v) || v < 0) throw std::runtime_error("pgm: malformed header in " + path);
  return v;
}

Header read_header(std::istream& in, const std::string& path) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw std::runtime_error("pgm: not a binary PGM: " + path);
  Header h;
  h.width = read_number(in, path);
  h.height = read_number(in, path);
  h.maxval = read_number(in, path);
  if (h.width == 0 || h.height == 0 || h.maxval == 0 || h.maxval > 65535) {
    throw std::runtime_error("pgm: unsupported dimensions or maxval in " + path);
  }
  in.get();  // single whitespace before the raster
  return h;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open: " + path);
  return in;
}

std::uint16_t clamp16(double v) {
  return static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
}

}  // namespace

void write_pgm16(const std::string& path, const Image16& image) {
  std::ofstream out = open_out(path);
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n65535\n";
  std::vector<char> raster(static_cast<std::size_t>(image.size()) * 2);
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    raster[2 * i] = static_cast<char>(image.data()[i] >> 8);
    raster[2 * i + 1] = static_cast<char>(image.data()[i] & 0xff);
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw std::runtime_error("pgm: write failed: " + path);
}

Image16 read_pgm16(const std::string& path) {
  std::ifstream in = open_in(path);
  const Header h = read_header(in, path);
  Image16 image(h.height, h.width);
  const std::size_t bytes = h.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raster(static_cast<std::size_t>(image.size()) * bytes);
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!in) throw std::runtime_error("pgm: truncated raster in " + path);
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    image.data()[i] = bytes == 2 ? static_cast<std::uint16_t>((raster[2 * i] << 8) | raster[2 * i + 1])
                                 : raster[static_cast<std::size_t>(i)];
  }
  return image;
}

void write_pgm8(const std::string& path, const Image8& image) {
  std::ofstream out = open_out(path);
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data()), static_cast<std::streamsize>(image.size()));
  if (!out) throw std::runtime_error("pgm: write failed: " + path);
}

Image8 read_pgm8(const std::string& path) {
  std::ifstream in = open_in(path);
  const Header h = read_header(in, path);
  if (h.maxval > 255) throw std::runtime_error("pgm: expected 8-bit PGM: " + path);
  Image8 image(h.height, h.width);
  in.read(reinterpret_cast<char*>(image.data()), static_cast<std::streamsize>(image.size()));
  if (!in) throw std::runtime_error("pgm: truncated raster in " + path);
  return image;
}

Image16 encode_depth(const DepthMap& depth) {
  return depth.unaryExpr([](double d) { return d > 0.0 ? clamp16(d * kDepthScale) : std::uint16_t(0); });
}

DepthMap decode_depth(const Image16& image) { return image.cast<double>() / kDepthScale; }

void write_depth_pgm(const std::string& path, const DepthMap& depth) { write_pgm16(path, encode_depth(depth)); }

DepthMap read_depth_pgm(const std::string& path) { return decode_depth(read_pgm16(path)); }

Image16 encode_scaled(const DepthMap& values, double scale) {
  return values.unaryExpr([scale](double v) { return clamp16(v * scale); });
}

Image16 encode_signed(const DepthMap& values, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("encode_signed: scale must be > 0");
  return values.unaryExpr([scale](double v) { return clamp16(std::round(v * scale) + kSignedOffset); });
}

DepthMap decode_signed(const Image16& image, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("decode_signed: scale must be > 0");
  return (image.cast<double>() - kSignedOffset) / scale;
}

void write_label_pgm(const std::string& path, const LabelMap& labels) {
  if (labels.size() > 0 && (labels.minCoeff() < 0 || labels.maxCoeff() > 255)) {
    throw std::invalid_argument("write_label_pgm: labels must lie in [0, 255]");
  }
  write_pgm8(path, labels.cast<std::uint8_t>());
}

LabelMap read_label_pgm(const std::string& path) { return read_pgm8(path).cast<int>(); }

}  // namespace twise
