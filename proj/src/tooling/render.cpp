#include "dropblock/tooling/render.hpp"

#include <cctype>
#include <vector>

#include "dropblock/error.hpp"

namespace dropblock::tooling {

RenderFormat render_format_from(const std::string& name) {
  if (name == "ascii") return RenderFormat::Ascii;
  if (name == "pgm") return RenderFormat::Pgm;
  throw ParameterError("unsupported render format '" + name + "' (use ascii or pgm)");
}

std::string render_mask(const BinaryTensor4& mask, int sample, int channel,
                        RenderFormat format) {
  const Shape& s = mask.shape();
  if (sample < 0 || sample >= s.n || channel < 0 || channel >= s.c) {
    throw ShapeError("mask slice (" + std::to_string(sample) + "," + std::to_string(channel) +
                     ") is outside " + s.str());
  }
  std::string out;
  if (format == RenderFormat::Ascii) {
    out.reserve(s.plane() + s.h);
    for (int r = 0; r < s.h; ++r) {
      for (int c = 0; c < s.w; ++c) out += mask.at(sample, channel, r, c) ? '#' : '.';
      out += '\n';
    }
    return out;
  }
  out = "P5\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  for (int r = 0; r < s.h; ++r) {
    for (int c = 0; c < s.w; ++c) {
      out += static_cast<char>(mask.at(sample, channel, r, c) ? 255 : 0);
    }
  }
  return out;
}

namespace {

int read_header_int(std::span<const char> b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(b[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(static_cast<unsigned char>(b[pos]))) {
    throw FormatError("PGM: malformed header");
  }
  long v = 0;
  while (pos < b.size() && std::isdigit(static_cast<unsigned char>(b[pos]))) {
    v = v * 10 + (b[pos++] - '0');
    if (v > 1'000'000) throw FormatError("PGM: header value too large");
  }
  return static_cast<int>(v);
}

}  // namespace

BinaryTensor4 parse_pgm_mask(std::span<const char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("PGM: expected P5 magic");
  }
  std::size_t pos = 2;
  const int w = read_header_int(bytes, pos);
  const int h = read_header_int(bytes, pos);
  const int maxval = read_header_int(bytes, pos);
  if (maxval != 255) throw FormatError("PGM: maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("PGM: missing header terminator");
  }
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() - pos != n) throw FormatError("PGM: payload size mismatch");
  std::vector<std::uint8_t> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto px = static_cast<unsigned char>(bytes[pos + i]);
    if (px != 0 && px != 255) throw FormatError("PGM: mask pixels must be 0 or 255");
    data[i] = px == 255 ? 1 : 0;
  }
  return BinaryTensor4(Shape{1, 1, h, w}, std::move(data));
}

}  // namespace dropblock::tooling
