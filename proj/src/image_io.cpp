#include "pal/image_io.hpp"

#include <png.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

namespace pal::io {
namespace {

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::string& buf, std::size_t& pos) {
  for (;;) {
    while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  if (start == pos) throw FormatError("truncated header");
  return buf.substr(start, pos - start);
}

int parse_int(const std::string& tok) {
  try {
    std::size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size()) throw FormatError("bad integer '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("bad integer '" + tok + "'");
  }
}

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
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Samples read_pgm(const std::filesystem::path& path) {
  const std::string buf = read_all(path);
  std::size_t pos = 0;
  if (next_token(buf, pos) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
  Samples s;
  s.extent.width = parse_int(next_token(buf, pos));
  s.extent.height = parse_int(next_token(buf, pos));
  s.maxval = parse_int(next_token(buf, pos));
  if (s.extent.width <= 0 || s.extent.height <= 0) throw FormatError(path.string() + ": bad PGM extent");
  if (s.maxval <= 0 || s.maxval > 65535) throw FormatError(path.string() + ": bad PGM maxval");
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = s.extent.area();
  const std::size_t bytes = s.maxval < 256 ? n : 2 * n;
  if (buf.size() < pos + bytes) throw FormatError(path.string() + ": truncated PGM raster");
  s.values.resize(n);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  for (std::size_t i = 0; i < n; ++i) {
    s.values[i] = s.maxval < 256 ? p[i] : static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
    if (s.values[i] > s.maxval) throw FormatError(path.string() + ": sample exceeds maxval");
  }
  return s;
}

void write_pgm(const std::filesystem::path& path, const Samples& s) {
  std::string out = "P5\n" + std::to_string(s.extent.width) + " " + std::to_string(s.extent.height) + "\n" +
                    std::to_string(s.maxval) + "\n";
  const bool wide = s.maxval >= 256;
  for (std::uint16_t v : s.values) {
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  write_all(path, out);
}

Samples read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw FormatError(path.string() + ": not a PNG");

  PngReadGuard g;
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw Error("png_create_read_struct failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw Error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(g.png))) throw FormatError(path.string() + ": corrupt PNG");

  png_init_io(g.png, fp.get());
  png_set_sig_bytes(g.png, 8);
  png_read_info(g.png, g.info);

  const png_byte color = png_get_color_type(g.png, g.info);
  const png_byte depth = png_get_bit_depth(g.png, g.info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(g.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(g.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(g.png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
    throw FormatError(path.string() + ": color PNGs are not supported");
  if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(g.png);
  png_read_update_info(g.png, g.info);

  Samples s;
  s.extent.width = static_cast<int>(png_get_image_width(g.png, g.info));
  s.extent.height = static_cast<int>(png_get_image_height(g.png, g.info));
  const bool wide = png_get_bit_depth(g.png, g.info) == 16;
  s.maxval = wide ? 65535 : 255;

  const std::size_t rowbytes = png_get_rowbytes(g.png, g.info);
  std::vector<unsigned char> raw(rowbytes * static_cast<std::size_t>(s.extent.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(s.extent.height));
  for (int r = 0; r < s.extent.height; ++r) rows[r] = raw.data() + static_cast<std::size_t>(r) * rowbytes;
  png_read_image(g.png, rows.data());
  png_read_end(g.png, nullptr);

  s.values.resize(s.extent.area());
  for (int r = 0; r < s.extent.height; ++r) {
    for (int c = 0; c < s.extent.width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * s.extent.width + c;
      if (wide) {
        std::uint16_t v;
        std::memcpy(&v, rows[r] + 2 * c, 2);
        s.values[i] = v;
      } else {
        s.values[i] = rows[r][c];
      }
    }
  }
  return s;
}

void write_png(const std::filesystem::path& path, const Samples& s) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("cannot write " + path.string());

  PngWriteGuard g;
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw Error("png_create_write_struct failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw Error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(g.png))) throw Error(path.string() + ": PNG encode failed");

  const bool wide = s.maxval > 255;
  png_init_io(g.png, fp.get());
  png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(s.extent.width), static_cast<png_uint_32>(s.extent.height),
               wide ? 16 : 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(g.png, g.info);

  const std::size_t stride = static_cast<std::size_t>(s.extent.width) * (wide ? 2 : 1);
  std::vector<unsigned char> row(stride);
  for (int r = 0; r < s.extent.height; ++r) {
    for (int c = 0; c < s.extent.width; ++c) {
      const std::uint16_t v = s.values[static_cast<std::size_t>(r) * s.extent.width + c];
      if (wide) {
        row[2 * c] = static_cast<unsigned char>(v >> 8);  // PNG is big-endian
        row[2 * c + 1] = static_cast<unsigned char>(v & 0xFF);
      } else {
        row[c] = static_cast<unsigned char>(v);
      }
    }
    png_write_row(g.png, row.data());
  }
  png_write_end(g.png, nullptr);
}

Samples read_samples(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm") return read_pgm(path);
  throw FormatError(path.string() + ": unsupported extension (expected .png or .pgm)");
}

void write_samples(const std::filesystem::path& path, const Samples& samples) {
  const auto ext = path.extension().string();
  if (ext == ".png") return write_png(path, samples);
  if (ext == ".pgm") return write_pgm(path, samples);
  throw FormatError(path.string() + ": unsupported extension (expected .png or .pgm)");
}

namespace {

template <typename R>
R normalized(const Samples& s) {
  R out(s.extent);
  auto dst = out.data();
  const float scale = static_cast<float>(s.maxval);
  for (std::size_t i = 0; i < s.values.size(); ++i) dst[i] = static_cast<float>(s.values[i]) / scale;
  return out;
}

}  // namespace

GrayImage read_image(const std::filesystem::path& path) { return normalized<GrayImage>(read_samples(path)); }

void write_image(const std::filesystem::path& path, const GrayImage& img, BitDepth depth) {
  write_samples(path, quantize(img, depth));
}

SoftLabel read_label_png(const std::filesystem::path& path) { return normalized<SoftLabel>(read_samples(path)); }

void write_label_png(const std::filesystem::path& path, const SoftLabel& label, BitDepth depth) {
  write_samples(path, quantize(label, depth));
}

BinaryMask read_mask(const std::filesystem::path& path) {
  const Samples s = read_samples(path);
  BinaryMask out(s.extent);
  auto dst = out.data();
  for (std::size_t i = 0; i < s.values.size(); ++i) dst[i] = s.values[i] != 0 ? 1 : 0;
  return out;
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  Samples s;
  s.extent = mask.extent();
  s.maxval = 255;
  s.values.resize(mask.size());
  auto src = mask.data();
  for (std::size_t i = 0; i < src.size(); ++i) s.values[i] = src[i] ? 255 : 0;
  write_samples(path, s);
}

SoftLabel read_pfm(const std::filesystem::path& path) {
  const std::string buf = read_all(path);
  std::size_t pos = 0;
  if (next_token(buf, pos) != "Pf") throw FormatError(path.string() + ": not a grayscale PFM");
  const int width = parse_int(next_token(buf, pos));
  const int height = parse_int(next_token(buf, pos));
  const std::string scale_tok = next_token(buf, pos);
  ++pos;
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::logic_error&) {
    throw FormatError(path.string() + ": bad PFM scale");
  }
  if (width <= 0 || height <= 0) throw FormatError(path.string() + ": bad PFM extent");
  const bool little = scale < 0.0;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (buf.size() < pos + 4 * n) throw FormatError(path.string() + ": truncated PFM raster");

  SoftLabel out(height, width);
  for (int r = 0; r < height; ++r) {
    const int src_row = height - 1 - r;  // PFM stores rows bottom-to-top
    for (int c = 0; c < width; ++c) {
      const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos + 4 * (static_cast<std::size_t>(src_row) * width + c));
      std::uint32_t bits = little ? (p[0] | p[1] << 8 | p[2] << 16 | static_cast<std::uint32_t>(p[3]) << 24)
                                  : (p[3] | p[2] << 8 | p[1] << 16 | static_cast<std::uint32_t>(p[0]) << 24);
      out(r, c) = std::bit_cast<float>(bits);
    }
  }
  return out;
}

void write_pfm(const std::filesystem::path& path, const SoftLabel& label) {
  std::string out = "Pf\n" + std::to_string(label.width()) + " " + std::to_string(label.height()) + "\n-1.0\n";
  for (int r = label.height() - 1; r >= 0; --r) {
    for (int c = 0; c < label.width(); ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(label(r, c));
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }
  write_all(path, out);
}

}  // namespace pal::io
