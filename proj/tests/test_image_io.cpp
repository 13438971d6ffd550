#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "pal/image_io.hpp"

using namespace pal;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pal_test_image_io";
  fs::create_directories(dir);
  return dir / name;
}

io::Samples random_samples(std::mt19937_64& rng, int h, int w, int maxval) {
  io::Samples s;
  s.extent = {h, w};
  s.maxval = maxval;
  std::uniform_int_distribution<int> v(0, maxval);
  for (int i = 0; i < h * w; ++i) s.values.push_back(static_cast<std::uint16_t>(v(rng)));
  return s;
}

}  // namespace

TEST_CASE("PGM and PNG round trip raw samples at both depths") {
  std::mt19937_64 rng(1);
  for (const char* ext : {".pgm", ".png"})
    for (int maxval : {255, 65535}) {
      const auto s = random_samples(rng, 7, 13, maxval);
      const fs::path p = scratch(std::string("rt") + std::to_string(maxval) + ext);
      io::write_samples(p, s);
      const auto back = io::read_samples(p);
      CHECK(back.extent == s.extent);
      CHECK(back.maxval == s.maxval);
      CHECK(back.values == s.values);
    }
}

TEST_CASE("8-bit images normalize by 255 and round trip exactly") {
  GrayImage img(5, 6);
  for (int i = 0; i < 30; ++i) img.data()[i] = static_cast<float>(i * 8) / 255.0f;
  for (const char* name : {"img.pgm", "img.png"}) {
    io::write_image(scratch(name), img);
    CHECK(io::read_image(scratch(name)) == img);
  }
}

TEST_CASE("PGM header with comments parses") {
  const fs::path p = scratch("comment.pgm");
  {
    std::ofstream out(p, std::ios::binary);
    out << "P5\n# a comment\n2 1\n255\n";
    out.put(static_cast<char>(0));
    out.put(static_cast<char>(255));
  }
  const auto s = io::read_pgm(p);
  CHECK(s.extent == Extent{1, 2});
  CHECK(s.values == std::vector<std::uint16_t>{0, 255});
}

TEST_CASE("malformed files are rejected") {
  const fs::path p = scratch("bad.pgm");
  {
    std::ofstream out(p, std::ios::binary);
    out << "P2\n2 2\n255\n";
  }
  CHECK_THROWS_AS(io::read_pgm(p), FormatError);
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << "P5\n4 4\n255\n";
    out.put('x');
  }
  CHECK_THROWS_AS(io::read_pgm(p), FormatError);
  CHECK_THROWS(io::read_png(scratch("missing.png")));
  CHECK_THROWS(io::read_samples(scratch("x.bmp")));
}

TEST_CASE("masks write foreground as maxval and read nonzero as foreground") {
  BinaryMask m(4, 4, 0);
  m(1, 2) = 1;
  m(3, 0) = 1;
  const fs::path p = scratch("mask.png");
  io::write_mask(p, m);
  const auto s = io::read_samples(p);
  CHECK(s.values[1 * 4 + 2] == 255);
  CHECK(io::read_mask(p) == m);
}

TEST_CASE("PFM round trip is bit-exact for soft labels") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  SoftLabel l(9, 5);
  for (auto& v : l.data()) v = u(rng);
  l(0, 0) = 0.0f;
  l(8, 4) = 1.0f;
  io::write_pfm(scratch("l.pfm"), l);
  CHECK(io::read_pfm(scratch("l.pfm")) == l);
}

TEST_CASE("16-bit label PNG keeps 1/65535 resolution") {
  SoftLabel l(3, 3);
  for (int i = 0; i < 9; ++i) l.data()[i] = static_cast<float>(i) / 8.0f;
  io::write_label_png(scratch("l16.png"), l, io::BitDepth::sixteen);
  const SoftLabel back = io::read_label_png(scratch("l16.png"));
  for (int i = 0; i < 9; ++i) CHECK(std::abs(back.data()[i] - l.data()[i]) <= 0.5f / 65535.0f + 1e-7f);
}

TEST_CASE("quantize clamps") {
  GrayImage img(1, 3);
  img(0, 0) = -0.2f;
  img(0, 1) = 1.7f;
  img(0, 2) = 0.5f;
  const auto s = io::quantize(img);
  CHECK(s.values == std::vector<std::uint16_t>{0, 255, 128});
}
