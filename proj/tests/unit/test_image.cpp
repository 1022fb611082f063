#include <algorithm>
#include <string>

#include "doctest.h"
#include "fixtures.hpp"
#include "osxr/error.hpp"
#include "osxr/image.hpp"

using namespace osxr;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

std::size_t offset_of(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_pgm(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected a FormatError");
  return 0;
}

}  // namespace

TEST_CASE("decodes a minimal P5 file") {
  auto img = decode_pgm(bytes_of(std::string("P5\n2 2\n255\n") + '\x00' + '\x40' + '\x80' + '\xff'));
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 64, 128, 255});
  CHECK(img.at(1, 0) == 128);
}

TEST_CASE("header comments and extra whitespace are accepted") {
  auto img = decode_pgm(bytes_of(std::string("P5 # made by hand\n3\t1\n# maxval next\n255\nabc")));
  CHECK(img.width == 3);
  CHECK(img.height == 1);
  CHECK(img.pixels == std::vector<std::uint8_t>{'a', 'b', 'c'});
}

TEST_CASE("malformed files report the offending byte offset") {
  CHECK(offset_of(bytes_of("P2\n1 1\n255\nx")) == 0);
  CHECK(offset_of(bytes_of("P5\nx 1\n255\nx")) == 3);
  CHECK(offset_of(bytes_of("P5\n1 1\n65535\nxx")) == 7);
  // 4 bytes of pixels promised, 2 present: offset is the end of the input
  const auto truncated = bytes_of("P5\n2 2\n255\nab");
  CHECK(offset_of(truncated) == truncated.size());
  CHECK_THROWS_AS(decode_pgm(bytes_of("P5")), FormatError);
  CHECK_THROWS_AS(decode_pgm(bytes_of("P5\n0 3\n255\n")), FormatError);
}

TEST_CASE("encode then decode is the identity") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto img = osxr::testing::random_image(1 + seed % 7, 1 + seed % 5 * 3, seed);
    auto bytes = encode_pgm(img);
    CHECK(decode_pgm(bytes) == img);
    CHECK(encode_pgm(decode_pgm(bytes)) == bytes);
  }
}

TEST_CASE("files round-trip through disk") {
  osxr::testing::TempDir dir;
  auto img = osxr::testing::random_image(9, 11, 3);
  write_pgm(dir / "a.pgm", img);
  CHECK(read_pgm(dir / "a.pgm") == img);
  CHECK_THROWS_AS(read_pgm(dir / "missing.pgm"), IoError);
}

TEST_CASE("normalize_resize scales bytes to the unit interval") {
  Image img{2, 1, {0, 255}};
  auto t = normalize_resize(img, 1, 2);
  CHECK(t.shape() == Shape{1, 1, 1, 2});
  CHECK(t[0] == 0.0f);
  CHECK(t[1] == 1.0f);

  // half-pixel centres with edge clamping
  auto wide = normalize_resize(img, 1, 4);
  CHECK(wide[0] == doctest::Approx(0.0));
  CHECK(wide[1] == doctest::Approx(0.25));
  CHECK(wide[2] == doctest::Approx(0.75));
  CHECK(wide[3] == doctest::Approx(1.0));
}

TEST_CASE("resizing a constant image keeps it constant") {
  Image img{5, 3, std::vector<std::uint8_t>(15, 51)};
  auto t = normalize_resize(img, 8, 8);
  for (float v : t.data()) CHECK(v == doctest::Approx(0.2));
}

TEST_CASE("resize output stays within the input range") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto img = osxr::testing::random_image(7, 13, seed);
    auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    auto t = normalize_resize(img, 16, 16);
    for (float v : t.data()) {
      CHECK(v >= *lo / 255.0f - 1e-6f);
      CHECK(v <= *hi / 255.0f + 1e-6f);
    }
  }
}

TEST_CASE("image_from_unit clamps and rounds") {
  std::vector<float> v{-0.5f, 0.0f, 0.5f, 1.0f, 2.0f, 0.002f};
  auto img = image_from_unit(v, 2, 3);
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 0, 128, 255, 255, 1});
  CHECK_THROWS_AS(image_from_unit(v, 2, 2), ShapeError);
}

TEST_CASE("unit round trip recovers the bytes") {
  auto img = osxr::testing::random_image(6, 6, 9);
  auto t = normalize_resize(img, 6, 6);
  CHECK(image_from_unit(t.data(), 6, 6) == img);
}

TEST_CASE("stack_batch and batch_item are inverse") {
  std::vector<Tensor> items;
  for (std::uint64_t s = 0; s < 3; ++s) items.push_back(osxr::testing::random_tensor<float>({1, 1, 2, 2}, s));
  auto batch = stack_batch(items);
  CHECK(batch.shape() == Shape{3, 1, 2, 2});
  for (std::size_t i = 0; i < 3; ++i) {
    auto item = batch_item(batch, i);
    CHECK(std::equal(item.data().begin(), item.data().end(), items[i].data().begin()));
  }
  CHECK_THROWS_AS(batch_item(batch, 3), ShapeError);
  CHECK_THROWS_AS(stack_batch(std::span<const Tensor>{}), DomainError);
  items.push_back(osxr::testing::random_tensor<float>({1, 1, 3, 2}, 9));
  CHECK_THROWS_AS(stack_batch(items), ShapeError);
}
