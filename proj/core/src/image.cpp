#include "osxr/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "osxr/error.hpp"

namespace osxr {

namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  std::size_t pos() const noexcept { return pos_; }

  // Skips whitespace and '#' comments; requires at least one separator byte.
  void skip_separators() {
    const std::size_t start = pos_;
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    if (pos_ == start) throw FormatError("pgm: expected whitespace", pos_);
  }

  std::size_t read_number(const char* what) {
    if (pos_ >= bytes_.size()) throw FormatError(std::string("pgm: truncated header, missing ") + what, pos_);
    if (!std::isdigit(bytes_[pos_])) throw FormatError(std::string("pgm: expected ") + what, pos_);
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1u << 24)) throw FormatError(std::string("pgm: ") + what + " too large", pos_);
      ++pos_;
    }
    return value;
  }

  void expect_single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("pgm: expected a single whitespace byte before pixel data", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

}  // namespace

Image decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("pgm: magic is not P5", 0);
  HeaderReader hr(bytes, 2);
  Image img;
  hr.skip_separators();
  img.width = hr.read_number("width");
  hr.skip_separators();
  img.height = hr.read_number("height");
  hr.skip_separators();
  const std::size_t maxval_at = hr.pos();
  const std::size_t maxval = hr.read_number("maxval");
  if (maxval != 255) throw FormatError("pgm: maxval must be 255, got " + std::to_string(maxval), maxval_at);
  hr.expect_single_whitespace();
  if (img.width == 0 || img.height == 0) throw FormatError("pgm: zero image dimension", 3);
  const std::size_t data_at = hr.pos();
  const std::size_t need = img.width * img.height;
  if (bytes.size() - data_at < need) {
    throw FormatError("pgm: truncated pixel data, expected " + std::to_string(need) + " bytes, found " +
                          std::to_string(bytes.size() - data_at),
                      bytes.size());
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(data_at),
                    bytes.begin() + static_cast<std::ptrdiff_t>(data_at + need));
  return img;
}

std::vector<std::uint8_t> encode_pgm(const Image& image) {
  if (image.empty() || image.pixels.size() != image.width * image.height) {
    throw DomainError("encode_pgm: image has no pixels or inconsistent extents");
  }
  const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  const auto bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<float> resize_bilinear(std::span<const float> src, std::size_t src_h, std::size_t src_w,
                                   std::size_t dst_h, std::size_t dst_w) {
  if (src_h == 0 || src_w == 0 || dst_h == 0 || dst_w == 0) throw DomainError("resize: zero dimension");
  if (src.size() != src_h * src_w) throw ShapeError("resize: source plane size does not match extents");
  std::vector<float> out(dst_h * dst_w);
  const double sy = static_cast<double>(src_h) / static_cast<double>(dst_h);
  const double sx = static_cast<double>(src_w) / static_cast<double>(dst_w);
  auto coord = [](double pos, std::size_t n, std::size_t& i0, std::size_t& i1, double& frac) {
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(pos));
    i1 = std::min(i0 + 1, n - 1);
    frac = pos - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < dst_h; ++y) {
    std::size_t y0, y1;
    double fy;
    coord((static_cast<double>(y) + 0.5) * sy - 0.5, src_h, y0, y1, fy);
    for (std::size_t x = 0; x < dst_w; ++x) {
      std::size_t x0, x1;
      double fx;
      coord((static_cast<double>(x) + 0.5) * sx - 0.5, src_w, x0, x1, fx);
      const double top = src[y0 * src_w + x0] * (1.0 - fx) + src[y0 * src_w + x1] * fx;
      const double bottom = src[y1 * src_w + x0] * (1.0 - fx) + src[y1 * src_w + x1] * fx;
      out[y * dst_w + x] = static_cast<float>(top * (1.0 - fy) + bottom * fy);
    }
  }
  return out;
}

Tensor normalize_resize(const Image& image, std::size_t height, std::size_t width) {
  if (image.empty()) throw DomainError("normalize_resize: zero-dimension image");
  std::vector<float> plane(image.pixels.begin(), image.pixels.end());
  if (image.height != height || image.width != width) {
    plane = resize_bilinear(plane, image.height, image.width, height, width);
  }
  for (auto& v : plane) v /= 255.0f;
  return Tensor::from({1, 1, height, width}, std::move(plane));
}

Image image_from_unit(std::span<const float> values, std::size_t height, std::size_t width) {
  if (values.size() != height * width) throw ShapeError("image_from_unit: value count does not match extents");
  Image img{width, height, std::vector<std::uint8_t>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = std::clamp(values[i], 0.0f, 1.0f);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return img;
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw DomainError("stack_batch: no items");
  Shape shape = items.front().shape();
  if (shape.empty() || shape[0] != 1) throw ShapeError("stack_batch: items must have a leading extent of 1");
  std::vector<float> data;
  data.reserve(items.size() * items.front().numel());
  for (const auto& t : items) {
    if (t.shape() != items.front().shape()) throw ShapeError("stack_batch: items differ in shape");
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  shape[0] = items.size();
  return Tensor::from(std::move(shape), std::move(data));
}

Tensor batch_item(const Tensor& batch, std::size_t index) {
  if (batch.rank() < 1 || index >= batch.extent(0)) throw ShapeError("batch_item: index out of range");
  Shape shape = batch.shape();
  const std::size_t stride = batch.numel() / shape[0];
  shape[0] = 1;
  auto d = batch.data().subspan(index * stride, stride);
  return Tensor::from(std::move(shape), std::vector<float>(d.begin(), d.end()));
}

}  // namespace osxr
