#include "symdec/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "symdec/grid.hpp"

namespace symdec::image {
namespace {

std::uint8_t to_byte(float v) { return std::uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

/// Reads the netpbm header "<magic> <w> <h> <maxval>" followed by one whitespace byte.
void read_header(std::istream& is, const std::filesystem::path& path, const std::string& magic, Index& w, Index& h) {
  std::string m;
  is >> m;
  if (m != magic) throw FormatError(path.string() + ": expected " + magic + " header, got '" + m + "'");
  auto next = [&]() {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string comment;
      std::getline(is, comment);
      is >> std::ws;
    }
    long long v = -1;
    is >> v;
    return v;
  };
  const long long ww = next(), hh = next(), maxval = next();
  if (!is || ww <= 0 || hh <= 0) throw FormatError(path.string() + ": bad image size");
  if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 is supported");
  is.get();
  w = Index(ww);
  h = Index(hh);
}

}  // namespace

Tensor<float> read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image " + path.string());
  Index w = 0, h = 0;
  read_header(is, path, "P6", w, h);
  std::vector<unsigned char> bytes(std::size_t(3 * w * h));
  is.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (is.gcount() != std::streamsize(bytes.size())) throw FormatError(path.string() + ": truncated pixel data");
  Tensor<float> out(Shape{3, h, w});
  for (Index p = 0; p < h * w; ++p) {
    for (Index c = 0; c < 3; ++c) out[c * h * w + p] = float(bytes[std::size_t(3 * p + c)]) / 255.0f;
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("write_ppm: expected [3, H, W], got " + shape_string(rgb.shape()));
  const Index h = rgb.dim(1), w = rgb.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write image " + path.string());
  os << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<std::uint8_t> bytes(std::size_t(3 * w * h));
  for (Index p = 0; p < h * w; ++p) {
    for (Index c = 0; c < 3; ++c) bytes[std::size_t(3 * p + c)] = to_byte(rgb[c * h * w + p]);
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

void write_pgm(const std::filesystem::path& path, const Tensor<float>& scores) {
  if (scores.rank() != 2) throw ShapeError("write_pgm: expected [H, W], got " + shape_string(scores.shape()));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write image " + path.string());
  os << "P5\n" << scores.dim(1) << ' ' << scores.dim(0) << "\n255\n";
  std::vector<std::uint8_t> bytes(std::size_t(scores.size()));
  for (Index i = 0; i < scores.size(); ++i) bytes[std::size_t(i)] = to_byte(scores[i]);
  os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

Tensor<float> read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image " + path.string());
  Index w = 0, h = 0;
  read_header(is, path, "P5", w, h);
  std::vector<unsigned char> bytes(std::size_t(w * h));
  is.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (is.gcount() != std::streamsize(bytes.size())) throw FormatError(path.string() + ": truncated pixel data");
  Tensor<float> out(Shape{h, w});
  for (Index i = 0; i < out.size(); ++i) out[i] = float(bytes[std::size_t(i)]) / 255.0f;
  return out;
}

Tensor<float> quantize8(const Tensor<float>& t) {
  Tensor<float> out(t.shape());
  for (Index i = 0; i < t.size(); ++i) out[i] = float(to_byte(t[i])) / 255.0f;
  return out;
}

Letterbox letterbox_geometry(Index rows, Index cols, Index size) {
  if (rows < 1 || cols < 1 || size < 1) throw ShapeError("letterbox: sizes must be positive");
  Letterbox box{size, rows, cols, size, size};
  if (rows >= cols) {
    box.cols = std::max<Index>(1, Index(std::lround(double(cols) * double(size) / double(rows))));
  } else {
    box.rows = std::max<Index>(1, Index(std::lround(double(rows) * double(size) / double(cols))));
  }
  return box;
}

Tensor<float> pad_to_square(const Tensor<float>& img, const Letterbox& box) {
  if (img.rank() != 3) throw ShapeError("pad_to_square: expected [C, H, W], got " + shape_string(img.shape()));
  const Tensor<float> scaled = grid::bilinear_resize(img, box.rows, box.cols);
  const Index c = img.dim(0);
  Tensor<float> out(Shape{c, box.size, box.size});
  for (Index ch = 0; ch < c; ++ch) {
    for (Index r = 0; r < box.rows; ++r) {
      for (Index q = 0; q < box.cols; ++q) out(ch, r, q) = scaled(ch, r, q);
    }
  }
  return out;
}

Tensor<float> crop_and_restore(const Tensor<float>& map, const Letterbox& box) {
  const bool planar = map.rank() == 2;
  const Tensor<float> m = planar ? map.reshaped({1, map.dim(0), map.dim(1)}) : map;
  if (m.rank() != 3 || m.dim(1) != box.size || m.dim(2) != box.size) {
    throw ShapeError("crop_and_restore: map " + shape_string(map.shape()) + " vs padded size " + std::to_string(box.size));
  }
  Tensor<float> crop(Shape{m.dim(0), box.rows, box.cols});
  for (Index ch = 0; ch < m.dim(0); ++ch) {
    for (Index r = 0; r < box.rows; ++r) {
      for (Index q = 0; q < box.cols; ++q) crop(ch, r, q) = m(ch, r, q);
    }
  }
  Tensor<float> out = grid::bilinear_resize(crop, box.orig_rows, box.orig_cols);
  return planar ? out.reshaped({box.orig_rows, box.orig_cols}) : out;
}

}  // namespace symdec::image
