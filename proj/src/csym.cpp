#include "symdec/csym.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace symdec::csym {
namespace {

static_assert(std::endian::native == std::endian::little, "CSYM I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const std::string& field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  void need(std::size_t n, const std::string& field) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("CSYM: truncated while reading " + field + " (need " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_) + ", file has " +
                        std::to_string(bytes_.size()) + ")");
    }
  }

  const std::uint8_t* take(std::size_t n, const std::string& field) {
    need(n, field);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const Tensor<float>& tensor) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * tensor.shape().size() + 4 * std::size_t(tensor.size()));
  out.insert(out.end(), {'C', 'S', 'Y', 'M'});
  put_u32(out, kVersion);
  put_u32(out, std::uint32_t(tensor.rank()));
  for (Index d : tensor.shape()) put_u32(out, std::uint32_t(d));
  const auto* raw = reinterpret_cast<const std::uint8_t*>(tensor.data());
  out.insert(out.end(), raw, raw + 4 * std::size_t(tensor.size()));
  return out;
}

Tensor<float> decode(const std::vector<std::uint8_t>& bytes, std::optional<int> expected_rank) {
  Reader r(bytes);
  const std::uint8_t* magic = r.take(4, "magic");
  if (std::memcmp(magic, "CSYM", 4) != 0) throw FormatError("CSYM: bad magic bytes");
  std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError("CSYM: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kVersion) + ")");
  }
  std::uint32_t rank = r.u32("rank");
  if (rank == 0 || rank > 8) throw FormatError("CSYM: invalid rank " + std::to_string(rank));
  if (expected_rank && int(rank) != *expected_rank) {
    throw FormatError("CSYM: rank " + std::to_string(rank) + " but expected " +
                      std::to_string(*expected_rank));
  }
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t d = r.u32("shape[" + std::to_string(i) + "]");
    if (d == 0) throw FormatError("CSYM: shape[" + std::to_string(i) + "] is zero");
    shape.push_back(Index(d));
  }
  const std::size_t count = std::size_t(shape_size(shape));
  const std::uint8_t* payload = r.take(4 * count, "data");
  if (r.remaining() != 0) {
    throw FormatError("CSYM: " + std::to_string(r.remaining()) + " trailing bytes after data");
  }
  Tensor<float> t(shape);
  std::memcpy(t.data(), payload, 4 * count);
  return t;
}

void write(const std::filesystem::path& path, const Tensor<float>& tensor) {
  auto bytes = encode(tensor);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

Tensor<float> read(const std::filesystem::path& path, std::optional<int> expected_rank) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes, expected_rank);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace symdec::csym
