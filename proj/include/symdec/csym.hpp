#ifndef SYMDEC_CSYM_HPP
#define SYMDEC_CSYM_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "symdec/tensor.hpp"

namespace symdec::csym {

/// Raw tensor container: "CSYM", u32 version, u32 rank, u32 shape[rank], f32 data. All little-endian.
inline constexpr std::uint32_t kVersion = 1;

std::vector<std::uint8_t> encode(const Tensor<float>& tensor);

/// Throws FormatError naming the field that failed (magic, version, rank, shape, data).
Tensor<float> decode(const std::vector<std::uint8_t>& bytes, std::optional<int> expected_rank = std::nullopt);

void write(const std::filesystem::path& path, const Tensor<float>& tensor);
Tensor<float> read(const std::filesystem::path& path, std::optional<int> expected_rank = std::nullopt);

}  // namespace symdec::csym

#endif  // SYMDEC_CSYM_HPP
