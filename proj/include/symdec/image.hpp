#ifndef SYMDEC_IMAGE_HPP
#define SYMDEC_IMAGE_HPP

#include <filesystem>

#include "symdec/tensor.hpp"

namespace symdec::image {

/// Binary PPM (P6, maxval 255) <-> [3, H, W] in [0, 1]. Values are quantized to k/255 on write.
Tensor<float> read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor<float>& rgb);

/// Binary PGM (P5): pixel = round(255 · clamp(score, 0, 1)).
void write_pgm(const std::filesystem::path& path, const Tensor<float>& scores);
Tensor<float> read_pgm(const std::filesystem::path& path);

/// Rounds every value to the nearest k/255.
Tensor<float> quantize8(const Tensor<float>& t);

/// Aspect-preserving resize so the longer side equals `size`, then zero padding at the bottom
/// and right to size x size.
struct Letterbox {
  Index size = 0;
  Index orig_rows = 0, orig_cols = 0;
  Index rows = 0, cols = 0;  // content extent inside the padded square
};

Letterbox letterbox_geometry(Index rows, Index cols, Index size);

/// [C, H, W] -> [C, size, size].
Tensor<float> pad_to_square(const Tensor<float>& img, const Letterbox& box);

/// Inverse for score maps: crop the content region of [size, size] (or [C, size, size]) and
/// resize it back to the original rows x cols.
Tensor<float> crop_and_restore(const Tensor<float>& map, const Letterbox& box);

}  // namespace symdec::image

#endif  // SYMDEC_IMAGE_HPP
