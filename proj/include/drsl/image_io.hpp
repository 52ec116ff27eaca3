#pragma once

#include <filesystem>

#include "drsl/tensor.hpp"

namespace drsl {

/// 8-bit RGB PNG. Values are quantized with round(v * 255).
void write_png_rgb(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor read_png_rgb(const std::filesystem::path& path);

/// Single-channel 8-bit PNG; pixel value = class id, 255 = ignore.
void write_png_labels(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_png_labels(const std::filesystem::path& path);

}  // namespace drsl
