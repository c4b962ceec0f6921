#pragma once

#include <filesystem>

#include "posediff/tensor_blob.hpp"

namespace posediff {

// PNG <-> [3,H,W] f32 blob in [0,1]. 8-bit output; gray/RGBA inputs are
// converted to RGB on read.
TensorBlob read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const TensorBlob& image);

}  // namespace posediff
