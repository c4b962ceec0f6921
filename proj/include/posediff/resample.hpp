#pragma once

#include "posediff/tensor_blob.hpp"

namespace posediff {

// Area (box-overlap) interpolation of a [C,H,W] blob. Exact for integer
// downsample factors; preserves constants.
TensorBlob area_resample(const TensorBlob& src, int64_t out_h, int64_t out_w);

// Bilinear resize of a [C,H,W] blob; identity when sizes match.
TensorBlob bilinear_resize(const TensorBlob& src, int64_t out_h, int64_t out_w);

// Axis-aligned crop of a [C,H,W] blob.
TensorBlob crop(const TensorBlob& src, int64_t y0, int64_t x0, int64_t h, int64_t w);

}  // namespace posediff
