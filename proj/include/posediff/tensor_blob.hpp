#pragma once

#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "posediff/errors.hpp"

namespace posediff {

// Binary tensor container, the interchange currency of the whole pipeline.
// On-disk format (little-endian):
//   magic "PDTB" | version u32 | dtype u8 (0=f32, 1=u8) | rank u8 |
//   dims u32 x rank | payload row-major
enum class Dtype : uint8_t { F32 = 0, U8 = 1 };

constexpr uint32_t kBlobVersion = 1;
constexpr int kBlobMaxRank = 4;

struct TensorBlob {
    Dtype dtype = Dtype::F32;
    std::vector<int64_t> shape;
    std::vector<float> f32;
    std::vector<uint8_t> u8;

    static TensorBlob zeros(std::vector<int64_t> shape);
    static TensorBlob full(std::vector<int64_t> shape, float value);

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    bool same_shape(const TensorBlob& other) const { return shape == other.shape; }

    float& at(int64_t i) { return f32[static_cast<size_t>(i)]; }
    float at(int64_t i) const { return f32[static_cast<size_t>(i)]; }

    // [C,H,W] indexing for image-like blobs.
    float& chw(int64_t c, int64_t y, int64_t x) {
        return f32[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }
    float chw(int64_t c, int64_t y, int64_t x) const {
        return f32[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }

    // Validates the container invariants; throws on violation.
    void validate() const;
};

bool blobs_equal(const TensorBlob& a, const TensorBlob& b);
float max_abs_diff(const TensorBlob& a, const TensorBlob& b);

void write_blob(const std::filesystem::path& path, const TensorBlob& blob);
TensorBlob read_blob(const std::filesystem::path& path);

std::string shape_to_string(const std::vector<int64_t>& shape);

}  // namespace posediff
