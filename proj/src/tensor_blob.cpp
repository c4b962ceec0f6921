#include "posediff/tensor_blob.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace posediff {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'T', 'B'};

template <typename T>
void write_le(std::ostream& os, T v) {
    // Host is little-endian on every supported target; struct-free scalar write.
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

TensorBlob TensorBlob::zeros(std::vector<int64_t> shape) {
    TensorBlob b;
    b.dtype = Dtype::F32;
    b.shape = std::move(shape);
    b.f32.assign(static_cast<size_t>(b.numel()), 0.0f);
    return b;
}

TensorBlob TensorBlob::full(std::vector<int64_t> shape, float value) {
    TensorBlob b = zeros(std::move(shape));
    std::fill(b.f32.begin(), b.f32.end(), value);
    return b;
}

void TensorBlob::validate() const {
    if (shape.empty() || shape.size() > kBlobMaxRank)
        fail(ErrorCode::BadShape, "rank must be in [1," + std::to_string(kBlobMaxRank) + "], got " +
                                      std::to_string(shape.size()));
    for (int64_t d : shape)
        if (d <= 0) fail(ErrorCode::BadShape, "non-positive dim in " + shape_to_string(shape));
    const size_t n = static_cast<size_t>(numel());
    if (dtype == Dtype::F32) {
        if (f32.size() != n || !u8.empty())
            fail(ErrorCode::ShapeMismatch, "f32 payload has " + std::to_string(f32.size()) +
                                               " values, shape " + shape_to_string(shape) + " needs " +
                                               std::to_string(n));
        for (float v : f32)
            if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "f32 blob contains NaN/Inf");
    } else {
        if (u8.size() != n || !f32.empty())
            fail(ErrorCode::ShapeMismatch, "u8 payload has " + std::to_string(u8.size()) +
                                               " values, shape " + shape_to_string(shape) + " needs " +
                                               std::to_string(n));
    }
}

bool blobs_equal(const TensorBlob& a, const TensorBlob& b) {
    if (a.dtype != b.dtype || a.shape != b.shape) return false;
    if (a.dtype == Dtype::F32)
        return std::memcmp(a.f32.data(), b.f32.data(), a.f32.size() * sizeof(float)) == 0;
    return a.u8 == b.u8;
}

float max_abs_diff(const TensorBlob& a, const TensorBlob& b) {
    if (a.shape != b.shape || a.dtype != Dtype::F32 || b.dtype != Dtype::F32)
        fail(ErrorCode::ShapeMismatch, "max_abs_diff needs matching f32 blobs");
    float m = 0.0f;
    for (size_t i = 0; i < a.f32.size(); i++) m = std::max(m, std::fabs(a.f32[i] - b.f32[i]));
    return m;
}

void write_blob(const std::filesystem::path& path, const TensorBlob& blob) {
    blob.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::IoError, "cannot open for write: " + path.string());
    os.write(kMagic, 4);
    write_le<uint32_t>(os, kBlobVersion);
    write_le<uint8_t>(os, static_cast<uint8_t>(blob.dtype));
    write_le<uint8_t>(os, static_cast<uint8_t>(blob.shape.size()));
    for (int64_t d : blob.shape) write_le<uint32_t>(os, static_cast<uint32_t>(d));
    if (blob.dtype == Dtype::F32)
        os.write(reinterpret_cast<const char*>(blob.f32.data()),
                 static_cast<std::streamsize>(blob.f32.size() * sizeof(float)));
    else
        os.write(reinterpret_cast<const char*>(blob.u8.data()),
                 static_cast<std::streamsize>(blob.u8.size()));
    if (!os) fail(ErrorCode::IoError, "short write: " + path.string());
}

TensorBlob read_blob(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::IoError, "cannot open: " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        fail(ErrorCode::BadMagic, "not a tensor file: " + path.string());
    const uint32_t version = read_le<uint32_t>(is);
    if (version != kBlobVersion)
        fail(ErrorCode::BadMagic, "unsupported tensor file version " + std::to_string(version));
    const uint8_t dtype_raw = read_le<uint8_t>(is);
    if (dtype_raw > 1) fail(ErrorCode::BadMagic, "unknown dtype tag " + std::to_string(dtype_raw));
    const uint8_t rank = read_le<uint8_t>(is);
    if (rank == 0 || rank > kBlobMaxRank)
        fail(ErrorCode::BadShape, "rank " + std::to_string(rank) + " out of range");
    TensorBlob blob;
    blob.dtype = static_cast<Dtype>(dtype_raw);
    for (int r = 0; r < rank; r++) blob.shape.push_back(read_le<uint32_t>(is));
    if (!is) fail(ErrorCode::IoError, "truncated header: " + path.string());
    for (int64_t d : blob.shape)
        if (d <= 0) fail(ErrorCode::BadShape, "non-positive dim in header");

    const size_t n = static_cast<size_t>(blob.numel());
    const size_t elem = blob.dtype == Dtype::F32 ? sizeof(float) : 1;

    // Payload size must agree with the header exactly.
    const auto payload_start = is.tellg();
    is.seekg(0, std::ios::end);
    const size_t available = static_cast<size_t>(is.tellg() - payload_start);
    is.seekg(payload_start);
    if (available != n * elem)
        fail(ErrorCode::ShapeMismatch, "payload holds " + std::to_string(available / elem) +
                                           " values, header " + shape_to_string(blob.shape) + " needs " +
                                           std::to_string(n));

    if (blob.dtype == Dtype::F32) {
        blob.f32.resize(n);
        is.read(reinterpret_cast<char*>(blob.f32.data()), static_cast<std::streamsize>(n * elem));
    } else {
        blob.u8.resize(n);
        is.read(reinterpret_cast<char*>(blob.u8.data()), static_cast<std::streamsize>(n));
    }
    if (!is) fail(ErrorCode::IoError, "truncated payload: " + path.string());
    blob.validate();
    return blob;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::ostringstream ss;
    ss << "[";
    for (size_t i = 0; i < shape.size(); i++) ss << (i ? "," : "") << shape[i];
    ss << "]";
    return ss.str();
}

}  // namespace posediff
