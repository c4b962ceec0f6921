#include "posediff/resample.hpp"

#include <algorithm>
#include <cmath>

namespace posediff {

namespace {

void check_chw(const TensorBlob& b, const char* who) {
    if (b.shape.size() != 3) fail(ErrorCode::BadShape, std::string(who) + " expects [C,H,W]");
}

}  // namespace

TensorBlob area_resample(const TensorBlob& src, int64_t out_h, int64_t out_w) {
    check_chw(src, "area_resample");
    const int64_t c = src.shape[0], ih = src.shape[1], iw = src.shape[2];
    if (out_h <= 0 || out_w <= 0) fail(ErrorCode::BadShape, "non-positive output size");
    if (ih == out_h && iw == out_w) return src;

    TensorBlob dst = TensorBlob::zeros({c, out_h, out_w});
    const double sy = static_cast<double>(ih) / out_h;
    const double sx = static_cast<double>(iw) / out_w;
    for (int64_t ch = 0; ch < c; ch++) {
        for (int64_t oy = 0; oy < out_h; oy++) {
            const double y0 = oy * sy, y1 = (oy + 1) * sy;
            for (int64_t ox = 0; ox < out_w; ox++) {
                const double x0 = ox * sx, x1 = (ox + 1) * sx;
                double acc = 0.0, area = 0.0;
                for (int64_t y = static_cast<int64_t>(std::floor(y0)); y < ih && y < y1; y++) {
                    const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
                    if (wy <= 0) continue;
                    for (int64_t x = static_cast<int64_t>(std::floor(x0)); x < iw && x < x1; x++) {
                        const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
                        if (wx <= 0) continue;
                        acc += wy * wx * src.chw(ch, y, x);
                        area += wy * wx;
                    }
                }
                dst.chw(ch, oy, ox) = static_cast<float>(acc / area);
            }
        }
    }
    return dst;
}

TensorBlob bilinear_resize(const TensorBlob& src, int64_t out_h, int64_t out_w) {
    check_chw(src, "bilinear_resize");
    const int64_t c = src.shape[0], ih = src.shape[1], iw = src.shape[2];
    if (out_h <= 0 || out_w <= 0) fail(ErrorCode::BadShape, "non-positive output size");
    if (ih == out_h && iw == out_w) return src;

    TensorBlob dst = TensorBlob::zeros({c, out_h, out_w});
    const double sy = static_cast<double>(ih) / out_h;
    const double sx = static_cast<double>(iw) / out_w;
    for (int64_t ch = 0; ch < c; ch++) {
        for (int64_t oy = 0; oy < out_h; oy++) {
            // pixel-center alignment
            const double fy = std::max(0.0, (oy + 0.5) * sy - 0.5);
            const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(fy), ih - 1);
            const int64_t y1 = std::min<int64_t>(y0 + 1, ih - 1);
            const double ty = fy - y0;
            for (int64_t ox = 0; ox < out_w; ox++) {
                const double fx = std::max(0.0, (ox + 0.5) * sx - 0.5);
                const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(fx), iw - 1);
                const int64_t x1 = std::min<int64_t>(x0 + 1, iw - 1);
                const double tx = fx - x0;
                const double top = src.chw(ch, y0, x0) * (1 - tx) + src.chw(ch, y0, x1) * tx;
                const double bot = src.chw(ch, y1, x0) * (1 - tx) + src.chw(ch, y1, x1) * tx;
                dst.chw(ch, oy, ox) = static_cast<float>(top * (1 - ty) + bot * ty);
            }
        }
    }
    return dst;
}

TensorBlob crop(const TensorBlob& src, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    check_chw(src, "crop");
    const int64_t c = src.shape[0], ih = src.shape[1], iw = src.shape[2];
    if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > ih || x0 + w > iw)
        fail(ErrorCode::BadShape, "crop window out of bounds");
    TensorBlob dst = TensorBlob::zeros({c, h, w});
    for (int64_t ch = 0; ch < c; ch++)
        for (int64_t y = 0; y < h; y++)
            for (int64_t x = 0; x < w; x++) dst.chw(ch, y, x) = src.chw(ch, y0 + y, x0 + x);
    return dst;
}

}  // namespace posediff
