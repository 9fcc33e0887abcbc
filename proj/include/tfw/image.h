#pragma once
// Grayscale image ops on rank-2 [H, W] tensors with values in [0,1].
// Geometry uses inverse-mapped bilinear sampling; anything sampled outside
// the source is zero (ultrasound background is black).
#include <cmath>

#include "tfw/rng.h"
#include "tfw/tensor.h"

namespace tfw {

inline float bilinear_at(const Tensor& img, double sy, double sx) {
    const int64_t H = img.dim(0), W = img.dim(1);
    const int64_t y0 = static_cast<int64_t>(std::floor(sy));
    const int64_t x0 = static_cast<int64_t>(std::floor(sx));
    const double fy = sy - static_cast<double>(y0);
    const double fx = sx - static_cast<double>(x0);
    auto px = [&](int64_t y, int64_t x) -> double {
        if (y < 0 || y >= H || x < 0 || x >= W) return 0.0;
        return img.ptr()[y * W + x];
    };
    const double top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1) * fx;
    const double bot = px(y0 + 1, x0) * (1.0 - fx) + px(y0 + 1, x0 + 1) * fx;
    return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

// bilinear resize, half-pixel-centres convention; sample coords clamped to
// the valid range so borders replicate instead of darkening

inline Tensor resize_bilinear(const Tensor& img, int64_t oh, int64_t ow) {
    if (img.rank() != 2) throw ShapeError("resize: expected [H, W], got " + shape_str(img.shape));
    if (oh <= 0 || ow <= 0) throw ConfigError("resize: target must be positive");
    const int64_t H = img.dim(0), W = img.dim(1);
    if (oh == H && ow == W) return img;
    Tensor out({oh, ow});
    const double sy = static_cast<double>(H) / static_cast<double>(oh);
    const double sx = static_cast<double>(W) / static_cast<double>(ow);
    for (int64_t y = 0; y < oh; ++y) {
        double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
        src_y = std::min(std::max(src_y, 0.0), static_cast<double>(H - 1));
        for (int64_t x = 0; x < ow; ++x) {
            double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
            src_x = std::min(std::max(src_x, 0.0), static_cast<double>(W - 1));
            out.ptr()[y * ow + x] = bilinear_at(img, src_y, src_x);
        }
    }
    return out;
}

inline Tensor crop(const Tensor& img, int64_t oy, int64_t ox, int64_t ch, int64_t cw) {
    const int64_t H = img.dim(0), W = img.dim(1);
    if (oy < 0 || ox < 0 || oy + ch > H || ox + cw > W)
        throw ConfigError("crop: window " + std::to_string(ch) + "x" + std::to_string(cw) + "+" +
                          std::to_string(oy) + "+" + std::to_string(ox) + " outside " + shape_str(img.shape));
    Tensor out({ch, cw});
    for (int64_t y = 0; y < ch; ++y)
        for (int64_t x = 0; x < cw; ++x) out.ptr()[y * cw + x] = img.ptr()[(oy + y) * W + ox + x];
    return out;
}

// random crop offset at train time, centered at eval time

inline Tensor resize_then_crop(const Tensor& img, int64_t resize_to, int64_t crop_to, Rng* rng) {
    if (crop_to > resize_to) throw ConfigError("crop " + std::to_string(crop_to) + " exceeds resize " +
                                               std::to_string(resize_to));
    Tensor r = resize_bilinear(img, resize_to, resize_to);
    const int64_t slack = resize_to - crop_to;
    int64_t oy, ox;
    if (rng) {
        oy = slack > 0 ? static_cast<int64_t>(rng->uniform_int(static_cast<uint64_t>(slack + 1))) : 0;
        ox = slack > 0 ? static_cast<int64_t>(rng->uniform_int(static_cast<uint64_t>(slack + 1))) : 0;
    } else {
        oy = slack / 2;
        ox = slack / 2;
    }
    return crop(r, oy, ox, crop_to, crop_to);
}

// linear remap so min -> 0 and max -> 1; constant frames pass through

inline Tensor auto_contrast(const Tensor& img) {
    float lo = img.ptr()[0], hi = img.ptr()[0];
    for (int64_t i = 1; i < img.numel(); ++i) {
        lo = std::min(lo, img.ptr()[i]);
        hi = std::max(hi, img.ptr()[i]);
    }
    if (hi <= lo) return img;
    Tensor out(img.shape);
    const float inv = 1.0f / (hi - lo);
    for (int64_t i = 0; i < img.numel(); ++i) out.ptr()[i] = (img.ptr()[i] - lo) * inv;
    return out;
}

// One sequence-wide geometric transform. The forward map takes centred
// pixel coordinates through flip, uniform scale, rotation, then shift; we
// sample through its inverse. Angle in radians; positive rotates the image
// content clockwise on screen (y axis points down).

struct AffineParams {
    double angle = 0.0;
    double scale = 1.0;
    double shift_y = 0.0, shift_x = 0.0;
    bool hflip = false, vflip = false;

    bool is_identity() const {
        return angle == 0.0 && scale == 1.0 && shift_y == 0.0 && shift_x == 0.0 && !hflip && !vflip;
    }
};

inline Tensor warp_affine(const Tensor& img, const AffineParams& p) {
    if (p.is_identity()) return img;
    const int64_t H = img.dim(0), W = img.dim(1);
    const double cy = static_cast<double>(H - 1) / 2.0;
    const double cx = static_cast<double>(W - 1) / 2.0;
    const double c = std::cos(p.angle), s = std::sin(p.angle);
    const double inv_scale = 1.0 / p.scale;
    const double fy = p.vflip ? -1.0 : 1.0;
    const double fx = p.hflip ? -1.0 : 1.0;
    Tensor out(img.shape);
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
            // undo shift, then rotation, then scale, then flip
            const double vy = static_cast<double>(y) - cy - p.shift_y;
            const double vx = static_cast<double>(x) - cx - p.shift_x;
            const double ry = -s * vx + c * vy;
            const double rx = c * vx + s * vy;
            const double sy2 = fy * ry * inv_scale + cy;
            const double sx2 = fx * rx * inv_scale + cx;
            out.ptr()[y * W + x] = bilinear_at(img, sy2, sx2);
        }
    }
    return out;
}

}  // namespace tfw
