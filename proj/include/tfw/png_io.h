#pragma once
// 8-bit grayscale PNG read/write. Images travel as [H, W] tensors in [0,1];
// writing quantizes with round-to-nearest, reading divides by 255.
#include <string>

#include "tfw/tensor.h"

namespace tfw {

Tensor read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, const Tensor& img);

}  // namespace tfw
