#pragma once

#include <string>

#include "oob/tensor.hpp"

namespace oob {

// 8-bit RGB PNG <-> [3,H,W] tensor with values in [0,1] (v/255 on read,
// round(v*255) on write). Round-trip error is at most 0.5/255 per channel.
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

}  // namespace oob
