#pragma once

#include <cstdint>
#include <string>

#include "ncssd/tensor.hpp"

// File codecs: PNG / binary PPM image input (normalized to [-1,1]),
// .flo optical flow and PFM disparity (bit-exact layouts), and PNG
// visualization writers.

namespace ncssd {

// 8-bit RGB PNG or binary PPM -> [3,H,W] float32 in [-1,1] via 2*v/255 - 1.
Tensor<float> read_image(const std::string& path);

// PNG or PPM -> [1,H,W] with 1 where any channel is nonzero.
Tensor<float> read_mask(const std::string& path);

// .flo: float magic 202021.25, i32 width, i32 height, interleaved (u,v)
// float32 pairs, row-major.
void write_flow_flo(const std::string& path, const Tensor<float>& flow);
Tensor<float> read_flow_flo(const std::string& path);

// PFM "Pf": grayscale header, negative scale marks little-endian, float32
// rows stored bottom-to-top.
void write_disparity_pfm(const std::string& path, const Tensor<float>& disparity);
Tensor<float> read_disparity_pfm(const std::string& path);

// Color-wheel rendering of a [2,H,W] flow field (hue = direction,
// saturation = relative magnitude).
void write_flow_visualization(const std::string& path, const Tensor<float>& flow);

// Colormapped rendering of a [1,H,W] disparity map.
void write_disparity_visualization(const std::string& path, const Tensor<float>& disparity);

void write_image_png(const std::string& path, const uint8_t* rgb, int64_t width, int64_t height);

}  // namespace ncssd
