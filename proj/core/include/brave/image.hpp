#pragma once

#include "brave/tensor.hpp"

namespace brave::img {

// Frame-volume helpers operating on [F,H,W,C] f32 tensors. Sampling uses
// half-pixel centers and clamps at borders; arithmetic is double internally.

double sample_bilinear(std::span<const float> data, int64_t h, int64_t w, int64_t c, double y,
                       double x, int64_t channel);

Tensor resize_bilinear(const Tensor& volume, int out_h, int out_w);

// Crops the box (y0,x0,box_h,box_w) in source pixel units from every frame
// and resizes it to (out_h, out_w).
Tensor crop_resize(const Tensor& volume, double y0, double x0, double box_h, double box_w,
                   int out_h, int out_w);

}  // namespace brave::img
