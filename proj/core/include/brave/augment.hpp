#pragma once

#include <vector>

#include "brave/rng.hpp"
#include "brave/tensor.hpp"

namespace brave::augment {

struct AugmentConfig {
  double crop_area_min = 0.30;
  double crop_area_max = 1.0;
  double crop_aspect_min = 0.5;
  double crop_aspect_max = 2.0;
  double flip_prob = 0.5;
  double color_jitter_prob = 0.8;
  double brightness_offset = 32.0 / 255.0;  // additive, symmetric
  double hue_offset = 0.2;                  // additive hue rotation, fraction of the circle
  double contrast_min = 0.6;
  double contrast_max = 1.4;
  double saturation_min = 0.6;
  double saturation_max = 1.4;
  double grayscale_prob = 0.2;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  double blur_kernel_fraction = 0.1;  // kernel side = fraction * output side
  bool randconv_enabled = false;      // applied by the view pipeline, not here

  // An identity configuration: no crop, no flip, no jitter, no blur.
  static AugmentConfig disabled();
};

struct RandomConvSpec {
  std::vector<int> kernel_sizes = {1, 3, 5, 7, 9, 11};
};

struct RandomConvSample {
  int size = 1;
  Tensor weights;  // [k,k,3,3], He-initialized, zero bias implied
};

// Stochastic clip augmentation: one crop box / flip / jitter draw reused for
// every frame of the clip. Input [F,H,W,3] in [0,1]; output
// [F,out_side,out_side,3] in [0,1].
Tensor augment_rgb(const Tensor& clip, int out_side, const AugmentConfig& config, Rng& rng);

// Kernel size uniform over the spec's odd sizes; weights zero-mean Gaussian
// with variance 2/fan_in; fixed zero bias.
RandomConvSample sample_random_conv(const RandomConvSpec& spec, Rng& rng);

// Applies one 3->3 channel 2-D filter to every frame with zero
// dimension-preserving padding. Output shape equals input shape.
Tensor apply_conv2d(const Tensor& clip, const Tensor& weights);

Tensor random_convolution(const Tensor& clip, const RandomConvSpec& spec, Rng& rng);

struct FlowAugmentConfig {
  int resize_short = 0;  // 0 = keep source resolution
  int crop_side = 0;     // 0 = full frame
  double flip_prob = 0.5;
};

// Crop and horizontal flip only; flipping negates the horizontal flow
// component, resizing rescales displacements to the new pixel grid.
Tensor augment_flow(const Tensor& clip, const FlowAugmentConfig& config, Rng& rng);

// Color-space helpers (documented RGB<->HSV pair used by the hue jitter).
void rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v);
void hsv_to_rgb(double h, double s, double v, double* r, double* g, double* b);

}  // namespace brave::augment
