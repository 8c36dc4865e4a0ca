#pragma once

#include <cstddef>

#include "mixalign/random.hpp"
#include "mixalign/synth.hpp"

namespace mixalign {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Probabilities and magnitudes for the training-time augmentation suite.
// Magnitudes are kept mild so the class shape survives every transform.
struct AugmentConfig {
  double crop_p = 0.3;
  Range crop_scale{0.85, 1.0};  // fraction of the image area
  Range crop_ratio{0.8, 1.25};

  double hflip_p = 0.5;
  double vflip_p = 0.5;

  double rotate_p = 0.5;
  double rotate_max_deg = 25.0;

  double perspective_p = 0.2;
  double perspective_max = 0.06;  // corner displacement, fraction of side

  double jitter_p = 0.8;
  double brightness = 0.08;
  double contrast = 0.12;
  double saturation = 0.12;
  double hue = 0.03;  // radians of rotation in the chroma plane / 2pi

  double blur_p = 0.2;
  Range blur_sigma{0.2, 0.8};

  double autocontrast_p = 0.1;

  double sharpness_p = 0.2;
  Range sharpness{0.5, 1.6};

  double gamma_p = 0.2;
  Range gamma{0.75, 1.4};

  double posterize_p = 0.1;
  Range posterize_bits{4.0, 7.0};

  double solarize_p = 0.03;
  Range solarize_threshold{0.97, 1.0};

  double erase_p = 0.1;
  Range erase_area{0.015, 0.04};
  Range erase_aspect{0.5, 2.0};

  void validate() const;
  static AugmentConfig none();
};

Image augment(const Image& image, const AugmentConfig& cfg, Rng& rng);

// Individual transforms, exposed for testing.
Image hflip(const Image& image);
Image vflip(const Image& image);

struct EraseBox {
  std::size_t y0 = 0, x0 = 0, h = 0, w = 0;
};
EraseBox random_erase(Image& image, Range area, Range aspect, Rng& rng);

}  // namespace mixalign
