#include "mixalign/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mixalign {

namespace {

constexpr int kN = static_cast<int>(kImageSize);

void check_p(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string("augment: probability ") + name + " outside [0,1]");
}

void check_range(Range r, double lo, double hi, const char* name) {
  if (!(r.lo <= r.hi && r.lo >= lo && r.hi <= hi)) {
    throw std::invalid_argument(std::string("augment: range ") + name + " invalid");
  }
}

double draw(Range r, Rng& rng) { return r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi); }

double bilinear(const Image& img, std::size_t c, double y, double x) {
  y = std::clamp(y, 0.0, kN - 1.0);
  x = std::clamp(x, 0.0, kN - 1.0);
  const int y0 = std::min(static_cast<int>(y), kN - 2), x0 = std::min(static_cast<int>(x), kN - 2);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x0 + 1)) +
         fy * ((1 - fx) * img.at(c, y0 + 1, x0) + fx * img.at(c, y0 + 1, x0 + 1));
}

// Output pixel (y, x) samples the source at map(y, x); borders are clamped.
template <typename Map>
Image warp(const Image& src, Map map) {
  Image out;
  for (int y = 0; y < kN; ++y) {
    for (int x = 0; x < kN; ++x) {
      const auto [sy, sx] = map(static_cast<double>(y), static_cast<double>(x));
      for (std::size_t c = 0; c < kImageChannels; ++c) out.at(c, y, x) = bilinear(src, c, sy, sx);
    }
  }
  return out;
}

Image resized_crop(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  const double area = draw(cfg.crop_scale, rng);
  const double ratio = std::exp(draw({std::log(cfg.crop_ratio.lo), std::log(cfg.crop_ratio.hi)}, rng));
  const double w = std::min(1.0, std::sqrt(area * ratio)) * (kN - 1);
  const double h = std::min(1.0, std::sqrt(area / ratio)) * (kN - 1);
  const double y0 = rng.uniform(0.0, kN - 1 - h + 1e-12);
  const double x0 = rng.uniform(0.0, kN - 1 - w + 1e-12);
  return warp(img, [&](double y, double x) {
    return std::pair{y0 + y * h / (kN - 1), x0 + x * w / (kN - 1)};
  });
}

Image rotate(const Image& img, double degrees) {
  const double t = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t), mid = (kN - 1) / 2.0;
  return warp(img, [&](double y, double x) {
    const double dy = y - mid, dx = x - mid;
    return std::pair{mid + s * dx + c * dy, mid + c * dx - s * dy};
  });
}

// Solves the 8x8 system mapping dst corners onto src corners.
std::array<double, 8> homography(const std::array<std::array<double, 2>, 4>& dst,
                                 const std::array<std::array<double, 2>, 4>& src) {
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const double x = dst[i][0], y = dst[i][1], u = src[i][0], v = src[i][1];
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -x * u; r0[7] = -y * u; r0[8] = u;
    r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -x * v; r1[7] = -y * v; r1[8] = v;
  }
  for (int col = 0; col < 8; ++col) {
    int piv = col;
    for (int r = col + 1; r < 8; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    if (std::abs(a[col][col]) < 1e-12) throw std::runtime_error("augment: degenerate perspective");
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int k = col; k < 9; ++k) a[r][k] -= f * a[col][k];
    }
  }
  std::array<double, 8> h{};
  for (int i = 0; i < 8; ++i) h[i] = a[i][8] / a[i][i];
  return h;
}

Image perspective(const Image& img, double max_shift, Rng& rng) {
  const double e = kN - 1.0, d = max_shift * e;
  const std::array<std::array<double, 2>, 4> corners{{{0, 0}, {e, 0}, {e, e}, {0, e}}};
  auto moved = corners;
  for (auto& p : moved) {
    p[0] += rng.uniform(-d, d);
    p[1] += rng.uniform(-d, d);
  }
  const auto h = homography(corners, moved);
  return warp(img, [&](double y, double x) {
    const double w = h[6] * x + h[7] * y + 1.0;
    return std::pair{(h[3] * x + h[4] * y + h[5]) / w, (h[0] * x + h[1] * y + h[2]) / w};
  });
}

template <typename F>
void per_pixel(Image& img, F f) {
  for (double& v : img.pixels) v = f(v);
}

double luma(const Image& img, int y, int x) {
  return 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
}

void color_jitter(Image& img, const AugmentConfig& cfg, Rng& rng) {
  const double b = rng.uniform(-cfg.brightness, cfg.brightness);
  const double k = 1.0 + rng.uniform(-cfg.contrast, cfg.contrast);
  const double s = 1.0 + rng.uniform(-cfg.saturation, cfg.saturation);
  const double h = 2.0 * std::numbers::pi * rng.uniform(-cfg.hue, cfg.hue);
  double mean_luma = 0.0;
  for (int y = 0; y < kN; ++y) {
    for (int x = 0; x < kN; ++x) mean_luma += luma(img, y, x);
  }
  mean_luma /= kN * kN;
  const double ch = std::cos(h), sh = std::sin(h);
  for (int y = 0; y < kN; ++y) {
    for (int x = 0; x < kN; ++x) {
      const double r = img.at(0, y, x), g = img.at(1, y, x), bl = img.at(2, y, x);
      // YIQ: hue rotates (I, Q), saturation scales it.
      double yy = 0.299 * r + 0.587 * g + 0.114 * bl;
      double i = 0.596 * r - 0.274 * g - 0.322 * bl;
      double q = 0.211 * r - 0.523 * g + 0.312 * bl;
      const double i2 = s * (ch * i - sh * q), q2 = s * (sh * i + ch * q);
      yy = k * (yy - mean_luma) + mean_luma + b;
      img.at(0, y, x) = yy + 0.956 * i2 + 0.621 * q2;
      img.at(1, y, x) = yy - 0.272 * i2 - 0.647 * q2;
      img.at(2, y, x) = yy - 1.106 * i2 + 1.703 * q2;
    }
  }
}

Image box_smooth(const Image& img, const std::array<double, 9>& kernel) {
  Image out;
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    for (int y = 0; y < kN; ++y) {
      for (int x = 0; x < kN; ++x) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            s += kernel[(dy + 1) * 3 + dx + 1] * img.at(c, std::clamp(y + dy, 0, kN - 1), std::clamp(x + dx, 0, kN - 1));
          }
        }
        out.at(c, y, x) = s;
      }
    }
  }
  return out;
}

void gaussian(Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= total;
  Image tmp;
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    for (int y = 0; y < kN; ++y) {
      for (int x = 0; x < kN; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * img.at(c, y, std::clamp(x + i, 0, kN - 1));
        tmp.at(c, y, x) = s;
      }
    }
    for (int y = 0; y < kN; ++y) {
      for (int x = 0; x < kN; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp.at(c, std::clamp(y + i, 0, kN - 1), x);
        img.at(c, y, x) = s;
      }
    }
  }
}

void autocontrast(Image& img) {
  const std::size_t plane = kImageSize * kImageSize;
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    auto first = img.pixels.begin() + static_cast<long>(c * plane);
    const auto [lo, hi] = std::minmax_element(first, first + static_cast<long>(plane));
    const double a = *lo, b = *hi;
    if (b - a < 1e-6) continue;
    std::transform(first, first + static_cast<long>(plane), first, [&](double v) { return (v - a) / (b - a); });
  }
}

double channel_median(const Image& img, std::size_t c) {
  const std::size_t plane = kImageSize * kImageSize;
  std::vector<double> v(img.pixels.begin() + static_cast<long>(c * plane), img.pixels.begin() + static_cast<long>((c + 1) * plane));
  std::nth_element(v.begin(), v.begin() + static_cast<long>(plane / 2), v.end());
  return v[plane / 2];
}

}  // namespace

void AugmentConfig::validate() const {
  for (auto [p, n] : {std::pair{crop_p, "crop"}, {hflip_p, "hflip"}, {vflip_p, "vflip"}, {rotate_p, "rotate"},
                      {perspective_p, "perspective"}, {jitter_p, "jitter"}, {blur_p, "blur"},
                      {autocontrast_p, "autocontrast"}, {sharpness_p, "sharpness"}, {gamma_p, "gamma"},
                      {posterize_p, "posterize"}, {solarize_p, "solarize"}, {erase_p, "erase"}}) {
    check_p(p, n);
  }
  check_range(crop_scale, 1e-3, 1.0, "crop_scale");
  check_range(crop_ratio, 1e-3, 1e3, "crop_ratio");
  check_range(blur_sigma, 1e-3, 10.0, "blur_sigma");
  check_range(sharpness, 0.0, 10.0, "sharpness");
  check_range(gamma, 1e-3, 10.0, "gamma");
  check_range(posterize_bits, 1.0, 8.0, "posterize_bits");
  check_range(solarize_threshold, 0.0, 1.0, "solarize_threshold");
  check_range(erase_area, 1e-4, 0.5, "erase_area");
  check_range(erase_aspect, 1e-2, 1e2, "erase_aspect");
  if (rotate_max_deg < 0.0 || perspective_max < 0.0 || perspective_max >= 0.5) {
    throw std::invalid_argument("augment: rotation/perspective magnitude invalid");
  }
  for (double m : {brightness, contrast, saturation, hue}) {
    if (!(m >= 0.0 && m < 1.0)) throw std::invalid_argument("augment: jitter magnitude outside [0,1)");
  }
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.crop_p = c.hflip_p = c.vflip_p = c.rotate_p = c.perspective_p = c.jitter_p = c.blur_p = 0.0;
  c.autocontrast_p = c.sharpness_p = c.gamma_p = c.posterize_p = c.solarize_p = c.erase_p = 0.0;
  return c;
}

Image hflip(const Image& image) {
  Image out;
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    for (int y = 0; y < kN; ++y) {
      for (int x = 0; x < kN; ++x) out.at(c, y, x) = image.at(c, y, kN - 1 - x);
    }
  }
  return out;
}

Image vflip(const Image& image) {
  Image out;
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    for (int y = 0; y < kN; ++y) {
      for (int x = 0; x < kN; ++x) out.at(c, y, x) = image.at(c, kN - 1 - y, x);
    }
  }
  return out;
}

EraseBox random_erase(Image& image, Range area, Range aspect, Rng& rng) {
  const double total = static_cast<double>(kImageSize * kImageSize);
  EraseBox box;
  // Rejection-sample a window that fits and whose rounded area stays in range.
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double a = draw(area, rng) * total;
    const double r = std::exp(draw({std::log(aspect.lo), std::log(aspect.hi)}, rng));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(a * r)));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(a / r)));
    const double frac = static_cast<double>(h * w) / total;
    if (h == 0 || w == 0 || h > kImageSize || w > kImageSize || frac < area.lo || frac > area.hi) continue;
    box = {rng.index(kImageSize - h + 1), rng.index(kImageSize - w + 1), h, w};
    break;
  }
  if (box.h == 0) return box;
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    const double fill = channel_median(image, c);
    for (std::size_t y = box.y0; y < box.y0 + box.h; ++y) {
      for (std::size_t x = box.x0; x < box.x0 + box.w; ++x) image.at(c, y, x) = fill;
    }
  }
  return box;
}

Image augment(const Image& image, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  Image img = image;
  if (rng.bernoulli(cfg.crop_p)) img = resized_crop(img, cfg, rng);
  if (rng.bernoulli(cfg.hflip_p)) img = hflip(img);
  if (rng.bernoulli(cfg.vflip_p)) img = vflip(img);
  if (rng.bernoulli(cfg.rotate_p)) img = rotate(img, rng.uniform(-cfg.rotate_max_deg, cfg.rotate_max_deg));
  if (rng.bernoulli(cfg.perspective_p)) img = perspective(img, cfg.perspective_max, rng);
  if (rng.bernoulli(cfg.jitter_p)) color_jitter(img, cfg, rng);
  if (rng.bernoulli(cfg.blur_p)) gaussian(img, draw(cfg.blur_sigma, rng));
  per_pixel(img, [](double v) { return std::clamp(v, 0.0, 1.0); });
  if (rng.bernoulli(cfg.autocontrast_p)) autocontrast(img);
  if (rng.bernoulli(cfg.sharpness_p)) {
    const double f = draw(cfg.sharpness, rng);
    const Image smooth = box_smooth(img, {1, 1, 1, 1, 5, 1, 1, 1, 1});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      img.pixels[i] = smooth.pixels[i] / 13.0 + f * (img.pixels[i] - smooth.pixels[i] / 13.0);
    }
    per_pixel(img, [](double v) { return std::clamp(v, 0.0, 1.0); });
  }
  if (rng.bernoulli(cfg.gamma_p)) {
    const double g = draw(cfg.gamma, rng);
    per_pixel(img, [g](double v) { return std::pow(v, g); });
  }
  if (rng.bernoulli(cfg.posterize_p)) {
    const auto bits = static_cast<int>(std::lround(draw(cfg.posterize_bits, rng)));
    const double levels = std::ldexp(1.0, bits);
    per_pixel(img, [levels](double v) { return std::min(std::floor(v * levels), levels - 1.0) / (levels - 1.0); });
  }
  if (rng.bernoulli(cfg.solarize_p)) {
    const double t = draw(cfg.solarize_threshold, rng);
    per_pixel(img, [t](double v) { return v >= t ? 1.0 - v : v; });
  }
  if (rng.bernoulli(cfg.erase_p)) random_erase(img, cfg.erase_area, cfg.erase_aspect, rng);
  per_pixel(img, [](double v) { return std::clamp(v, 0.0, 1.0); });
  return img;
}

}  // namespace mixalign
