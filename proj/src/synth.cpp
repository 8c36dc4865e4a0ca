#include "mixalign/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mixalign {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::uint64_t kDomainStream = 0xD0D0;
constexpr std::uint64_t kSplitStream = 0x5917;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

// Separable Gaussian blur with edge clamping, in place.
void gaussian_blur(Image& img, double sigma) {
  if (sigma <= 1e-6) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= total;
  const int n = static_cast<int>(kImageSize);
  std::vector<double> tmp(kImageSize * kImageSize);
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * img.at(c, y, std::clamp(x + i, 0, n - 1));
        tmp[y * n + x] = s;
      }
    }
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp[std::clamp(y + i, 0, n - 1) * n + x];
        img.at(c, y, x) = s;
      }
    }
  }
}

double sample_outside(double lo_wide, double hi_wide, double lo_in, double hi_in, Rng& rng) {
  // Uniform over [lo_wide, hi_wide] minus the interior interval (lo_in, hi_in).
  const double left = std::max(0.0, lo_in - lo_wide);
  const double right = std::max(0.0, hi_wide - hi_in);
  if (left + right <= 0.0) return rng.uniform(lo_wide, hi_wide);
  const double u = rng.uniform(0.0, left + right);
  return u < left ? lo_wide + u : hi_in + (u - left);
}

}  // namespace

void DomainSpec::validate() const {
  for (double g : contrast_gain) {
    if (!(g > 0.0)) throw std::invalid_argument("domain spec: gains must be > 0");
  }
  if (blur_radius < 0.0 || noise_sigma < 0.0) throw std::invalid_argument("domain spec: blur and noise must be >= 0");
}

Image generate_content(int label, Rng& rng) {
  if (label != 0 && label != 1) throw std::invalid_argument("generate_content: label must be 0 or 1");
  const double cx = 15.5 + rng.uniform(-2.5, 2.5);
  const double cy = 15.5 + rng.uniform(-2.5, 2.5);
  const double major = rng.uniform(5.5, 7.5);
  const double minor = major * rng.uniform(0.7, 1.0);
  const double rot = rng.uniform(0.0, kPi);
  const double wobble = major * rng.uniform(0.0, 0.05);
  const double wobble_phase = rng.uniform(0.0, 2.0 * kPi);

  struct Bump {
    double angle, amplitude, width;
  };
  std::vector<Bump> bumps;
  if (label == 1) {
    const std::size_t count = 2 + rng.index(3);
    for (std::size_t i = 0; i < count; ++i) {
      bumps.push_back({rng.uniform(-kPi, kPi), major * rng.uniform(0.7, 1.0), rng.uniform(0.3, 0.45)});
    }
  }
  auto boundary = [&](double theta) {
    const double t = theta - rot;
    const double ct = std::cos(t), st = std::sin(t);
    double r = major * minor / std::sqrt(minor * minor * ct * ct + major * major * st * st);
    r += wobble * std::cos(3.0 * theta + wobble_phase);
    for (const auto& b : bumps) {
      const double u = wrap_angle(theta - b.angle) / b.width;
      if (std::abs(u) < 1.0) r += b.amplitude * 0.5 * (1.0 + std::cos(kPi * u));
    }
    return r;
  };

  std::array<double, 3> bg{0.93, 0.80, 0.89};
  std::array<double, 3> fg{0.30, 0.15, 0.45};
  for (std::size_t c = 0; c < 3; ++c) {
    bg[c] += rng.uniform(-0.03, 0.03);
    fg[c] += rng.uniform(-0.05, 0.05);
  }
  Image img;
  for (std::size_t y = 0; y < kImageSize; ++y) {
    for (std::size_t x = 0; x < kImageSize; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double rho = std::hypot(dx, dy);
      const double inside = 1.0 / (1.0 + std::exp(-(boundary(std::atan2(dy, dx)) - rho) / 0.5));
      const double grain = inside * rng.uniform(-0.04, 0.04);
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(c, y, x) = clamp01(bg[c] * (1.0 - inside) + fg[c] * inside + grain + rng.normal(0.0, 0.01));
      }
    }
  }
  return img;
}

Image apply_domain_style(const Image& image, const DomainSpec& spec, Rng& rng) {
  spec.validate();
  Image out = image;
  gaussian_blur(out, spec.blur_radius);
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    for (std::size_t y = 0; y < kImageSize; ++y) {
      for (std::size_t x = 0; x < kImageSize; ++x) {
        const double u = out.at(c, y, x);
        double v = u + (spec.contrast_gain[c] - 1.0) * (u - 0.5) + spec.color_offset[c];
        if (spec.noise_sigma > 0.0) v += rng.normal(0.0, spec.noise_sigma);
        out.at(c, y, x) = clamp01(v);
      }
    }
  }
  return out;
}

std::vector<DomainSpec> make_domains(const GeneratorConfig& config) {
  if (config.train_domains < 2 || config.heldout_domains < 1) {
    throw std::invalid_argument("make_domains: need at least 2 training and 1 held-out domain");
  }
  std::vector<DomainSpec> out;
  const StyleRange& tr = config.train_style;
  const StyleRange& ho = config.heldout_style;
  for (int d = 0; d < config.train_domains + config.heldout_domains; ++d) {
    Rng rng(derive_seed(config.seed, kDomainStream, static_cast<std::uint64_t>(d)));
    DomainSpec s;
    s.domain_id = d;
    const bool heldout = d >= config.train_domains;
    for (std::size_t c = 0; c < 3; ++c) {
      if (heldout) {
        s.color_offset[c] = sample_outside(-ho.offset_max, ho.offset_max, -tr.offset_max, tr.offset_max, rng);
        s.contrast_gain[c] = sample_outside(ho.gain_min, ho.gain_max, tr.gain_min, tr.gain_max, rng);
      } else {
        s.color_offset[c] = rng.uniform(-tr.offset_max, tr.offset_max);
        s.contrast_gain[c] = rng.uniform(tr.gain_min, tr.gain_max);
      }
    }
    const StyleRange& r = heldout ? ho : tr;
    s.blur_radius = rng.uniform(0.0, r.blur_max);
    s.noise_sigma = rng.uniform(0.0, r.noise_max);
    out.push_back(s);
  }
  return out;
}

int sample_label(const GeneratorConfig& config, int domain_id, std::size_t index) {
  Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(domain_id) + 1, index));
  return rng.bernoulli(1.0 / (1.0 + config.imbalance_ratio)) ? 1 : 0;
}

Image render_sample(const GeneratorConfig& config, const DomainSpec& domain, std::size_t index) {
  Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(domain.domain_id) + 1, index));
  const int label = rng.bernoulli(1.0 / (1.0 + config.imbalance_ratio)) ? 1 : 0;
  return apply_domain_style(generate_content(label, rng), domain, rng);
}

const std::vector<Sample>& DatasetSplit::get(SplitName name) const {
  switch (name) {
    case SplitName::Train: return train;
    case SplitName::Val: return val;
    case SplitName::Heldout: return heldout;
  }
  throw std::invalid_argument("unknown split");
}

DatasetSplit make_split(const GeneratorConfig& config) {
  if (config.train_domains + config.heldout_domains < 3 || config.train_domains < 2 || config.heldout_domains < 1) {
    throw std::invalid_argument("make_split: need >= 2 training domains and >= 1 held-out domain");
  }
  DatasetSplit split;
  const std::size_t n = config.samples_per_domain;
  const std::size_t n_train = n * 3 / 4;
  for (int d = 0; d < config.train_domains; ++d) {
    Rng rng(derive_seed(config.seed, kSplitStream, static_cast<std::uint64_t>(d)));
    const auto order = rng.permutation(n);
    for (std::size_t k = 0; k < n; ++k) {
      const Sample s{d, order[k], sample_label(config, d, order[k])};
      (k < n_train ? split.train : split.val).push_back(s);
    }
  }
  for (int d = config.train_domains; d < config.train_domains + config.heldout_domains; ++d) {
    for (std::size_t i = 0; i < n; ++i) split.heldout.push_back({d, i, sample_label(config, d, i)});
  }
  return split;
}

Dataset materialize(const GeneratorConfig& config, std::span<const Sample> samples) {
  const auto domains = make_domains(config);
  Dataset out;
  out.samples.assign(samples.begin(), samples.end());
  out.images.reserve(samples.size());
  for (const auto& s : samples) out.images.push_back(render_sample(config, domains.at(static_cast<std::size_t>(s.domain_id)), s.index));
  return out;
}

DomainBatch make_batch(std::span<const Image* const> images, std::span<const Sample* const> samples) {
  if (images.size() != samples.size()) throw std::invalid_argument("make_batch: images and samples differ in count");
  const std::size_t b = images.size();
  const std::size_t per = kImageChannels * kImageSize * kImageSize;
  std::vector<double> px(b * per);
  std::vector<double> labels(b);
  DomainBatch batch;
  for (std::size_t i = 0; i < b; ++i) {
    std::copy(images[i]->pixels.begin(), images[i]->pixels.end(), px.begin() + static_cast<long>(i * per));
    labels[i] = samples[i]->label;
    batch.domain_ids.push_back(samples[i]->domain_id);
    batch.label_ints.push_back(samples[i]->label);
  }
  batch.images = Tensor({b, kImageChannels, kImageSize, kImageSize}, std::move(px));
  batch.labels = Tensor({b}, std::move(labels));
  return batch;
}

std::vector<std::vector<std::size_t>> round_robin_batches(std::span<const Sample> samples, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw std::invalid_argument("round_robin_batches: batch size must be > 0");
  std::vector<int> ids;
  for (const auto& s : samples) {
    if (std::find(ids.begin(), ids.end(), s.domain_id) == ids.end()) ids.push_back(s.domain_id);
  }
  std::sort(ids.begin(), ids.end());
  std::vector<std::vector<std::size_t>> pools(ids.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto d = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), samples[i].domain_id) - ids.begin());
    pools[d].push_back(i);
  }
  for (auto& pool : pools) {
    const auto perm = rng.permutation(pool.size());
    std::vector<std::size_t> shuffled(pool.size());
    for (std::size_t k = 0; k < pool.size(); ++k) shuffled[k] = pool[perm[k]];
    pool = std::move(shuffled);
  }
  std::vector<std::size_t> order;
  order.reserve(samples.size());
  std::vector<std::size_t> cursor(pools.size(), 0);
  std::size_t d = pools.empty() ? 0 : rng.index(pools.size());
  while (order.size() < samples.size()) {
    if (cursor[d] < pools[d].size()) order.push_back(pools[d][cursor[d]++]);
    d = (d + 1) % pools.size();
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    if (end - i < 2) break;  // style mixing needs a partner
    batches.emplace_back(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(end));
  }
  return batches;
}

int shape_oracle(const Image& image) {
  const int n = static_cast<int>(kImageSize);
  // Work on min(v, 1 - v): it is unchanged by inverting any pixels above a
  // threshold >= 0.5, and still separates nucleus from background.
  Image folded;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) folded.pixels[i] = std::min(image.pixels[i], 1.0 - image.pixels[i]);
  const Image* src = &folded;
  // Background colour from the border median, foreground weight by colour distance.
  std::array<double, 3> bg{};
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> border;
    for (int i = 0; i < n; ++i) {
      border.push_back(folded.at(c, 0, i));
      border.push_back(folded.at(c, n - 1, i));
      border.push_back(folded.at(c, i, 0));
      border.push_back(folded.at(c, i, n - 1));
    }
    std::nth_element(border.begin(), border.begin() + static_cast<long>(border.size() / 2), border.end());
    bg[c] = border[border.size() / 2];
  }
  std::vector<double> dist(kImageSize * kImageSize);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double s = 0.0;
      for (std::size_t c = 0; c < 3; ++c) s += (src->at(c, y, x) - bg[c]) * (src->at(c, y, x) - bg[c]);
      dist[y * n + x] = std::sqrt(s);
    }
  }
  std::vector<double> sorted = dist;
  const std::size_t q = sorted.size() * 97 / 100;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(q), sorted.end());
  const double full = std::max(sorted[q], 1e-6);
  std::vector<double> weight(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) weight[i] = std::min(1.0, dist[i] / full);

  double mass = 0.0, mx = 0.0, my = 0.0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (weight[y * n + x] > 0.5) {
        mass += 1.0;
        mx += x;
        my += y;
      }
    }
  }
  if (mass == 0.0) return 0;
  mx /= mass;
  my /= mass;
  auto sample = [&](double x, double y) {
    if (x < 0.0 || y < 0.0 || x > n - 1 || y > n - 1) return 0.0;
    const int x0 = std::min(static_cast<int>(x), n - 2), y0 = std::min(static_cast<int>(y), n - 2);
    const double fx = x - x0, fy = y - y0;
    return (1 - fx) * (1 - fy) * weight[y0 * n + x0] + fx * (1 - fy) * weight[y0 * n + x0 + 1] +
           (1 - fx) * fy * weight[(y0 + 1) * n + x0] + fx * fy * weight[(y0 + 1) * n + x0 + 1];
  };
  constexpr int kRays = 120;
  constexpr double kStep = 0.2;
  std::vector<double> radius(kRays);
  for (int k = 0; k < kRays; ++k) {
    const double th = 2.0 * kPi * k / kRays;
    const double ux = std::cos(th), uy = std::sin(th);
    double prev = sample(mx, my), r = 0.0;
    for (double t = kStep; t < 22.0; t += kStep) {
      const double cur = sample(mx + t * ux, my + t * uy);
      if (cur < 0.5 && prev >= 0.5) {
        r = t - kStep + kStep * (prev - 0.5) / (prev - cur);
      }
      prev = cur;
    }
    radius[k] = r;  // outermost crossing
  }
  // Low-order Fourier fit absorbs the ellipse and the smooth wobble. Rays
  // far inside the fit (notches) are dropped and the fit is repeated, so
  // a dent does not push the fitted curve down and fake a bump elsewhere.
  constexpr int kTerms = 9;  // constant + 4 harmonics
  auto basis = [&](int k, int j) {
    const double th = 2.0 * kPi * k / kRays;
    if (j == 0) return 1.0;
    const int h = (j + 1) / 2;
    return (j % 2) ? std::cos(h * th) : std::sin(h * th);
  };
  double base = 0.0;
  for (double r : radius) base += r;
  base /= kRays;
  std::vector<double> w(kRays, 1.0), smooth(kRays, base);
  {
    // Deep notches (e.g. an erased bite) are missing data, not shape.
    std::vector<double> sorted_r = radius;
    std::nth_element(sorted_r.begin(), sorted_r.begin() + kRays / 2, sorted_r.end());
    const double median_r = sorted_r[kRays / 2];
    for (int k = 0; k < kRays; ++k) w[k] = radius[k] < 0.8 * median_r ? 0.0 : 1.0;
  }
  for (int pass = 0; pass < 3; ++pass) {
    double m[kTerms][kTerms + 1] = {};
    for (int k = 0; k < kRays; ++k) {
      if (w[k] == 0.0) continue;
      for (int i = 0; i < kTerms; ++i) {
        for (int j = 0; j < kTerms; ++j) m[i][j] += basis(k, i) * basis(k, j);
        m[i][kTerms] += basis(k, i) * radius[k];
      }
    }
    for (int c = 0; c < kTerms; ++c) {
      int piv = c;
      for (int r = c + 1; r < kTerms; ++r) {
        if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
      }
      std::swap(m[c], m[piv]);
      if (std::abs(m[c][c]) < 1e-9) return 0;
      for (int r = 0; r < kTerms; ++r) {
        if (r == c) continue;
        const double f = m[r][c] / m[c][c];
        for (int j = c; j <= kTerms; ++j) m[r][j] -= f * m[c][j];
      }
    }
    for (int k = 0; k < kRays; ++k) {
      smooth[k] = 0.0;
      for (int j = 0; j < kTerms; ++j) smooth[k] += m[j][kTerms] / m[j][j] * basis(k, j);
    }
    int kept = 0;
    for (int k = 0; k < kRays; ++k) kept += std::abs(radius[k] - smooth[k]) <= 0.06 * base;
    if (kept < kRays * 7 / 10) break;  // keep the current fit rather than extrapolate
    for (int k = 0; k < kRays; ++k) w[k] = std::abs(radius[k] - smooth[k]) > 0.06 * base ? 0.0 : 1.0;
  }
  double peak = 0.0;
  for (int k = 0; k < kRays; ++k) peak = std::max(peak, radius[k] - smooth[k]);
  return peak > 0.08 * base ? 1 : 0;
}

namespace {
constexpr char kCacheMagic[8] = {'M', 'X', 'D', 'A', 'T', 'A', '0', '1'};

template <typename T>
void write_le(std::ostream& os, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(std::istream& is) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int ch = is.get();
    if (ch == EOF) throw std::runtime_error("dataset cache: truncated");
    v |= static_cast<T>(static_cast<unsigned char>(ch)) << (8 * i);
  }
  return v;
}
}  // namespace

// Layout: magic, u64 seed, u64 count, u64 channels, u64 size, then count
// images of little-endian f64 pixels, then count x (i32 label), count x
// (i32 domain), count x (u64 index).
void save_dataset_cache(const std::string& path, const Dataset& data, std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("dataset cache: cannot write " + path);
  os.write(kCacheMagic, sizeof(kCacheMagic));
  write_le<std::uint64_t>(os, seed);
  write_le<std::uint64_t>(os, data.samples.size());
  write_le<std::uint64_t>(os, kImageChannels);
  write_le<std::uint64_t>(os, kImageSize);
  for (const auto& img : data.images) {
    for (double v : img.pixels) write_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  for (const auto& s : data.samples) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.label));
  for (const auto& s : data.samples) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.domain_id));
  for (const auto& s : data.samples) write_le<std::uint64_t>(os, s.index);
}

Dataset load_dataset_cache(const std::string& path, std::uint64_t expected_seed) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset cache: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kCacheMagic)) throw std::runtime_error("dataset cache: bad magic");
  if (read_le<std::uint64_t>(is) != expected_seed) throw std::runtime_error("dataset cache: seed mismatch");
  const auto count = read_le<std::uint64_t>(is);
  if (read_le<std::uint64_t>(is) != kImageChannels || read_le<std::uint64_t>(is) != kImageSize) {
    throw std::runtime_error("dataset cache: shape mismatch");
  }
  Dataset d;
  d.images.resize(count);
  d.samples.resize(count);
  for (auto& img : d.images) {
    for (double& v : img.pixels) v = std::bit_cast<double>(read_le<std::uint64_t>(is));
  }
  for (auto& s : d.samples) s.label = static_cast<int>(read_le<std::uint32_t>(is));
  for (auto& s : d.samples) s.domain_id = static_cast<int>(read_le<std::uint32_t>(is));
  for (auto& s : d.samples) s.index = read_le<std::uint64_t>(is);
  return d;
}

}  // namespace mixalign
