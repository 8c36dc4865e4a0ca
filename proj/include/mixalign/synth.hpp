#pragma once

// Synthetic multi-domain patches. Class is carried by nucleus shape only
// (smooth ellipse vs. ellipse with narrow protrusions); each domain applies a
// color/contrast/blur/noise signature that is pure nuisance. Labels are drawn
// independently of the domain.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mixalign/random.hpp"
#include "mixalign/tensor.hpp"

namespace mixalign {

inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageSize = 32;

// Channel-major [3,32,32] pixels in [0,1].
struct Image {
  std::vector<double> pixels = std::vector<double>(kImageChannels * kImageSize * kImageSize, 0.0);

  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * kImageSize + y) * kImageSize + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * kImageSize + y) * kImageSize + x]; }
};

struct DomainSpec {
  int domain_id = 0;
  std::array<double, 3> color_offset{0.0, 0.0, 0.0};
  std::array<double, 3> contrast_gain{1.0, 1.0, 1.0};
  double blur_radius = 0.0;  // Gaussian sigma in pixels, 0 = none
  double noise_sigma = 0.0;

  void validate() const;
  static DomainSpec identity(int id = 0) { DomainSpec s; s.domain_id = id; return s; }
};

// Sampling ranges for domain signatures.
struct StyleRange {
  double offset_max = 0.12;
  double gain_min = 0.75;
  double gain_max = 1.3;
  double blur_max = 0.8;
  double noise_max = 0.03;
};

struct GeneratorConfig {
  int train_domains = 5;
  int heldout_domains = 2;
  std::size_t samples_per_domain = 1000;
  double imbalance_ratio = 4.0;  // negatives per positive
  StyleRange train_style{};
  StyleRange heldout_style{0.22, 0.45, 1.8, 1.1, 0.06};
  std::uint64_t seed = 2025;
};

Image generate_content(int label, Rng& rng);

// out_c = clamp(gain_c * (blur(x)_c - 0.5) + 0.5 + offset_c + noise); rng drives the noise.
Image apply_domain_style(const Image& image, const DomainSpec& spec, Rng& rng);

// Domain ids 0..train-1 are training domains, train..train+heldout-1 held out.
std::vector<DomainSpec> make_domains(const GeneratorConfig& config);

struct Sample {
  int domain_id = 0;
  std::size_t index = 0;  // position within the domain's stream
  int label = 0;
};

// Label and pixels are a pure function of (seed, domain, index).
int sample_label(const GeneratorConfig& config, int domain_id, std::size_t index);
Image render_sample(const GeneratorConfig& config, const DomainSpec& domain, std::size_t index);

enum class SplitName { Train, Val, Heldout };

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> heldout;

  const std::vector<Sample>& get(SplitName name) const;
};

// 75/25 train/val per training domain, held-out domains kept apart.
DatasetSplit make_split(const GeneratorConfig& config);

// Materialized images for a list of samples.
struct Dataset {
  std::vector<Sample> samples;
  std::vector<Image> images;
};

Dataset materialize(const GeneratorConfig& config, std::span<const Sample> samples);

struct DomainBatch {
  Tensor images;  // [B,3,32,32]
  Tensor labels;  // [B] in {0,1}
  std::vector<int> domain_ids;
  std::vector<int> label_ints;
};

DomainBatch make_batch(std::span<const Image* const> images, std::span<const Sample* const> samples);

// Batches whose domains rotate round-robin: each batch draws from the
// per-domain shuffled pools in turn so most batches span several domains.
std::vector<std::vector<std::size_t>> round_robin_batches(std::span<const Sample> samples, std::size_t batch_size, Rng& rng);

// Radial-profile protrusion detector used as a label oracle on rendered images.
int shape_oracle(const Image& image);

// Binary little-endian cache of a materialized dataset; see synth.cpp for layout.
void save_dataset_cache(const std::string& path, const Dataset& data, std::uint64_t seed);
Dataset load_dataset_cache(const std::string& path, std::uint64_t expected_seed);

}  // namespace mixalign
