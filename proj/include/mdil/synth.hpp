#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mdil/labels.hpp"
#include "mdil/rng.hpp"
#include "mdil/tensor.hpp"

namespace mdil {

using Rgb = std::array<double, 3>;

/// Class universe of the generator. "background" is always id 0 of a
/// domain; the last three shapes are meant to be domain-exclusive.
const std::vector<std::string>& shape_universe();
const std::vector<std::string>& exclusive_shapes();

enum class Split { train, val };
const char* split_name(Split s);

struct DomainGenSpec {
  std::string name;
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int train_count = 200;
  int val_count = 50;
  LabelSpace classes;           // background first, all from shape_universe()
  std::vector<Rgb> palette;     // base color per class of `classes`
  double color_jitter = 0.06;   // per-shape multiplicative color jitter (stddev)
  double texture_freq = 0.12;   // background sinusoid, cycles per pixel
  double texture_amp = 0.08;
  double noise_sigma = 0.03;    // i.i.d. Gaussian pixel noise
  int shapes_min = 2;           // shapes per image
  int shapes_max = 3;
  double min_visible = 0.35;    // fraction of each shape that must stay visible
  double radius_min = 0.18;     // shape radius range, fraction of the image extent
  double radius_max = 0.32;

  void validate() const;
  int count(Split s) const { return s == Split::train ? train_count : val_count; }
};

/// Palette whose class hues are rotated by `hue_shift` degrees; the
/// background tone rotates with it.
std::vector<Rgb> default_palette(const LabelSpace& classes, double hue_shift);

/// The three default domains A, B, C: background plus four shared shapes and
/// one exclusive shape each, with distinct palettes, textures and noise.
/// `seed_offset` is added to every domain seed.
std::vector<DomainGenSpec> default_domain_specs(std::uint64_t seed_offset = 0);

/// Each domain may use an exclusive shape that no other domain uses.
void validate_domain_set(const std::vector<DomainGenSpec>& specs);

struct Sample {
  std::vector<float> image;          // [3, H, W], values k/255
  std::vector<std::uint8_t> labels;  // [H, W]
};

struct Dataset {
  std::string domain;
  Split split = Split::train;
  int height = 0;
  int width = 0;
  LabelSpace labels;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
};

struct Batch {
  Tensor images;                     // [B, 3, H, W]
  std::vector<std::uint8_t> labels;  // [B, H, W]
};

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices);

/// Geometry of one drawn shape; angles in radians, extents in pixels.
struct Placement {
  std::string shape;
  double cx = 0;
  double cy = 0;
  double radius = 0;
  double angle = 0;
};

/// Pixel-center inside test for a shape on an h x w grid (row-major).
std::vector<std::uint8_t> shape_mask(const Placement& p, int height, int width);

struct Backdrop {
  double angle = 0;  // texture orientation
  double phase = 0;
};

/// Paints a scene from explicit placements, drawn in order (later shapes on
/// top). Color jitter and noise are drawn from `rng`.
Sample paint_scene(const DomainGenSpec& spec, const Backdrop& backdrop,
                   const std::vector<Placement>& shapes, Rng& rng);

/// Sample `index` of a split. Depends only on (seed, split, index).
Sample render_sample(const DomainGenSpec& spec, Split split, std::size_t index);
Dataset generate_domain(const DomainGenSpec& spec, Split split = Split::train);

// On-disk layout:
//   root/domain_<name>/labels.txt            one class name per line
//   root/domain_<name>/<split>/img_%05d.ppm  binary P6, maxval 255
//   root/domain_<name>/<split>/lbl_%05d.pgm  binary P5, maxval 255
std::filesystem::path domain_dir(const std::filesystem::path& root, const std::string& name);
void write_dataset(const Dataset& ds, const std::filesystem::path& root, const std::string& domain_name);
Dataset load_dataset(const std::filesystem::path& root, const std::string& domain_name, Split split);
LabelSpace load_label_space(const std::filesystem::path& root, const std::string& domain_name);

struct PnmImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 3 for P6, 1 for P5
  std::vector<std::uint8_t> pixels;
};

/// Parses a binary P5/P6 file; only maxval 255 is accepted.
PnmImage read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const PnmImage& img);

}  // namespace mdil
