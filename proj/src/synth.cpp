#include "mdil/synth.hpp"

#include "mdil/error.hpp"
#include "mdil/ops.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

namespace mdil {

namespace fs = std::filesystem;

const std::vector<std::string>& shape_universe() {
  static const std::vector<std::string> names{"background", "rectangle", "disk",   "triangle",
                                              "ring",       "cross",     "stripe", "diamond"};
  return names;
}

const std::vector<std::string>& exclusive_shapes() {
  static const std::vector<std::string> names{"cross", "stripe", "diamond"};
  return names;
}

const char* split_name(Split s) { return s == Split::train ? "train" : "val"; }

namespace {

Rgb hsv(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const double c = v * s;
  const double x = c * (1 - std::fabs(std::fmod(h, 2.0) - 1));
  const double m = v - c;
  Rgb rgb{};
  switch (static_cast<int>(h)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

int universe_index(const std::string& name) {
  const auto& u = shape_universe();
  auto it = std::find(u.begin(), u.end(), name);
  return it == u.end() ? -1 : static_cast<int>(it - u.begin());
}

// Coordinates of pixel center (x, y) in the shape's rotated frame.
void local_frame(const Placement& p, double x, double y, double& u, double& v) {
  const double dx = x - p.cx, dy = y - p.cy;
  const double c = std::cos(p.angle), s = std::sin(p.angle);
  u = c * dx + s * dy;
  v = -s * dx + c * dy;
}

bool inside(const Placement& p, double u, double v) {
  const double r = p.radius;
  const double d = std::hypot(u, v);
  const std::string& k = p.shape;
  if (k == "rectangle") return std::fabs(u) <= r && std::fabs(v) <= 0.6 * r;
  if (k == "disk") return d <= r;
  if (k == "ring") return d <= r && d >= 0.55 * r;
  if (k == "cross") {
    return (std::fabs(u) <= r && std::fabs(v) <= 0.3 * r) ||
           (std::fabs(v) <= r && std::fabs(u) <= 0.3 * r);
  }
  if (k == "stripe") return std::fabs(u) <= r && std::fabs(v) <= r;
  if (k == "diamond") return std::fabs(u) + std::fabs(v) <= r;
  if (k == "triangle") {
    // Equilateral, circumradius r, one vertex along +v.
    const double a = std::numbers::pi / 2.0;
    double px[3], py[3];
    for (int i = 0; i < 3; ++i) {
      px[i] = r * std::cos(a + i * 2.0 * std::numbers::pi / 3.0);
      py[i] = r * std::sin(a + i * 2.0 * std::numbers::pi / 3.0);
    }
    auto edge = [&](int i, int j) { return (px[j] - px[i]) * (v - py[i]) - (py[j] - py[i]) * (u - px[i]); };
    const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
    return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
  }
  throw Error("unknown shape '" + k + "'");
}

}  // namespace

void DomainGenSpec::validate() const {
  if (height < 8 || width < 8) throw Error("domain '" + name + "': image must be at least 8x8");
  if (train_count < 0 || val_count < 0) throw Error("domain '" + name + "': negative sample count");
  if (classes.size() < 2) throw Error("domain '" + name + "': need background plus at least one shape");
  if (classes.name(0) != "background") throw Error("domain '" + name + "': first class must be 'background'");
  for (const auto& c : classes.names()) {
    if (universe_index(c) < 0) throw Error("domain '" + name + "': unknown class '" + c + "'");
  }
  if (palette.size() != classes.size()) throw Error("domain '" + name + "': palette needs one color per class");
  if (shapes_min < 1 || shapes_max < shapes_min) throw Error("domain '" + name + "': invalid shape density");
  if (noise_sigma < 0 || color_jitter < 0 || texture_amp < 0) {
    throw Error("domain '" + name + "': negative noise/jitter/texture");
  }
  if (!(radius_min > 0) || radius_max < radius_min || radius_max > 0.5) {
    throw Error("domain '" + name + "': shape radius range must satisfy 0 < min <= max <= 0.5");
  }
  if (min_visible <= 0 || min_visible > 1) throw Error("domain '" + name + "': min_visible must be in (0, 1]");
}

std::vector<Rgb> default_palette(const LabelSpace& classes, double hue_shift) {
  std::vector<Rgb> out;
  for (const auto& c : classes.names()) {
    const int u = universe_index(c);
    if (u < 0) throw Error("default_palette: unknown class '" + c + "'");
    if (u == 0) {
      out.push_back(hsv(hue_shift + 200.0, 0.30, 0.45));
    } else {
      out.push_back(hsv(hue_shift + (u - 1) * 360.0 / 7.0, 0.80, 0.90));
    }
  }
  return out;
}

std::vector<DomainGenSpec> default_domain_specs(std::uint64_t seed_offset) {
  const std::vector<std::string> shared{"background", "rectangle", "disk", "triangle", "ring"};
  struct Knobs {
    const char* name;
    std::uint64_t seed;
    const char* exclusive;
    double hue, noise, freq, amp;
  };
  const Knobs knobs[] = {
      {"A", 11, "cross", 0.0, 0.03, 0.12, 0.08},
      {"B", 22, "stripe", 360.0 / 7.0, 0.05, 0.20, 0.10},
      {"C", 33, "diamond", 720.0 / 7.0, 0.04, 0.07, 0.12},
  };
  std::vector<DomainGenSpec> out;
  for (const auto& k : knobs) {
    DomainGenSpec s;
    s.name = k.name;
    s.seed = k.seed + seed_offset;
    auto names = shared;
    names.push_back(k.exclusive);
    s.classes = LabelSpace(names);
    s.palette = default_palette(s.classes, k.hue);
    s.noise_sigma = k.noise;
    s.texture_freq = k.freq;
    s.texture_amp = k.amp;
    out.push_back(std::move(s));
  }
  return out;
}

void validate_domain_set(const std::vector<DomainGenSpec>& specs) {
  std::set<std::string> names;
  for (const auto& s : specs) {
    if (!names.insert(s.name).second) throw Error("duplicate domain '" + s.name + "'");
  }
  for (const auto& ex : exclusive_shapes()) {
    int users = 0;
    for (const auto& s : specs) users += s.classes.contains(ex) ? 1 : 0;
    if (users > 1) throw Error("exclusive class '" + ex + "' used by more than one domain");
  }
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::int64_t b = static_cast<std::int64_t>(indices.size());
  const std::size_t plane = static_cast<std::size_t>(ds.height) * static_cast<std::size_t>(ds.width);
  std::vector<float> img;
  img.reserve(static_cast<std::size_t>(b) * 3 * plane);
  Batch out;
  out.labels.reserve(static_cast<std::size_t>(b) * plane);
  for (auto i : indices) {
    const auto& s = ds.samples.at(i);
    img.insert(img.end(), s.image.begin(), s.image.end());
    out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
  }
  out.images = Tensor::from({b, 3, ds.height, ds.width}, std::move(img));
  return out;
}

std::vector<std::uint8_t> shape_mask(const Placement& p, int height, int width) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(height * width), 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double u, v;
      local_frame(p, x + 0.5, y + 0.5, u, v);
      mask[static_cast<std::size_t>(y * width + x)] = inside(p, u, v) ? 1 : 0;
    }
  }
  return mask;
}

Sample paint_scene(const DomainGenSpec& spec, const Backdrop& backdrop,
                   const std::vector<Placement>& shapes, Rng& rng) {
  const int h = spec.height, w = spec.width;
  const std::size_t plane = static_cast<std::size_t>(h * w);
  Sample s;
  s.image.assign(3 * plane, 0.0f);
  s.labels.assign(plane, 0);
  std::vector<double> img(3 * plane);

  const Rgb& bg = spec.palette[0];
  const double ca = std::cos(backdrop.angle), sa = std::sin(backdrop.angle);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double t = spec.texture_amp *
                       std::sin(2.0 * std::numbers::pi * spec.texture_freq * (x * ca + y * sa) + backdrop.phase);
      for (int c = 0; c < 3; ++c) img[c * plane + static_cast<std::size_t>(y * w + x)] = bg[c] + t;
    }
  }

  for (const auto& p : shapes) {
    const auto id = spec.classes.id_of(p.shape);
    if (!id || *id == 0) throw Error("shape '" + p.shape + "' is not a foreground class of domain '" + spec.name + "'");
    Rgb color = spec.palette[*id];
    for (auto& c : color) c *= 1.0 + spec.color_jitter * rng.normal();
    const double period = std::max(2.0, 0.5 * p.radius);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double u, v;
        local_frame(p, x + 0.5, y + 0.5, u, v);
        if (!inside(p, u, v)) continue;
        const auto px = static_cast<std::size_t>(y * w + x);
        s.labels[px] = *id;
        const double shade =
            p.shape == "stripe" && std::sin(2.0 * std::numbers::pi * u / period) < 0 ? 0.55 : 1.0;
        for (int c = 0; c < 3; ++c) img[c * plane + px] = color[c] * shade;
      }
    }
  }

  for (std::size_t i = 0; i < img.size(); ++i) {
    double v = img[i];
    if (spec.noise_sigma > 0) v += spec.noise_sigma * rng.normal();
    v = std::clamp(v, 0.0, 1.0);
    s.image[i] = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
  }
  return s;
}

Sample render_sample(const DomainGenSpec& spec, Split split, std::size_t index) {
  spec.validate();
  if (index >= static_cast<std::size_t>(spec.count(split))) {
    throw Error("render_sample: index " + std::to_string(index) + " out of range for " +
                split_name(split) + " split of '" + spec.name + "'");
  }
  const std::uint64_t stream = (split == Split::val ? (1ULL << 40) : 0ULL) + index;
  Rng rng(spec.seed, stream);

  const int h = spec.height, w = spec.width;
  const double extent = std::min(h, w);
  Backdrop backdrop{rng.uniform(0.0, std::numbers::pi), rng.uniform(0.0, 2.0 * std::numbers::pi)};
  const auto k = rng.uniform_int(spec.shapes_min, spec.shapes_max);
  const auto fg = static_cast<std::int64_t>(spec.classes.size()) - 1;

  std::vector<Placement> placed;
  std::vector<std::vector<std::uint8_t>> masks;
  std::vector<std::size_t> areas;
  constexpr int kAttempts = 200;
  for (std::int64_t i = 0; i < k; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kAttempts && !ok; ++attempt) {
      Placement p;
      p.shape = spec.classes.name(static_cast<std::size_t>(rng.uniform_int(1, fg)));
      p.radius = rng.uniform(spec.radius_min, spec.radius_max) * extent;
      p.cx = rng.uniform(0.5 * p.radius, w - 0.5 * p.radius);
      p.cy = rng.uniform(0.5 * p.radius, h - 0.5 * p.radius);
      p.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      auto mask = shape_mask(p, h, w);
      const auto area = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
      if (area < 6) continue;

      // Every shape, old and new, must keep enough visible pixels, and some
      // background must remain.
      std::vector<int> owner(mask.size(), -1);
      for (std::size_t j = 0; j < masks.size(); ++j) {
        for (std::size_t px = 0; px < mask.size(); ++px) {
          if (masks[j][px]) owner[px] = static_cast<int>(j);
        }
      }
      for (std::size_t px = 0; px < mask.size(); ++px) {
        if (mask[px]) owner[px] = static_cast<int>(masks.size());
      }
      std::vector<std::size_t> visible(masks.size() + 1, 0);
      std::size_t background = 0;
      for (int o : owner) {
        if (o < 0) {
          ++background;
        } else {
          ++visible[static_cast<std::size_t>(o)];
        }
      }
      ok = background > 0;
      for (std::size_t j = 0; j < masks.size() && ok; ++j) {
        ok = static_cast<double>(visible[j]) >= spec.min_visible * static_cast<double>(areas[j]);
      }
      if (ok) {
        placed.push_back(p);
        masks.push_back(std::move(mask));
        areas.push_back(area);
      }
    }
    if (!ok) {
      throw Error("domain '" + spec.name + "': cannot place " + std::to_string(k) +
                  " shapes without hiding one (density too high)");
    }
  }
  return paint_scene(spec, backdrop, placed, rng);
}

Dataset generate_domain(const DomainGenSpec& spec, Split split) {
  spec.validate();
  Dataset ds;
  ds.domain = spec.name;
  ds.split = split;
  ds.height = spec.height;
  ds.width = spec.width;
  ds.labels = spec.classes;
  const auto n = static_cast<std::size_t>(spec.count(split));
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ds.samples.push_back(render_sample(spec, split, i));
  return ds;
}

// ---------------------------------------------------------------------------
// PNM I/O

namespace {

// Netpbm header token: skips whitespace and '#' comments.
int read_header_int(std::istream& in, const fs::path& path) {
  int c = in.peek();
  while (c != EOF) {
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      break;
    }
    c = in.peek();
  }
  if (c == EOF || !std::isdigit(c)) throw DataError("malformed PNM header in '" + path.string() + "'");
  int v = 0;
  while (std::isdigit(in.peek())) {
    v = v * 10 + (in.get() - '0');
    if (v > (1 << 20)) throw DataError("PNM header value too large in '" + path.string() + "'");
  }
  return v;
}

std::string sample_name(const char* prefix, std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu.%s", prefix, i, ext);
  return buf;
}

}  // namespace

PnmImage read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  PnmImage img;
  if (magic[0] == 'P' && magic[1] == '6') {
    img.channels = 3;
  } else if (magic[0] == 'P' && magic[1] == '5') {
    img.channels = 1;
  } else {
    throw DataError("'" + path.string() + "' is not a binary P5/P6 file");
  }
  img.width = read_header_int(in, path);
  img.height = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (img.width <= 0 || img.height <= 0) throw DataError("non-positive PNM extent in '" + path.string() + "'");
  if (maxval != 255) {
    throw DataError("'" + path.string() + "' has maxval " + std::to_string(maxval) + ", only 255 is supported");
  }
  if (!std::isspace(in.get())) throw DataError("malformed PNM header in '" + path.string() + "'");
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw DataError("'" + path.string() + "' is truncated");
  }
  return img;
}

void write_pnm(const fs::path& path, const PnmImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

fs::path domain_dir(const fs::path& root, const std::string& name) { return root / ("domain_" + name); }

void write_dataset(const Dataset& ds, const fs::path& root, const std::string& domain_name) {
  const fs::path dir = domain_dir(root, domain_name);
  const fs::path split_dir = dir / split_name(ds.split);
  std::error_code ec;
  fs::create_directories(split_dir, ec);
  if (ec) throw DataError("cannot create '" + split_dir.string() + "': " + ec.message());

  {
    std::ofstream lt(dir / "labels.txt", std::ios::trunc);
    if (!lt) throw DataError("cannot write labels.txt in '" + dir.string() + "'");
    for (const auto& n : ds.labels.names()) lt << n << '\n';
  }

  // Drop stale samples from an earlier, larger run so re-runs are exact.
  for (const auto& entry : fs::directory_iterator(split_dir)) {
    const auto fn = entry.path().filename().string();
    if (fn.rfind("img_", 0) == 0 || fn.rfind("lbl_", 0) == 0) fs::remove(entry.path());
  }

  const std::size_t plane = static_cast<std::size_t>(ds.height) * ds.width;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    PnmImage img{ds.width, ds.height, 3, std::vector<std::uint8_t>(3 * plane)};
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        img.pixels[3 * p + c] = static_cast<std::uint8_t>(std::lround(std::clamp(s.image[c * plane + p], 0.0f, 1.0f) * 255.0f));
      }
    }
    write_pnm(split_dir / sample_name("img", i, "ppm"), img);
    write_pnm(split_dir / sample_name("lbl", i, "pgm"), PnmImage{ds.width, ds.height, 1, s.labels});
  }
}

LabelSpace load_label_space(const fs::path& root, const std::string& domain_name) {
  const fs::path file = domain_dir(root, domain_name) / "labels.txt";
  std::ifstream in(file);
  if (!in) throw DataError("missing '" + file.string() + "'");
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    names.push_back(line);
  }
  try {
    return LabelSpace(std::move(names));
  } catch (const Error& e) {
    throw DataError("'" + file.string() + "': " + e.what());
  }
}

Dataset load_dataset(const fs::path& root, const std::string& domain_name, Split split) {
  Dataset ds;
  ds.domain = domain_name;
  ds.split = split;
  ds.labels = load_label_space(root, domain_name);
  const fs::path split_dir = domain_dir(root, domain_name) / split_name(split);
  if (!fs::is_directory(split_dir)) throw DataError("missing dataset split '" + split_dir.string() + "'");
  const auto classes = ds.labels.size();
  for (std::size_t i = 0;; ++i) {
    const fs::path ip = split_dir / sample_name("img", i, "ppm");
    if (!fs::exists(ip)) break;
    const fs::path lp = split_dir / sample_name("lbl", i, "pgm");
    const PnmImage img = read_pnm(ip);
    if (!fs::exists(lp)) throw DataError("missing label file '" + lp.string() + "'");
    const PnmImage lbl = read_pnm(lp);
    if (img.channels != 3) throw DataError("'" + ip.string() + "' must be P6");
    if (lbl.channels != 1) throw DataError("'" + lp.string() + "' must be P5");
    if (img.width != lbl.width || img.height != lbl.height) {
      throw DataError("image/label size mismatch for sample " + std::to_string(i) + " in '" + split_dir.string() + "'");
    }
    if (i == 0) {
      ds.height = img.height;
      ds.width = img.width;
    } else if (img.height != ds.height || img.width != ds.width) {
      throw DataError("sample " + std::to_string(i) + " in '" + split_dir.string() + "' has a different size");
    }
    for (auto v : lbl.pixels) {
      if (v != kIgnoreLabel && v >= classes) {
        throw DataError("'" + lp.string() + "' has label " + std::to_string(v) + " outside labels.txt");
      }
    }
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    Sample s;
    s.image.resize(3 * plane);
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) s.image[c * plane + p] = static_cast<float>(img.pixels[3 * p + c]) / 255.0f;
    }
    s.labels = lbl.pixels;
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw DataError("no samples in '" + split_dir.string() + "'");
  return ds;
}

}  // namespace mdil
