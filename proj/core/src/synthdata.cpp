// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "sgpseg/rng.hpp"
#include "sgpseg/volume_io.hpp"

namespace fs = std::filesystem;

namespace sgpseg {

namespace {

constexpr uint64_t kTagSample = 0x5341u;   // per-sample shape/noise stream
constexpr uint64_t kTagPrompt = 0x5052u;   // per-sample prompt stream
constexpr uint64_t kTagSplit = 0x53504cu;  // train/test shuffle

constexpr double kPi = 3.141592653589793;

std::string sample_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%04d", index);
  return buf;
}

}  // namespace

std::string to_string(ShapeFamily f) {
  return f == ShapeFamily::ellipsoid ? "ellipsoid" : "lobulated";
}

ShapeFamily parse_shape_family(const std::string& s) {
  if (s == "ellipsoid") return ShapeFamily::ellipsoid;
  if (s == "lobulated") return ShapeFamily::lobulated;
  throw ValidationError("unknown shape family '" + s + "'");
}

void GenSpec::validate() const {
  for (int e : volume_shape) SGPSEG_CHECK(e >= 4, "genspec: volume extent too small: " << e);
  SGPSEG_CHECK(fraction_lo > 0.0 && fraction_hi <= 0.2 && fraction_lo <= fraction_hi,
               "genspec: lesion fraction range (" << fraction_lo << ", " << fraction_hi
                                                  << ") must satisfy 0 < lo <= hi <= 0.2");
  SGPSEG_CHECK(noise_sigma > 0.0, "genspec: noise_sigma must be > 0");
  SGPSEG_CHECK(count >= 1, "genspec: count must be >= 1");
}

Tensor rasterize_ellipsoid(const std::array<int, 3>& shape,
                           const std::array<double, 3>& center,
                           const std::array<double, 3>& radii) {
  for (double r : radii) SGPSEG_CHECK(r > 0.0, "rasterize_ellipsoid: radius must be > 0");
  Tensor mask({shape[0], shape[1], shape[2]});
  for (int h = 0; h < shape[0]; ++h) {
    double dh = (h - center[0]) / radii[0];
    for (int w = 0; w < shape[1]; ++w) {
      double dw = (w - center[1]) / radii[1];
      for (int d = 0; d < shape[2]; ++d) {
        double dd = (d - center[2]) / radii[2];
        if (dh * dh + dw * dw + dd * dd <= 1.0) mask.at3(h, w, d) = 1.0;
      }
    }
  }
  return mask;
}

namespace {

struct Lobe {
  std::array<double, 3> offset{};  // relative to the lesion center
  std::array<double, 3> radii{};
};

Tensor rasterize_lobes(const std::array<int, 3>& shape, const std::array<double, 3>& center,
                       const std::vector<Lobe>& lobes, double scale) {
  Tensor mask({shape[0], shape[1], shape[2]});
  for (const Lobe& lobe : lobes) {
    std::array<double, 3> c = {center[0] + scale * lobe.offset[0],
                               center[1] + scale * lobe.offset[1],
                               center[2] + scale * lobe.offset[2]};
    std::array<double, 3> r = {std::max(0.5, scale * lobe.radii[0]),
                               std::max(0.5, scale * lobe.radii[1]),
                               std::max(0.5, scale * lobe.radii[2])};
    Tensor one = rasterize_ellipsoid(shape, c, r);
    for (int64_t i = 0; i < mask.numel(); ++i) {
      if (one[i] != 0.0) mask[i] = 1.0;
    }
  }
  return mask;
}

// Builds a lesion mask whose realized foreground fraction lies inside the
// spec's range, rescaling radii up to 20 times before giving up.
Tensor make_lesion_mask(const GenSpec& spec, Rng& rng) {
  const auto& vs = spec.volume_shape;
  const double voxels = static_cast<double>(vs[0]) * vs[1] * vs[2];
  const double span = spec.fraction_hi - spec.fraction_lo;
  const double target_frac = rng.uniform_in(spec.fraction_lo + 0.1 * span,
                                            spec.fraction_hi - 0.1 * span);
  const double target_count = target_frac * voxels;
  double r0 = std::cbrt(3.0 * target_count / (4.0 * kPi));

  // Mild axis anisotropy with unit volume product.
  double a1 = rng.uniform_in(-0.28, 0.28);
  double a2 = rng.uniform_in(-0.28, 0.28);
  std::array<double, 3> aniso = {std::exp(a1), std::exp(a2), std::exp(-a1 - a2)};

  std::vector<Lobe> lobes;
  if (spec.shape_family == ShapeFamily::ellipsoid) {
    lobes.push_back(Lobe{{0, 0, 0}, {r0 * aniso[0], r0 * aniso[1], r0 * aniso[2]}});
  } else {
    // Main body plus 1..4 overlapping lobes with perturbed radii.
    Lobe main{{0, 0, 0},
              {0.85 * r0 * aniso[0], 0.85 * r0 * aniso[1], 0.85 * r0 * aniso[2]}};
    lobes.push_back(main);
    int extra = static_cast<int>(rng.uniform_int(1, 4));
    for (int l = 0; l < extra; ++l) {
      // Random direction via normalized gaussian triple.
      std::array<double, 3> dir = {rng.normal(), rng.normal(), rng.normal()};
      double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
      if (norm < 1e-9) {
        dir = {1.0, 0.0, 0.0};
        norm = 1.0;
      }
      double dist = rng.uniform_in(0.5, 0.9) * r0;
      double base = rng.uniform_in(0.45, 0.75);
      Lobe lobe;
      for (int axis = 0; axis < 3; ++axis) {
        lobe.offset[static_cast<size_t>(axis)] = dir[static_cast<size_t>(axis)] / norm * dist;
        lobe.radii[static_cast<size_t>(axis)] =
            main.radii[static_cast<size_t>(axis)] * base * rng.uniform_in(0.9, 1.1);
      }
      lobes.push_back(lobe);
    }
  }

  // Center with a margin that keeps the initial shape inside the volume.
  double reach = 0.0;
  for (const Lobe& lobe : lobes) {
    for (int axis = 0; axis < 3; ++axis) {
      reach = std::max(reach, std::fabs(lobe.offset[static_cast<size_t>(axis)]) +
                                  lobe.radii[static_cast<size_t>(axis)]);
    }
  }
  std::array<double, 3> center{};
  for (int axis = 0; axis < 3; ++axis) {
    double extent = vs[static_cast<size_t>(axis)];
    double margin = std::min(reach + 1.5, extent / 2.0 - 0.5);
    center[static_cast<size_t>(axis)] = rng.uniform_in(margin, extent - margin);
  }

  double scale = 1.0;
  for (int attempt = 0; attempt < 20; ++attempt) {
    Tensor mask = rasterize_lobes(vs, center, lobes, scale);
    double frac = tensor_sum(mask) / voxels;
    if (frac >= spec.fraction_lo && frac <= spec.fraction_hi) return mask;
    if (frac <= 0.0) {
      scale *= 1.3;
    } else {
      scale *= std::cbrt(target_frac / frac);
    }
  }
  throw ValidationError("lesion fraction range (" + std::to_string(spec.fraction_lo) +
                        ", " + std::to_string(spec.fraction_hi) +
                        ") unreachable for this shape after 20 attempts");
}

Tensor box_blur3(const Tensor& t) {
  const int H = t.extent(0);
  const int W = t.extent(1);
  const int D = t.extent(2);
  Tensor out({H, W, D});
  for (int h = 0; h < H; ++h) {
    for (int w = 0; w < W; ++w) {
      for (int d = 0; d < D; ++d) {
        double s = 0.0;
        int n = 0;
        for (int dh = -1; dh <= 1; ++dh) {
          int hh = h + dh;
          if (hh < 0 || hh >= H) continue;
          for (int dw = -1; dw <= 1; ++dw) {
            int ww = w + dw;
            if (ww < 0 || ww >= W) continue;
            for (int dd = -1; dd <= 1; ++dd) {
              int ddd = d + dd;
              if (ddd < 0 || ddd >= D) continue;
              s += t.at3(hh, ww, ddd);
              ++n;
            }
          }
        }
        out.at3(h, w, d) = s / n;
      }
    }
  }
  return out;
}

// z-score over nonzero voxels, applied to the whole volume. A deviation
// under the 1e-8 floor zeroes the output instead of exploding it.
Tensor zscore_nonzero(const Tensor& image) {
  double sum = 0.0;
  double sum2 = 0.0;
  int64_t n = 0;
  for (int64_t i = 0; i < image.numel(); ++i) {
    if (image[i] != 0.0) {
      sum += image[i];
      sum2 += image[i] * image[i];
      ++n;
    }
  }
  Tensor out(image.shape());
  if (n == 0) return out;
  double mean = sum / n;
  double var = std::max(0.0, sum2 / n - mean * mean);
  double sigma = std::sqrt(var);
  if (sigma < 1e-8) return out;  // constant image -> all zeros
  for (int64_t i = 0; i < image.numel(); ++i) out[i] = (image[i] - mean) / sigma;
  return out;
}

nlohmann::json spec_to_json(const GenSpec& spec) {
  nlohmann::json j;
  j["volume_shape"] = spec.volume_shape;
  j["lesion_fraction_range"] = {spec.fraction_lo, spec.fraction_hi};
  j["shape_family"] = to_string(spec.shape_family);
  j["intensity_contrast"] = spec.intensity_contrast;
  j["noise_sigma"] = spec.noise_sigma;
  j["count"] = spec.count;
  j["seed"] = spec.seed;
  return j;
}

GenSpec spec_from_json(const nlohmann::json& j) {
  GenSpec spec;
  auto shape = j.at("volume_shape").get<std::vector<int>>();
  SGPSEG_CHECK(shape.size() == 3, "generator_spec: volume_shape must have 3 extents");
  spec.volume_shape = {shape[0], shape[1], shape[2]};
  auto range = j.at("lesion_fraction_range").get<std::vector<double>>();
  SGPSEG_CHECK(range.size() == 2, "generator_spec: lesion_fraction_range must be [lo, hi]");
  spec.fraction_lo = range[0];
  spec.fraction_hi = range[1];
  spec.shape_family = parse_shape_family(j.at("shape_family").get<std::string>());
  spec.intensity_contrast = j.at("intensity_contrast").get<double>();
  spec.noise_sigma = j.at("noise_sigma").get<double>();
  spec.count = j.at("count").get<int>();
  spec.seed = j.at("seed").get<uint64_t>();
  return spec;
}

}  // namespace

PromptSet sample_prompts(const Tensor& label, int n_fg, int n_bg, uint64_t seed) {
  SGPSEG_CHECK(label.ndim() == 3, "sample_prompts: label must be 3D");
  SGPSEG_CHECK(n_fg >= 1, "sample_prompts: need at least one foreground point");
  SGPSEG_CHECK(n_bg >= 0, "sample_prompts: negative background count");
  const int H = label.extent(0);
  const int W = label.extent(1);
  const int D = label.extent(2);

  std::vector<int64_t> foreground;
  for (int64_t i = 0; i < label.numel(); ++i) {
    SGPSEG_CHECK(label[i] == 0.0 || label[i] == 1.0,
                 "sample_prompts: label must be binary, found " << label[i]);
    if (label[i] != 0.0) foreground.push_back(i);
  }
  SGPSEG_CHECK(static_cast<int>(foreground.size()) >= n_fg,
               "sample_prompts: label has " << foreground.size()
                                            << " foreground voxels, need " << n_fg);

  // Largest 6-connected component.
  std::vector<int8_t> comp(static_cast<size_t>(label.numel()), 0);
  std::vector<int64_t> largest;
  for (int64_t startv : foreground) {
    if (comp[static_cast<size_t>(startv)]) continue;
    std::vector<int64_t> members;
    std::deque<int64_t> queue{startv};
    comp[static_cast<size_t>(startv)] = 1;
    while (!queue.empty()) {
      int64_t v = queue.front();
      queue.pop_front();
      members.push_back(v);
      int h = static_cast<int>(v / (static_cast<int64_t>(W) * D));
      int w = static_cast<int>((v / D) % W);
      int d = static_cast<int>(v % D);
      const int dh[6] = {-1, 1, 0, 0, 0, 0};
      const int dw[6] = {0, 0, -1, 1, 0, 0};
      const int dd[6] = {0, 0, 0, 0, -1, 1};
      for (int k = 0; k < 6; ++k) {
        int hh = h + dh[k];
        int ww = w + dw[k];
        int ddd = d + dd[k];
        if (hh < 0 || hh >= H || ww < 0 || ww >= W || ddd < 0 || ddd >= D) continue;
        int64_t u = label.index3(hh, ww, ddd);
        if (label[u] != 0.0 && !comp[static_cast<size_t>(u)]) {
          comp[static_cast<size_t>(u)] = 1;
          queue.push_back(u);
        }
      }
    }
    if (members.size() > largest.size()) largest = std::move(members);
  }

  // Interior of the largest component: all 6 neighbors inside the label.
  std::vector<int64_t> interior;
  for (int64_t v : largest) {
    int h = static_cast<int>(v / (static_cast<int64_t>(W) * D));
    int w = static_cast<int>((v / D) % W);
    int d = static_cast<int>(v % D);
    bool inner = h > 0 && h < H - 1 && w > 0 && w < W - 1 && d > 0 && d < D - 1;
    if (inner) {
      inner = label.at3(h - 1, w, d) != 0.0 && label.at3(h + 1, w, d) != 0.0 &&
              label.at3(h, w - 1, d) != 0.0 && label.at3(h, w + 1, d) != 0.0 &&
              label.at3(h, w, d - 1) != 0.0 && label.at3(h, w, d + 1) != 0.0;
    }
    if (inner) interior.push_back(v);
  }

  const std::vector<int64_t>* pool = &interior;
  if (static_cast<int>(interior.size()) < n_fg) pool = &largest;
  if (static_cast<int>(pool->size()) < n_fg) pool = &foreground;

  Rng rng(seed);
  auto draw = [&rng](std::vector<int64_t> candidates, int n) {
    // Partial Fisher-Yates: first n entries after seeded swaps.
    for (int i = 0; i < n; ++i) {
      int64_t j = rng.uniform_int(i, static_cast<int64_t>(candidates.size()) - 1);
      std::swap(candidates[static_cast<size_t>(i)], candidates[static_cast<size_t>(j)]);
    }
    candidates.resize(static_cast<size_t>(n));
    return candidates;
  };

  PromptSet prompts;
  for (int64_t v : draw(*pool, n_fg)) {
    PromptPoint p;
    p.x = static_cast<int>(v / (static_cast<int64_t>(W) * D));
    p.y = static_cast<int>((v / D) % W);
    p.z = static_cast<int>(v % D);
    p.label = PromptLabel::foreground;
    prompts.points.push_back(p);
  }
  if (n_bg > 0) {
    std::vector<int64_t> background;
    for (int64_t i = 0; i < label.numel(); ++i) {
      if (label[i] == 0.0) background.push_back(i);
    }
    SGPSEG_CHECK(static_cast<int>(background.size()) >= n_bg,
                 "sample_prompts: not enough background voxels for " << n_bg << " points");
    for (int64_t v : draw(background, n_bg)) {
      PromptPoint p;
      p.x = static_cast<int>(v / (static_cast<int64_t>(W) * D));
      p.y = static_cast<int>((v / D) % W);
      p.z = static_cast<int>(v % D);
      p.label = PromptLabel::background;
      prompts.points.push_back(p);
    }
  }
  return prompts;
}

void write_prompts(const PromptSet& prompts, const std::string& path) {
  nlohmann::json pts = nlohmann::json::array();
  for (const PromptPoint& p : prompts.points) {
    pts.push_back({{"x", p.x},
                   {"y", p.y},
                   {"z", p.z},
                   {"label", p.label == PromptLabel::foreground ? "foreground"
                                                                : "background"}});
  }
  nlohmann::json j;
  j["format_version"] = 1;
  j["sample_id"] = prompts.sample_id;
  j["points"] = pts;
  std::ofstream out(path, std::ios::trunc);
  SGPSEG_CHECK(out.good(), "cannot open '" << path << "' for writing");
  out << j.dump(2) << "\n";
}

PromptSet read_prompts(const std::string& path) {
  std::ifstream in(path);
  SGPSEG_CHECK(in.good(), "cannot open prompt file '" << path << "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cannot parse prompt file '" + path + "': " + e.what());
  }
  PromptSet prompts;
  try {
    prompts.sample_id = j.at("sample_id").get<std::string>();
    for (const auto& p : j.at("points")) {
      PromptPoint pt;
      pt.x = p.at("x").get<int>();
      pt.y = p.at("y").get<int>();
      pt.z = p.at("z").get<int>();
      std::string label = p.at("label").get<std::string>();
      if (label == "foreground") {
        pt.label = PromptLabel::foreground;
      } else if (label == "background") {
        pt.label = PromptLabel::background;
      } else {
        throw ValidationError("prompt file '" + path + "': unknown label '" + label + "'");
      }
      prompts.points.push_back(pt);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("prompt file '" + path + "' is malformed: " + e.what());
  }
  return prompts;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  nlohmann::json entries = nlohmann::json::array();
  for (const ManifestEntry& e : manifest.entries) {
    entries.push_back({{"sample_id", e.sample_id},
                       {"volume", e.volume_path},
                       {"label", e.label_path},
                       {"prompts", e.prompt_path}});
  }
  nlohmann::json j;
  j["format_version"] = 1;
  j["split"] = manifest.split;
  j["generator_spec"] = spec_to_json(manifest.generator_spec);
  j["entries"] = entries;
  std::ofstream out(path, std::ios::trunc);
  SGPSEG_CHECK(out.good(), "cannot open '" << path << "' for writing");
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  SGPSEG_CHECK(in.good(), "cannot open manifest '" << path << "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cannot parse manifest '" + path + "': " + e.what());
  }
  DatasetManifest m;
  try {
    m.split = j.at("split").get<std::string>();
    m.generator_spec = spec_from_json(j.at("generator_spec"));
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.sample_id = e.at("sample_id").get<std::string>();
      entry.volume_path = e.at("volume").get<std::string>();
      entry.label_path = e.at("label").get<std::string>();
      entry.prompt_path = e.at("prompts").get<std::string>();
      m.entries.push_back(entry);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest '" + path + "' is malformed: " + e.what());
  }
  m.dir = fs::path(path).parent_path().string();
  return m;
}

std::array<DatasetManifest, 2> generate_dataset(const GenSpec& spec,
                                                const std::string& out_dir, int n_fg,
                                                int n_bg) {
  spec.validate();
  SGPSEG_CHECK(n_fg >= 1, "generate_dataset: need at least one foreground prompt");
  fs::create_directories(out_dir);

  std::vector<ManifestEntry> entries;
  for (int i = 0; i < spec.count; ++i) {
    const std::string id = sample_name(i);
    Rng rng(derive_seed(spec.seed, kTagSample, static_cast<uint64_t>(i)));

    Tensor mask = make_lesion_mask(spec, rng);
    Tensor soft = box_blur3(mask);
    Tensor image({spec.volume_shape[0], spec.volume_shape[1], spec.volume_shape[2]});
    for (int64_t v = 0; v < image.numel(); ++v) {
      image[v] = rng.normal(0.0, spec.noise_sigma) +
                 spec.intensity_contrast * spec.noise_sigma * soft[v];
    }
    image = zscore_nonzero(image);

    ManifestEntry entry;
    entry.sample_id = id;
    entry.volume_path = id + ".img.json";
    entry.label_path = id + ".label.json";
    entry.prompt_path = id + ".prompts.json";

    VolumeHeader img_hdr;
    img_hdr.sample_id = id;
    img_hdr.kind = "image";
    img_hdr.shape = spec.volume_shape;
    img_hdr.dtype = "float32";
    img_hdr.data_file = id + ".img.raw";
    write_volume((fs::path(out_dir) / entry.volume_path).string(), img_hdr, image);

    VolumeHeader label_hdr;
    label_hdr.sample_id = id;
    label_hdr.kind = "label";
    label_hdr.shape = spec.volume_shape;
    label_hdr.dtype = "uint8";
    label_hdr.data_file = id + ".label.raw";
    write_volume((fs::path(out_dir) / entry.label_path).string(), label_hdr, mask);

    PromptSet prompts =
        sample_prompts(mask, n_fg, n_bg, derive_seed(spec.seed, kTagPrompt,
                                                     static_cast<uint64_t>(i)));
    prompts.sample_id = id;
    write_prompts(prompts, (fs::path(out_dir) / entry.prompt_path).string());
    entries.push_back(entry);
  }

  // Seeded shuffle, then ceil(0.8*count) train / remainder test.
  std::vector<int> order(static_cast<size_t>(spec.count));
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(spec.seed, kTagSplit));
  for (int i = spec.count - 1; i > 0; --i) {
    int j = static_cast<int>(split_rng.uniform_int(0, i));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  const int n_train = static_cast<int>((spec.count * 8 + 9) / 10);

  std::array<DatasetManifest, 2> manifests;
  manifests[0].split = "train";
  manifests[1].split = "test";
  for (auto& m : manifests) {
    m.generator_spec = spec;
    m.dir = out_dir;
  }
  std::vector<int> train_ids(order.begin(), order.begin() + n_train);
  std::vector<int> test_ids(order.begin() + n_train, order.end());
  std::sort(train_ids.begin(), train_ids.end());
  std::sort(test_ids.begin(), test_ids.end());
  for (int i : train_ids) manifests[0].entries.push_back(entries[static_cast<size_t>(i)]);
  for (int i : test_ids) manifests[1].entries.push_back(entries[static_cast<size_t>(i)]);

  write_manifest(manifests[0], (fs::path(out_dir) / "train_manifest.json").string());
  write_manifest(manifests[1], (fs::path(out_dir) / "test_manifest.json").string());
  return manifests;
}

VolumeSample ingest_volume(const std::string& image_header_path,
                           const std::string& label_header_path,
                           const std::string& format) {
  SGPSEG_CHECK(format == "rawjson", "ingest_volume: unsupported format '" << format << "'");
  LoadedVolume image = read_volume(image_header_path);
  LoadedVolume label = read_volume(label_header_path);
  SGPSEG_CHECK(image.header.shape == label.header.shape,
               "ingest_volume: image shape (" << image.data.shape_str()
                                              << ") and label shape ("
                                              << label.data.shape_str() << ") differ");
  for (int64_t i = 0; i < label.data.numel(); ++i) {
    SGPSEG_CHECK(label.data[i] == 0.0 || label.data[i] == 1.0,
                 "ingest_volume: label '" << label_header_path
                                          << "' must be binary, found value "
                                          << label.data[i] << " at flat index " << i);
  }
  VolumeSample sample;
  sample.sample_id = image.header.sample_id;
  sample.spacing = image.header.spacing;
  // Volumes written by the generator are already normalized; re-applying the
  // z-score is near enough to idempotent that round-trips stay within
  // float32 tolerance.
  sample.image = zscore_nonzero(image.data);
  sample.label = std::move(label.data);
  sample.validate();
  return sample;
}

VolumeSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry) {
  return ingest_volume((fs::path(manifest.dir) / entry.volume_path).string(),
                       (fs::path(manifest.dir) / entry.label_path).string());
}

PromptSet load_prompts(const DatasetManifest& manifest, const ManifestEntry& entry) {
  std::string path = (fs::path(manifest.dir) / entry.prompt_path).string();
  SGPSEG_CHECK(fs::exists(path), "missing prompt file for sample '" << entry.sample_id
                                                                    << "': " << path);
  return read_prompts(path);
}

}  // namespace sgpseg
