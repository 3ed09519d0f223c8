// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic imbalanced 3D lesion volumes: ellipsoid or lobulated foreground
// masks rasterized into noisy intensity volumes, written in the sidecar
// header + raw format, with frozen per-sample prompt points and 80/20
// train/test manifests. Every sample derives its own RNG substream from
// (seed, sample index), so generation order never changes outputs.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sgpseg/backbone.hpp"
#include "sgpseg/tensor.hpp"

namespace sgpseg {

enum class ShapeFamily { ellipsoid, lobulated };

std::string to_string(ShapeFamily f);
ShapeFamily parse_shape_family(const std::string& s);

struct GenSpec {
  std::array<int, 3> volume_shape{32, 32, 32};
  double fraction_lo = 0.005;  // lesion fraction range, subset of (0, 0.2]
  double fraction_hi = 0.02;
  ShapeFamily shape_family = ShapeFamily::ellipsoid;
  double intensity_contrast = 2.0;  // lesion-mean offset in noise-sigma units
  double noise_sigma = 1.0;
  int count = 100;
  uint64_t seed = 0;

  void validate() const;
};

struct ManifestEntry {
  std::string sample_id;
  std::string volume_path;  // header JSON, relative to the manifest directory
  std::string label_path;
  std::string prompt_path;
};

struct DatasetManifest {
  std::string split;  // "train" or "test"
  std::vector<ManifestEntry> entries;
  GenSpec generator_spec;
  std::string dir;  // directory the manifest was loaded from / written to
};

// Rasterizes an axis-aligned ellipsoid; returns the voxel-inclusion mask.
Tensor rasterize_ellipsoid(const std::array<int, 3>& shape,
                           const std::array<double, 3>& center,
                           const std::array<double, 3>& radii);

// Generates `count` samples under `spec` into `out_dir`, freezes prompts
// (n_fg foreground + n_bg background points per sample), and writes
// train_manifest.json / test_manifest.json (ceil(0.8*count) / remainder,
// disjoint ids). Returns {train, test}. Deterministic for a fixed spec.
std::array<DatasetManifest, 2> generate_dataset(const GenSpec& spec,
                                                const std::string& out_dir, int n_fg = 1,
                                                int n_bg = 0);

// Seeded prompt sampling: foreground points prefer the interior of the
// largest connected component (all 6-neighbors foreground) when possible.
PromptSet sample_prompts(const Tensor& label, int n_fg, int n_bg, uint64_t seed);

// Reads one image+label pair through the declared format ("rawjson"),
// z-scores the image over its nonzero voxels (entire volume zeroed when the
// deviation underflows the 1e-8 floor), and validates the binary label.
VolumeSample ingest_volume(const std::string& image_header_path,
                           const std::string& label_header_path,
                           const std::string& format = "rawjson");

void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

PromptSet read_prompts(const std::string& path);
void write_prompts(const PromptSet& prompts, const std::string& path);

// Convenience: loads the sample behind one manifest entry.
VolumeSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry);
PromptSet load_prompts(const DatasetManifest& manifest, const ManifestEntry& entry);

}  // namespace sgpseg
