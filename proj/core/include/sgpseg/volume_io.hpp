// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk volume format: a JSON sidecar header plus a raw little-endian
// payload, deliberately parseable from any language.
//
//   <name>.json  {"format_version":1, "sample_id":..., "kind":"image"|"label",
//                 "shape":[H,W,D], "dtype":"float32"|"uint8",
//                 "axis_order":"HWD", "spacing":[...], "data_file":"<name>.raw"}
//   <name>.raw   flat row-major payload (h fastest-varying last)
//
// Images are float32, labels uint8 with values in {0,1}.

#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "sgpseg/tensor.hpp"

namespace sgpseg {

struct VolumeHeader {
  std::string sample_id;
  std::string kind;  // "image" or "label"
  std::array<int, 3> shape{};
  std::string dtype;  // "float32" or "uint8"
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::string data_file;  // relative to the header's directory
};

// Writes header JSON + raw payload. The tensor is cast to the header dtype;
// label tensors must be binary.
void write_volume(const std::string& header_path, const VolumeHeader& header,
                  const Tensor& data);

struct LoadedVolume {
  VolumeHeader header;
  Tensor data;  // doubles, regardless of on-disk dtype
};

LoadedVolume read_volume(const std::string& header_path);

// FNV-1a 64-bit; stable across platforms. Used to verify that compared runs
// saw identical prompt files.
uint64_t fnv1a_bytes(const std::string& bytes);
uint64_t fnv1a_file(const std::string& path);
std::string hash_hex(uint64_t h);

}  // namespace sgpseg
