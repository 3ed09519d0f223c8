// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/volume_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace sgpseg {

namespace {

// Serialize exactly one float per voxel, little-endian. All supported
// platforms here are little-endian; assert to keep the format honest.
static_assert(std::endian::native == std::endian::little,
              "volume payloads are little-endian");

void write_bytes(const std::string& path, const char* bytes, size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  SGPSEG_CHECK(out.good(), "cannot open '" << path << "' for writing");
  out.write(bytes, static_cast<std::streamsize>(n));
  SGPSEG_CHECK(out.good(), "short write to '" << path << "'");
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SGPSEG_CHECK(in.good(), "cannot open '" << path << "'");
  std::ostringstream oss;
  oss << in.rdbuf();
  return oss.str();
}

}  // namespace

void write_volume(const std::string& header_path, const VolumeHeader& header,
                  const Tensor& data) {
  SGPSEG_CHECK(data.ndim() == 3, "write_volume expects a 3D tensor, got "
                                     << data.shape_str());
  SGPSEG_CHECK(data.extent(0) == header.shape[0] && data.extent(1) == header.shape[1] &&
                   data.extent(2) == header.shape[2],
               "write_volume: tensor shape " << data.shape_str()
                                             << " does not match header shape");
  SGPSEG_CHECK(header.dtype == "float32" || header.dtype == "uint8",
               "write_volume: unsupported dtype '" << header.dtype << "'");
  SGPSEG_CHECK(!header.data_file.empty(), "write_volume: header.data_file is empty");

  nlohmann::json j;
  j["format_version"] = 1;
  j["sample_id"] = header.sample_id;
  j["kind"] = header.kind;
  j["shape"] = header.shape;
  j["dtype"] = header.dtype;
  j["axis_order"] = "HWD";
  j["spacing"] = header.spacing;
  j["data_file"] = header.data_file;
  std::string text = j.dump(2);
  text.push_back('\n');
  write_bytes(header_path, text.data(), text.size());

  fs::path raw_path = fs::path(header_path).parent_path() / header.data_file;
  const int64_t n = data.numel();
  if (header.dtype == "float32") {
    std::vector<float> buf(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) buf[static_cast<size_t>(i)] = static_cast<float>(data[i]);
    write_bytes(raw_path.string(), reinterpret_cast<const char*>(buf.data()),
                buf.size() * sizeof(float));
  } else {
    std::vector<uint8_t> buf(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      double v = data[i];
      SGPSEG_CHECK(v == 0.0 || v == 1.0,
                   "write_volume: uint8 label payload must be binary, found " << v);
      buf[static_cast<size_t>(i)] = v != 0.0 ? 1 : 0;
    }
    write_bytes(raw_path.string(), reinterpret_cast<const char*>(buf.data()), buf.size());
  }
}

LoadedVolume read_volume(const std::string& header_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_all(header_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("cannot parse volume header '" + header_path + "': " + e.what());
  }
  LoadedVolume v;
  try {
    SGPSEG_CHECK(j.at("format_version").get<int>() == 1,
                 "volume header '" << header_path << "': unsupported format version");
    v.header.sample_id = j.at("sample_id").get<std::string>();
    v.header.kind = j.at("kind").get<std::string>();
    auto shape = j.at("shape").get<std::vector<int>>();
    SGPSEG_CHECK(shape.size() == 3, "volume header '" << header_path
                                                      << "': shape must have 3 extents");
    v.header.shape = {shape[0], shape[1], shape[2]};
    v.header.dtype = j.at("dtype").get<std::string>();
    SGPSEG_CHECK(j.at("axis_order").get<std::string>() == "HWD",
                 "volume header '" << header_path << "': unsupported axis order");
    auto spacing = j.at("spacing").get<std::vector<double>>();
    SGPSEG_CHECK(spacing.size() == 3, "volume header '" << header_path
                                                        << "': spacing must have 3 values");
    v.header.spacing = {spacing[0], spacing[1], spacing[2]};
    v.header.data_file = j.at("data_file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("volume header '" + header_path + "' is malformed: " + e.what());
  }

  fs::path raw_path = fs::path(header_path).parent_path() / v.header.data_file;
  std::string raw = read_all(raw_path.string());
  const int64_t n = static_cast<int64_t>(v.header.shape[0]) * v.header.shape[1] *
                    v.header.shape[2];
  v.data = Tensor({v.header.shape[0], v.header.shape[1], v.header.shape[2]});
  if (v.header.dtype == "float32") {
    SGPSEG_CHECK(raw.size() == static_cast<size_t>(n) * sizeof(float),
                 "volume payload '" << raw_path.string() << "' has " << raw.size()
                                    << " bytes, expected " << n * sizeof(float));
    const float* p = reinterpret_cast<const float*>(raw.data());
    for (int64_t i = 0; i < n; ++i) v.data[i] = static_cast<double>(p[i]);
  } else if (v.header.dtype == "uint8") {
    SGPSEG_CHECK(raw.size() == static_cast<size_t>(n),
                 "volume payload '" << raw_path.string() << "' has " << raw.size()
                                    << " bytes, expected " << n);
    const uint8_t* p = reinterpret_cast<const uint8_t*>(raw.data());
    for (int64_t i = 0; i < n; ++i) v.data[i] = static_cast<double>(p[i]);
  } else {
    SGPSEG_CHECK(false, "volume header '" << header_path << "': unsupported dtype '"
                                          << v.header.dtype << "'");
  }
  return v;
}

uint64_t fnv1a_bytes(const std::string& bytes) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t fnv1a_file(const std::string& path) { return fnv1a_bytes(read_all(path)); }

std::string hash_hex(uint64_t h) {
  std::ostringstream oss;
  oss << std::hex << std::setw(16) << std::setfill('0') << h;
  return oss.str();
}

}  // namespace sgpseg
