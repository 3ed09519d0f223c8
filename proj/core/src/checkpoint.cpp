// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace fs = std::filesystem;

namespace sgpseg {

void save_checkpoint(const std::string& stem, ModelParams& model, const RunConfig& config) {
  std::ofstream bin(stem + ".bin", std::ios::binary | std::ios::trunc);
  SGPSEG_CHECK(bin.good(), "cannot open '" << stem << ".bin' for writing");
  nlohmann::json tensors = nlohmann::json::array();
  int64_t offset = 0;
  model.visit([&](const std::string& name, Tensor& t) {
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    bin.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    int64_t bytes = static_cast<int64_t>(buf.size() * sizeof(float));
    tensors.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"offset", offset},
                       {"byte_length", bytes}});
    offset += bytes;
  });
  SGPSEG_CHECK(bin.good(), "short write to '" << stem << ".bin'");
  bin.close();

  nlohmann::json j;
  j["format_version"] = 1;
  j["volume_shape"] = model.volume_shape;
  j["tensors"] = tensors;
  j["config"] = nlohmann::json::parse(run_config_json_text(config));
  std::ofstream idx(stem + ".json", std::ios::trunc);
  SGPSEG_CHECK(idx.good(), "cannot open '" << stem << ".json' for writing");
  idx << j.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::string json_path = path;
  if (json_path.size() < 5 || json_path.substr(json_path.size() - 5) != ".json") {
    json_path += ".json";
  }
  std::ifstream idx(json_path);
  SGPSEG_CHECK(idx.good(), "cannot open checkpoint index '" << json_path << "'");
  nlohmann::json j;
  try {
    idx >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cannot parse checkpoint index '" + json_path + "': " + e.what());
  }
  SGPSEG_CHECK(j.at("format_version").get<int>() == 1,
               "checkpoint '" << json_path << "': unsupported format version");

  LoadedCheckpoint out;
  out.config = run_config_from_json_text(j.at("config").dump());
  auto vshape = j.at("volume_shape").get<std::vector<int>>();
  SGPSEG_CHECK(vshape.size() == 3, "checkpoint: volume_shape must have 3 extents");
  out.model = ModelParams::init(out.config.encoder, {vshape[0], vshape[1], vshape[2]},
                                out.config.seed);

  std::string bin_path = json_path.substr(0, json_path.size() - 5) + ".bin";
  std::ifstream bin(bin_path, std::ios::binary);
  SGPSEG_CHECK(bin.good(), "cannot open checkpoint payload '" << bin_path << "'");
  std::ostringstream oss;
  oss << bin.rdbuf();
  std::string raw = oss.str();

  struct Record {
    std::vector<int> shape;
    int64_t offset;
    int64_t byte_length;
  };
  std::unordered_map<std::string, Record> records;
  for (const auto& t : j.at("tensors")) {
    records[t.at("name").get<std::string>()] =
        Record{t.at("shape").get<std::vector<int>>(), t.at("offset").get<int64_t>(),
               t.at("byte_length").get<int64_t>()};
  }

  out.model.visit([&](const std::string& name, Tensor& t) {
    auto it = records.find(name);
    SGPSEG_CHECK(it != records.end(), "checkpoint is missing tensor '" << name << "'");
    const Record& r = it->second;
    SGPSEG_CHECK(r.shape == t.shape(), "checkpoint tensor '"
                                           << name << "' has mismatched shape");
    SGPSEG_CHECK(r.byte_length == t.numel() * static_cast<int64_t>(sizeof(float)),
                 "checkpoint tensor '" << name << "' has inconsistent byte length");
    SGPSEG_CHECK(r.offset >= 0 &&
                     r.offset + r.byte_length <= static_cast<int64_t>(raw.size()),
                 "checkpoint tensor '" << name << "' lies outside the payload");
    const float* p = reinterpret_cast<const float*>(raw.data() + r.offset);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(p[i]);
    records.erase(it);
  });
  SGPSEG_CHECK(records.empty(), "checkpoint has " << records.size()
                                                  << " tensors not used by the model");
  return out;
}

}  // namespace sgpseg
