#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "armflow/params.hpp"

namespace armflow::nn {

// Checkpoint = JSON index (path -> dtype/shape/offset/length) + one
// little-endian f64 blob. Saving what was just loaded reproduces both
// files byte-for-byte.
struct Checkpoint {
  ParamStore params;
  std::map<std::string, Mat> aux;  // optimizer moments and similar
  nlohmann::ordered_json meta;
};

void save_checkpoint(const std::string& index_path, const std::string& blob_path,
                     const ParamStore& params, const std::map<std::string, Mat>& aux = {},
                     const nlohmann::ordered_json& meta = {});

Checkpoint load_checkpoint(const std::string& index_path, const std::string& blob_path);

// Convenience: <dir>/<stem>.index.json + <dir>/<stem>.bin
void save_checkpoint_dir(const std::string& dir, const std::string& stem,
                         const ParamStore& params, const std::map<std::string, Mat>& aux = {},
                         const nlohmann::ordered_json& meta = {});
Checkpoint load_checkpoint_dir(const std::string& dir, const std::string& stem);

}  // namespace armflow::nn
