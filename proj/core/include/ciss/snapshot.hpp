#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "ciss/model.hpp"
#include "ciss/tensor.hpp"

namespace ciss {

// Full parameter state of a model (learnable parameters and normalization
// statistics) plus a JSON metadata header. Loading a snapshot restores
// inference outputs bit-exactly.
struct ParameterSnapshot {
  nlohmann::json meta; // architecture_id, class_count, task_index, method, config_hash, ...
  std::map<std::string, Tensor> arrays;
};

ParameterSnapshot take_snapshot(LayerTapModel& model, nlohmann::json meta = {});

// Restores every array by name; names and shapes must match the model
// exactly.
void load_snapshot(LayerTapModel& model, const ParameterSnapshot& snap);

// File format (little-endian):
//   magic "CISSNAP1", u64 meta_len, meta JSON bytes,
//   u64 array_count, then per array:
//     u32 name_len, name bytes, u32 ndim, i32 dims[ndim], f64 data[...]
void save_snapshot_file(const std::filesystem::path& path, const ParameterSnapshot& snap);
ParameterSnapshot load_snapshot_file(const std::filesystem::path& path);

// Convenience: rebuild a miniseg model from a snapshot's metadata (requires
// meta recorded by take_model_meta) and load the arrays into it.
nlohmann::json take_model_meta(const LayerTapModel& model);
LayerTapModel model_from_snapshot(const ParameterSnapshot& snap);

} // namespace ciss
