#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fsw/core/array.hpp"

namespace fsw {

/// Single-file tensor container ("FSWT" format, version 1, little-endian):
///
///   magic "FSWT" | u32 version | u64 meta_len | meta (UTF-8 JSON)
///   | u64 count | count x { u32 name_len | name | u32 ndim | i64 dims[ndim]
///   | f64 data[numel] }
///
/// Checkpoints and encoder weight files both use this container; the meta
/// block carries whatever JSON the writer needs (step counters, config hash,
/// backend architecture, ...). Writes are atomic (temp file + rename).
struct TensorFile {
  std::map<std::string, Array> tensors;
  std::string meta;
};

void save_tensor_file(const std::string& path, const std::vector<std::pair<std::string, const Array*>>& tensors,
                      const std::string& meta);

TensorFile load_tensor_file(const std::string& path);

}  // namespace fsw
