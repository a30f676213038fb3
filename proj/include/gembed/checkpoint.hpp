#pragma once

#include <string>

#include "gembed/model.hpp"

namespace gembed {

/// Binary model container, independent of host byte order.
///
/// Layout (all integers little-endian):
///   magic   8 bytes "GEMBCKPT"
///   u32     version (currently 1)
///   u64     d, L, M, d_ff
///   u8      include_self, scale_by_head_dim
///   u64     input_dim, n_classes, seed
///   u64     tensor count; then per tensor:
///     u32   name length, name bytes
///     u32   rank, u64 dims[rank]
///     f64   row-major payload (IEEE-754 bit pattern, little-endian)
void save_checkpoint(const std::string& path, const Model& model);

/// Rebuilds the model from the container; every expected parameter must be
/// present with its exact shape. Throws DataError on any mismatch.
Model load_checkpoint(const std::string& path);

}  // namespace gembed
