#pragma once

#include <string>

#include "chunkpool/model.hpp"

namespace chunkpool {

// File layout: magic "CHNKPOOL", u32 version (1), u64 metadata length, a
// metadata JSON block (model config, init seed, vocabulary, tensor index),
// then every parameter buffer as little-endian f64 in index order.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace chunkpool
