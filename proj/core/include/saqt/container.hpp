// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "saqt/model.hpp"

namespace saqt {

// Binary model container. Little-endian layout:
//
//   magic "SAQT" | u32 version (=1) | u32 tensor count
//   per tensor: u32 name length | name bytes (UTF-8)
//               u8 dtype (0 = f32, 1 = utf-8 text) | u8 rank
//               u64 dims[rank] | payload
//
// The first tensor is named "__config__": a rank-1 text tensor holding a JSON
// document with the model config, model id and any calibrated scales (kept in
// JSON so the doubles round-trip losslessly). Weight tensors follow in fixed
// order under names like "layers.3.down". Writes go to a temp file that is
// renamed over the target, so readers never see a half-written container.
inline constexpr std::uint32_t kContainerVersion = 1;

void save_model(const ModelBundle& model, const std::string& path);
ModelBundle load_model(const std::string& path);  // DataError on malformed bytes

}  // namespace saqt
