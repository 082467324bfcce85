// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <json.hpp>

#include "gnndt/ad/optim.hpp"
#include "gnndt/ad/tape.hpp"

namespace gnndt::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary little-endian layout:
///   "GNDTCKPT" u32 version u32 scalar_bytes i64 optimizer_step u32 count
///   count x { u32 name_len, name, i32 rows, i32 cols, u8 decay, values, u8 has_moments, [m f64..., v f64...] }
///   u64 FNV-1a of everything before it
/// `sidecar` (usually the model config) is written next to it as `<path>.json`.
template <class T>
void save_checkpoint(const std::string& path, const ParameterStore<T>& params, const AdamW<T>* optimizer,
                     const nlohmann::json& sidecar);

/// Loads values (converting precision if needed) into an existing store with identical names and shapes,
/// and optimizer state when `optimizer` is given. Returns the sidecar (null when absent).
/// Throws RuntimeFailure on I/O or corruption, ConfigError on name/shape mismatch.
template <class T>
nlohmann::json load_checkpoint(const std::string& path, ParameterStore<T>& params, AdamW<T>* optimizer);

nlohmann::json read_checkpoint_sidecar(const std::string& path);

}  // namespace gnndt::ad
