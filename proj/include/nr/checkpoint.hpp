#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "nr/network.hpp"

namespace nr {

// Checkpoint file: one line of JSON (format, version, endianness, layer
// descriptions, tensor directory with byte offsets, free-form meta), a
// newline, then the concatenated raw little-endian float32 tensor payloads.
// Save/load round-trips bit-exactly.
void save_checkpoint(const NetworkF& net, const std::string& path, const nlohmann::json& meta);
NetworkF load_checkpoint(const std::string& path, nlohmann::json* meta_out = nullptr);

// Architecture descriptions for headers and reports, e.g. "10-20-100-25"
// for the conv-conv-dense-dense template.
std::string arch_string(const NetworkF& net);

// Stable fingerprint of the parameter bytes; guards payoff caches against
// mixing results from different checkpoints.
std::string param_fingerprint(const NetworkF& net);

}  // namespace nr
