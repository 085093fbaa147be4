#pragma once

#include <string>

#include "json.hpp"

namespace ctxdistill {

inline constexpr const char* kVersion = "0.1.0";

/// Hex digest of a canonically serialized (sorted-key) JSON document.
/// Embedded in every output file header for provenance.
std::string config_hash(const nlohmann::json& config);

/// Header record placed on the first line of every line-delimited output
/// file: {"meta": {"tool": ..., "version": ..., "config_hash": ...}}.
/// Readers skip it; writers emit it first.
nlohmann::json file_header(const nlohmann::json& config);

bool is_file_header(const nlohmann::json& record);

}  // namespace ctxdistill
