#pragma once

#include <string>

#include "qtrack/numcore/mlp.hpp"

namespace qtrack::numcore {

inline constexpr int kCheckpointFormatVersion = 1;

// Flat JSON document: {"format_version": 1, "params": {name: {"shape": [r, c],
// "values": [...], "learnable": bool}}}.
std::string checkpoint_to_json(const ParamStore& store);
void save_checkpoint(const ParamStore& store, const std::string& path);

// Replaces values of matching entries in `store`; every entry must be present
// in the document with an identical shape. Throws on version mismatch.
void load_checkpoint(ParamStore& store, const std::string& path);
void checkpoint_from_json(ParamStore& store, const std::string& json_text);

}  // namespace qtrack::numcore
