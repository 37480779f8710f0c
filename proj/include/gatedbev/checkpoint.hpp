#pragma once

#include <filesystem>
#include <string>

#include "gatedbev/fusion.hpp"
#include "gatedbev/geometry.hpp"

namespace gatedbev {

inline constexpr const char* kCheckpointSchema = "gatedbev-ckpt/1";

struct Checkpoint {
  Model model;
  BEVGridSpec grid;
  std::string config_json;  // resolved run config, echoed verbatim; may be empty
};

// Layout: uint64 LE header length, JSON header, then little-endian float32 tensor
// blobs at the offsets listed in the header. Parameters round to float32.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gatedbev
