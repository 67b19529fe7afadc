#pragma once

// Checkpoint file: "FSV2VCKP", u32 format version, u64 manifest length, the
// JSON manifest, then every tensor as float32 little-endian in manifest order.

#include <filesystem>

#include "fsv2v/io/binary.hpp"
#include "fsv2v/nn/params.hpp"

namespace fsv2v::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Json meta = Json::object();  // variant, fingerprint, epoch, configs, trainer state
  nn::ParamSet<float> params;
  nn::ParamSet<float> optimizer;  // optional moments, same encoding
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// FormatError on a foreign file or another format version, IntegrityError when
// the blob does not match the manifest.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fsv2v::io
