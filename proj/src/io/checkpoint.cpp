#include "fsv2v/io/checkpoint.hpp"

namespace fsv2v::io {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'V', '2', 'V', 'C', 'K', 'P'};

void put_u64(std::string& out, std::uint64_t v, int bytes) {
  for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

std::uint64_t get_u64(const std::string& in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}

Json index(const nn::ParamSet<float>& set, std::size_t& offset) {
  Json out = Json::array();
  for (const auto& [name, t] : set) {
    out.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * 4;
  }
  return out;
}

nn::ParamSet<float> read_index(const Json& entries, const std::string& blob, std::size_t& expected_offset,
                               const std::string& origin) {
  nn::ParamSet<float> out;
  for (const auto& e : entries) {
    const std::string name = e.at("name");
    const nn::Shape shape = e.at("shape").get<nn::Shape>();
    const std::size_t offset = e.at("offset");
    const std::size_t n = nn::element_count(shape);
    if (offset != expected_offset) {
      throw IntegrityError(origin + ": parameter '" + name + "' at byte " + std::to_string(offset) + ", expected " +
                           std::to_string(expected_offset));
    }
    if (offset + n * 4 > blob.size()) {
      throw IntegrityError(origin + ": blob ends at byte " + std::to_string(blob.size()) + " but '" + name +
                           "' needs bytes up to " + std::to_string(offset + n * 4));
    }
    nn::Tensor<float> t(shape);
    decode_f32_le(blob.data() + offset, n, t.values().data());
    out.insert(name, std::move(t));
    expected_offset += n * 4;
  }
  return out;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::size_t offset = 0;
  Json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["meta"] = ckpt.meta;
  manifest["params"] = index(ckpt.params, offset);
  manifest["optimizer"] = index(ckpt.optimizer, offset);
  manifest["blob_bytes"] = offset;
  const std::string text = manifest.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u64(out, kCheckpointVersion, 4);
  put_u64(out, text.size(), 8);
  out += text;
  out.reserve(out.size() + offset);
  for (const auto* set : {&ckpt.params, &ckpt.optimizer})
    for (const auto& [name, t] : *set) append_f32_le(out, t.values().data(), t.size());
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin) {
  constexpr std::size_t header = sizeof kMagic + 4 + 8;
  if (bytes.size() < header || bytes.compare(0, sizeof kMagic, kMagic, sizeof kMagic) != 0) {
    throw FormatError(origin + " is not an fsv2v checkpoint");
  }
  const auto version = static_cast<std::uint32_t>(get_u64(bytes, 8, 4));
  if (version != kCheckpointVersion) {
    throw FormatError(origin + ": checkpoint format version " + std::to_string(version) + " cannot be read by this build (reads version " +
                      std::to_string(kCheckpointVersion) + "); migrate it by loading with the matching release and re-saving");
  }
  const std::uint64_t mlen = get_u64(bytes, 12, 8);
  if (header + mlen > bytes.size()) {
    throw IntegrityError(origin + ": manifest claims " + std::to_string(mlen) + " bytes, file has " +
                         std::to_string(bytes.size() - header));
  }
  Json manifest;
  try {
    manifest = Json::parse(bytes.substr(header, mlen));
  } catch (const Json::parse_error& e) {
    throw FormatError(origin + ": malformed manifest: " + e.what());
  }
  const std::string blob = bytes.substr(header + mlen);
  const std::size_t expected = manifest.at("blob_bytes");
  if (blob.size() != expected) {
    throw IntegrityError(origin + ": parameter blob is " + std::to_string(blob.size()) + " bytes, manifest expects " +
                         std::to_string(expected));
  }
  Checkpoint ckpt;
  ckpt.meta = manifest.at("meta");
  std::size_t offset = 0;
  ckpt.params = read_index(manifest.at("params"), blob, offset, origin);
  ckpt.optimizer = read_index(manifest.at("optimizer"), blob, offset, origin);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write-then-rename so an interrupted save never leaves a torn checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  write_file(tmp, encode_checkpoint(ckpt));
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing checkpoint " + path.string());
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace fsv2v::io
