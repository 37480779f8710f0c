#include "gatedbev/checkpoint.hpp"

#include <cstdint>
#include <map>

#include "gatedbev/dataset_io.hpp"
#include "gatedbev/errors.hpp"
#include "gatedbev/json_io.hpp"

namespace gatedbev {

namespace {

Tensor empty_like_shape(const json& shape) {
  std::vector<std::size_t> dims;
  for (const auto& d : shape) dims.push_back(d.get<std::size_t>());
  return Tensor(dims);
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig& mc = ckpt.model.config;
  json tensors = json::array();
  std::string blob;
  for (const auto& [name, t] : ckpt.model.named_parameters()) {
    tensors.push_back({{"name", name}, {"shape", t->shape}, {"offset", blob.size()}});
    for (double v : t->data) append_f32_le(blob, v);
  }
  json header = {{"schema", kCheckpointSchema},
                 {"variant", variant_name(mc.variant)},
                 {"c1", mc.c1},
                 {"c2", mc.c2},
                 {"c_out", mc.c_out},
                 {"num_classes", mc.num_classes},
                 {"grid", grid_json(ckpt.grid)},
                 {"tensors", tensors}};
  if (!ckpt.config_json.empty()) header["config"] = json::parse(ckpt.config_json);
  const std::string text = header.dump();
  std::string out;
  std::uint64_t n = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  out += text;
  out += blob;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8) throw IoError(IoError::Kind::corrupt, "checkpoint is truncated");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  if (n > bytes.size() - 8) throw IoError(IoError::Kind::corrupt, "checkpoint header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.substr(8, n));
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::corrupt, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (!header.contains("schema") || header["schema"] != kCheckpointSchema)
    throw IoError(IoError::Kind::schema_mismatch, std::string("checkpoint schema is not ") + kCheckpointSchema);

  Checkpoint ck;
  const std::size_t blob_start = 8 + n;
  try {
    ModelConfig mc;
    mc.variant = parse_variant(header.at("variant").get<std::string>());
    mc.c1 = header.at("c1");
    mc.c2 = header.at("c2");
    mc.c_out = header.at("c_out");
    mc.num_classes = header.at("num_classes");
    ck.grid = grid_from(header.at("grid"));
    if (header.contains("config")) ck.config_json = header["config"].dump();

    // Build a shaped skeleton then fill it from the blobs.
    ck.model = init_model(mc, 0);
    std::map<std::string, const json*> by_name;
    for (const auto& t : header.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
    for (auto& [name, t] : ck.model.named_parameters()) {
      const auto it = by_name.find(name);
      if (it == by_name.end()) throw IoError(IoError::Kind::corrupt, "checkpoint lacks tensor " + name);
      Tensor loaded = empty_like_shape(it->second->at("shape"));
      if (loaded.shape != t->shape)
        throw IoError(IoError::Kind::corrupt, "tensor " + name + " has shape " + loaded.shape_string() +
                                                  ", expected " + t->shape_string());
      const std::size_t off = blob_start + it->second->at("offset").get<std::size_t>();
      if (off + 4 * loaded.size() > bytes.size())
        throw IoError(IoError::Kind::corrupt, "tensor " + name + " runs past the end of the checkpoint");
      for (std::size_t i = 0; i < loaded.size(); ++i) loaded.data[i] = read_f32_le(bytes.data() + off + 4 * i);
      *t = std::move(loaded);
    }
    if (by_name.size() != ck.model.named_parameters().size())
      throw IoError(IoError::Kind::corrupt, "checkpoint has unexpected tensors");
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::corrupt, std::string("checkpoint header is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(IoError::Kind::corrupt, std::string("checkpoint header is malformed: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace gatedbev
