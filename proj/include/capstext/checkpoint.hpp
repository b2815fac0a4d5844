#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "capstext/config.hpp"
#include "capstext/error.hpp"
#include "capstext/model.hpp"
#include "capstext/text.hpp"

namespace capstext {

// Checkpoint layout (all integers little-endian):
//   magic "CAPSTXT1" | u32 version=1 | u32 metadata length | metadata text |
//   per tensor: u16 name length | name | u8 dtype (1=f32, 2=f64) | u8 rank |
//               u32 extents[rank] | raw little-endian element bytes
// The metadata is the flat key=value serialization of the model config plus
// a "precision" key.

namespace detail {

constexpr char kCheckpointMagic[8] = {'C', 'A', 'P', 'S', 'T', 'X', 'T', '1'};
constexpr uint32_t kCheckpointVersion = 1;

inline void put_bytes(std::string& buf, const void* data, size_t n) {
  buf.append(static_cast<const char*>(data), n);
}

inline void put_u16(std::string& buf, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  buf.append(b, 2);
}

inline void put_u32(std::string& buf, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  buf.append(b, 4);
}

inline void put_u64(std::string& buf, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  buf.append(b, 8);
}

template <typename T>
void put_scalar(std::string& buf, T value) {
  if constexpr (sizeof(T) == 4) {
    uint32_t bits;
    std::memcpy(&bits, &value, 4);
    put_u32(buf, bits);
  } else {
    uint64_t bits;
    std::memcpy(&bits, &value, 8);
    put_u64(buf, bits);
  }
}

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    data_ = buffer.str();
  }

  size_t offset() const { return offset_; }
  bool at_end() const { return offset_ == data_.size(); }

  void read_bytes(void* dst, size_t n, const char* what) {
    if (offset_ + n > data_.size()) {
      throw FormatError(path_ + ": truncated reading " + what + " at offset " +
                        std::to_string(offset_));
    }
    std::memcpy(dst, data_.data() + offset_, n);
    offset_ += n;
  }

  uint16_t read_u16(const char* what) {
    unsigned char b[2];
    read_bytes(b, 2, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }

  uint32_t read_u32(const char* what) {
    unsigned char b[4];
    read_bytes(b, 4, what);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  uint64_t read_u64(const char* what) {
    unsigned char b[8];
    read_bytes(b, 8, what);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  std::string read_string(size_t n, const char* what) {
    std::string s(n, '\0');
    if (n) read_bytes(s.data(), n, what);
    return s;
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::string data_;
  size_t offset_ = 0;
};

inline std::string read_checkpoint_metadata(CheckpointReader& reader) {
  char magic[8];
  reader.read_bytes(magic, 8, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError(reader.path() + ": bad magic at offset 0");
  }
  uint32_t version = reader.read_u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(reader.path() + ": unsupported version " + std::to_string(version) +
                      " at offset 8 (reader supports " + std::to_string(kCheckpointVersion) + ")");
  }
  uint32_t meta_len = reader.read_u32("metadata length");
  return reader.read_string(meta_len, "metadata");
}

}  // namespace detail

template <typename T>
void save_checkpoint(Model<T>& model, const std::string& path) {
  std::string buf;
  detail::put_bytes(buf, detail::kCheckpointMagic, 8);
  detail::put_u32(buf, detail::kCheckpointVersion);

  std::string metadata = model_config_to_text(model.config);
  metadata += "precision = ";
  metadata += (sizeof(T) == 4 ? "f32" : "f64");
  metadata += "\n";
  detail::put_u32(buf, static_cast<uint32_t>(metadata.size()));
  detail::put_bytes(buf, metadata.data(), metadata.size());

  for (auto& param : model.parameters()) {
    const std::string& name = param.name();
    detail::put_u16(buf, static_cast<uint16_t>(name.size()));
    detail::put_bytes(buf, name.data(), name.size());
    buf.push_back(sizeof(T) == 4 ? char(1) : char(2));
    buf.push_back(static_cast<char>(param.rank()));
    for (size_t extent : param.shape()) detail::put_u32(buf, static_cast<uint32_t>(extent));
    for (T v : param.values()) detail::put_scalar(buf, v);
  }

  // Write through a temp file so a failed run never leaves a partial
  // checkpoint behind.
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write on checkpoint: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("cannot move checkpoint into place: " + path);
  }
}

// Model config stored in a checkpoint, without loading the tensors.
inline ModelConfig checkpoint_config(const std::string& path) {
  detail::CheckpointReader reader(path);
  return model_config_from_text(detail::read_checkpoint_metadata(reader));
}

inline Precision checkpoint_precision(const std::string& path) {
  detail::CheckpointReader reader(path);
  auto kv = parse_kv_text(detail::read_checkpoint_metadata(reader), path);
  auto it = kv.find("precision");
  if (it == kv.end()) throw FormatError(path + ": metadata missing precision key");
  return precision_from_string(it->second);
}

template <typename T>
Model<T> load_checkpoint(const std::string& path) {
  detail::CheckpointReader reader(path);
  ModelConfig config = model_config_from_text(detail::read_checkpoint_metadata(reader));

  std::map<std::string, std::pair<Shape, std::vector<T>>> records;
  while (!reader.at_end()) {
    uint16_t name_len = reader.read_u16("tensor name length");
    std::string name = reader.read_string(name_len, "tensor name");
    char dtype;
    reader.read_bytes(&dtype, 1, "dtype code");
    char expected = sizeof(T) == 4 ? char(1) : char(2);
    if (dtype != expected) {
      throw ConfigError(path + ": tensor '" + name + "' has dtype code " +
                        std::to_string(int(dtype)) + ", expected " + std::to_string(int(expected)));
    }
    unsigned char rank;
    reader.read_bytes(&rank, 1, "rank");
    Shape shape(rank);
    size_t n = 1;
    for (size_t i = 0; i < rank; ++i) {
      shape[i] = reader.read_u32("extent");
      n *= shape[i];
    }
    std::vector<T> values(n);
    for (size_t i = 0; i < n; ++i) {
      if constexpr (sizeof(T) == 4) {
        uint32_t bits = reader.read_u32("element data");
        float f;
        std::memcpy(&f, &bits, 4);
        values[i] = f;
      } else {
        uint64_t bits = reader.read_u64("element data");
        double d;
        std::memcpy(&d, &bits, 8);
        values[i] = d;
      }
    }
    records[name] = {std::move(shape), std::move(values)};
  }

  // Build the model with placeholder embeddings, then overwrite every
  // parameter from the stored records.
  EmbeddingTable placeholder;
  placeholder.rows = config.vocab_size;
  placeholder.dim = config.embed_dim;
  placeholder.data.assign(config.vocab_size * config.embed_dim, 0.0);
  placeholder.trainable = config.train_embeddings;
  Model<T> model = build_model<T>(config, placeholder);

  size_t used = 0;
  for (auto& param : model.parameters()) {
    auto it = records.find(param.name());
    if (it == records.end()) {
      throw FormatError(path + ": missing tensor record '" + param.name() + "'");
    }
    if (it->second.first != param.shape()) {
      throw FormatError(path + ": tensor '" + param.name() + "' has shape " +
                        shape_str(it->second.first) + ", model expects " +
                        shape_str(param.shape()));
    }
    auto storage = param.mutable_values();
    std::copy(it->second.second.begin(), it->second.second.end(), storage.begin());
    ++used;
  }
  if (used != records.size()) {
    throw FormatError(path + ": checkpoint contains " + std::to_string(records.size()) +
                      " tensors, model uses " + std::to_string(used));
  }
  return model;
}

}  // namespace capstext
