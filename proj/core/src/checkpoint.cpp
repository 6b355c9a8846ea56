#include "dialoflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "json.hpp"

namespace dialoflow::nn {

namespace {

constexpr char kMagic[8] = {'D', 'L', 'S', 'P', '0', '0', '0', '1'};
constexpr int64_t kAlign = 64;

void put_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint64_t get_u64_le(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32_le(std::string& out, float f) {
  uint32_t bits = std::bit_cast<uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32_le(const unsigned char* p) {
  uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::string serialize(const std::map<std::string, Tensor>& tensors) {
  nlohmann::json header = nlohmann::json::object();
  int64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    offset = (offset + kAlign - 1) / kAlign * kAlign;
    int64_t nbytes = t.numel() * 4;
    header[name] = {{"dtype", "f32"}, {"shape", t.shape()}, {"offset", offset}, {"nbytes", nbytes}};
    offset += nbytes;
  }
  std::string header_str = header.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u64_le(out, header_str.size());
  out.append(header_str);
  size_t payload_start = out.size();
  for (const auto& [name, t] : tensors) {
    int64_t want = header[name]["offset"].get<int64_t>();
    out.resize(payload_start + static_cast<size_t>(want), '\0');
    for (int64_t i = 0; i < t.numel(); ++i) put_f32_le(out, static_cast<float>(t.at(i)));
  }
  return out;
}

std::map<std::string, Tensor> deserialize(const std::string& bytes, const std::string& path) {
  auto fail = [&](CheckpointError::Kind k, const std::string& msg) {
    throw CheckpointError(k, msg + " (" + path + ")");
  };
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    fail(CheckpointError::Kind::CorruptHeader, "corrupt header: bad magic");
  uint64_t header_len = get_u64_le(p + 8);
  if (16 + header_len > bytes.size())
    fail(CheckpointError::Kind::CorruptHeader, "corrupt header: header length exceeds file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception&) {
    fail(CheckpointError::Kind::CorruptHeader, "corrupt header: invalid JSON");
  }
  if (!header.is_object()) fail(CheckpointError::Kind::CorruptHeader, "corrupt header: not an object");

  size_t payload_start = 16 + header_len;
  int64_t payload_size = static_cast<int64_t>(bytes.size() - payload_start);
  std::map<std::string, Tensor> out;
  for (auto it = header.begin(); it != header.end(); ++it) {
    const auto& meta = it.value();
    if (!meta.contains("dtype") || !meta.contains("shape") || !meta.contains("offset") ||
        !meta.contains("nbytes"))
      fail(CheckpointError::Kind::CorruptHeader, "corrupt header: missing field for " + it.key());
    if (meta["dtype"].get<std::string>() != "f32")
      fail(CheckpointError::Kind::CorruptHeader, "corrupt header: unsupported dtype");
    std::vector<int64_t> shape = meta["shape"].get<std::vector<int64_t>>();
    int64_t offset = meta["offset"].get<int64_t>();
    int64_t nbytes = meta["nbytes"].get<int64_t>();
    int64_t numel = 1;
    for (int64_t d : shape) {
      if (d < 0) fail(CheckpointError::Kind::ShapeMismatch, "shape mismatch: negative dim");
      numel *= d;
    }
    if (numel * 4 != nbytes)
      fail(CheckpointError::Kind::ShapeMismatch,
           "shape mismatch: shape " + shape_str(shape) + " vs nbytes for " + it.key());
    if (offset < 0 || offset + nbytes > payload_size)
      fail(CheckpointError::Kind::TruncatedPayload, "truncated payload for " + it.key());
    Tensor t(shape);
    const unsigned char* src = p + payload_start + offset;
    for (int64_t i = 0; i < numel; ++i) t.at(i) = static_cast<double>(get_f32_le(src + i * 4));
    out.emplace(it.key(), std::move(t));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CheckpointError(CheckpointError::Kind::Io, "rename failed for " + path);
}

}  // namespace

void checkpoint_save(const ParamStore& store, const std::string& path) {
  write_file_atomic(path, serialize(store.params));
}

ParamStore checkpoint_load(const std::string& path) {
  ParamStore store;
  store.params = deserialize(read_file(path), path);
  return store;
}

void save_tensors(const std::map<std::string, Tensor>& tensors, const std::string& path) {
  write_file_atomic(path, serialize(tensors));
}

std::map<std::string, Tensor> load_tensors(const std::string& path) {
  return deserialize(read_file(path), path);
}

std::string bytes_hash_hex(const std::string& bytes) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string file_hash_hex(const std::string& path) { return bytes_hash_hex(read_file(path)); }

}  // namespace dialoflow::nn
