#pragma once

#include <stdexcept>
#include <string>

#include "dialoflow/param_store.hpp"

namespace dialoflow::nn {

// Errors raised by the DLSP1 container reader/writer. `kind` distinguishes
// the failure classes the format promises to tell apart.
struct CheckpointError : std::runtime_error {
  enum class Kind { Io, CorruptHeader, ShapeMismatch, TruncatedPayload };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// DLSP1 container: 8-byte magic "DLSP0001", u64 LE header length, UTF-8 JSON
// header mapping name -> {dtype:"f32", shape:[...], offset, nbytes}, then a
// raw little-endian f32 payload. Offsets are payload-relative and 64-byte
// aligned. Values are stored at f32 precision; loading widens back to f64.
void checkpoint_save(const ParamStore& store, const std::string& path);
ParamStore checkpoint_load(const std::string& path);

// Same container for standalone named tensors (features, codebooks, audio).
void save_tensors(const std::map<std::string, Tensor>& tensors, const std::string& path);
std::map<std::string, Tensor> load_tensors(const std::string& path);

// FNV-1a of a file's bytes, as a 16-hex-digit string. Stable across runs.
std::string file_hash_hex(const std::string& path);
std::string bytes_hash_hex(const std::string& bytes);

}  // namespace dialoflow::nn
