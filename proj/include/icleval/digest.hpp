#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace icleval {

// Incremental SHA-256 producing lowercase hex. Used for cache keys and
// provenance digests, so output must be stable across platforms and runs.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::string_view bytes);
  // Writes the length first so that ("ab","c") and ("a","bc") differ.
  Sha256& update_field(std::string_view bytes);
  std::string hex_digest();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view bytes);

// 64-bit FNV-1a. Cheap stable hash for the mock backend.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace icleval
