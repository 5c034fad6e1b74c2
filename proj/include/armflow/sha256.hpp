#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace armflow {

// Minimal SHA-256 (FIPS 180-4), used for freeze integrity and code hashes.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, size_t len);
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::string hex_digest();  // finalizes; object must not be reused afterwards

  static std::string of(const void* data, size_t len);
  static std::string of_string(const std::string& s) { return of(s.data(), s.size()); }
  static std::string of_file(const std::string& path);

 private:
  void process_block(const uint8_t* p);
  uint32_t h_[8];
  uint8_t buf_[64];
  size_t buf_len_ = 0;
  uint64_t total_len_ = 0;
};

}  // namespace armflow
