#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace relict {

/// Incremental 64-bit FNV-1a. Stable across platforms; used for checksums and
/// config fingerprints, not for security.
class Fnv1a {
 public:
  void update(const void* data, std::size_t size);
  void update(std::string_view s) { update(s.data(), s.size()); }
  template <typename T>
  void update_values(std::span<const T> values) {
    update(values.data(), values.size_bytes());
  }
  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t v);
std::uint64_t fnv1a(std::string_view s);

}  // namespace relict
