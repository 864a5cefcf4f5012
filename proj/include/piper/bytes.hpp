#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <type_traits>
#include <string>

// Little-endian load/store helpers used by every on-disk and on-wire format.
namespace piper::le {

template <typename T>
inline void store(std::uint8_t* dst, T value) noexcept {
  static_assert(std::is_trivially_copyable_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    dst[i] = static_cast<std::uint8_t>(bits & 0xffu);
    if constexpr (sizeof(T) > 1) bits = static_cast<U>(bits >> 8);
  }
}

template <typename T>
inline T load(const std::uint8_t* src) noexcept {
  static_assert(std::is_trivially_copyable_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  U bits = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) {
    if constexpr (sizeof(T) > 1) bits = static_cast<U>(bits << 8);
    bits = static_cast<U>(bits | src[i]);
  }
  return std::bit_cast<T>(bits);
}

template <typename T>
inline void append(std::string& out, T value) {
  std::uint8_t buf[sizeof(T)];
  store(buf, value);
  out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

}  // namespace piper::le
