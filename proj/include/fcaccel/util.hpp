#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>

#include "json.hpp"

namespace fcaccel {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value);

// Unbiased draw from [0, n) using raw engine output, so results do not
// depend on the standard library's distribution implementation.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string_view trim(std::string_view s) noexcept;

}  // namespace fcaccel
