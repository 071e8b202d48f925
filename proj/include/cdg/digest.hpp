#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace cdg {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);

/// Per-request seed: hash(run_seed, question_id, role, stage indices).
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view question_id, std::string_view role,
                          Parts... indices) {
  std::uint64_t h = splitmix64(run_seed);
  h = fnv1a64(question_id, h);
  h = fnv1a64(role, splitmix64(h));
  ((h = splitmix64(h ^ static_cast<std::uint64_t>(indices))), ...);
  return h;
}

/// Uniform double in [0,1) from a seed and a draw index.
double unit_uniform(std::uint64_t seed, std::uint64_t index);

}  // namespace cdg
