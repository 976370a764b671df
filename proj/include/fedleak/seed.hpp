/*
 * Copyright 2026 The fedleak Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <bit>
#include <concepts>
#include <cstdint>
#include <random>
#include <string_view>

namespace fedleak {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t seed_key(std::integral auto v) {
  return static_cast<std::uint64_t>(v);
}
inline std::uint64_t seed_key(double v) { return std::bit_cast<std::uint64_t>(v); }

/// Counter-based sub-seed: splitmix64 chained over the master seed, the
/// FNV-1a hash of the purpose label, and each index in order. Sub-seeds
/// depend only on their own key, so new sweep points leave existing ones
/// untouched.
template <typename... Keys>
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                          Keys... keys) {
  std::uint64_t h = splitmix64(master ^ fnv1a64(purpose));
  ((h = splitmix64(h ^ seed_key(keys))), ...);
  return h;
}

using Rng = std::mt19937_64;

}  // namespace fedleak
