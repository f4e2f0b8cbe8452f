// Copyright 2026 The fdasim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fdasim {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Key identifying one independent random stream. A stream is a pure function
// of (seed, name, counters), so the order in which streams are created never
// changes the numbers a stream produces.
class StreamKey {
 public:
  constexpr explicit StreamKey(std::uint64_t seed) : state_(detail::splitmix64(seed)) {}

  [[nodiscard]] constexpr StreamKey with(std::string_view name) const {
    return StreamKey(state_, detail::fnv1a(name));
  }
  [[nodiscard]] constexpr StreamKey with(std::uint64_t counter) const {
    return StreamKey(state_, detail::splitmix64(counter + 0x632be59bd9b4e019ULL));
  }
  [[nodiscard]] constexpr std::uint64_t value() const { return state_; }

  [[nodiscard]] std::mt19937_64 engine() const {
    std::seed_seq seq{static_cast<std::uint32_t>(state_), static_cast<std::uint32_t>(state_ >> 32)};
    return std::mt19937_64(seq);
  }

 private:
  constexpr StreamKey(std::uint64_t parent, std::uint64_t salt)
      : state_(detail::splitmix64(parent ^ detail::splitmix64(salt))) {}

  std::uint64_t state_;
};

}  // namespace fdasim
