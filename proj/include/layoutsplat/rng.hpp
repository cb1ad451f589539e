// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace layoutsplat {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// Output block i of a stream is philox(key = seed, counter = (i, stream)).
/// Identical (seed, stream, position) triples produce identical numbers on
/// every platform, so any draw can be regenerated without replaying the
/// draws before it.
class Philox4x32 {
  public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter counter, Key key);

    Philox4x32(std::uint64_t seed, std::uint64_t stream);

    std::uint32_t next_u32();
    /// Uniform in the open interval (0, 1), 53 bits of resolution.
    double next_open01();
    /// Standard normal via Box-Muller.
    double next_normal();

    std::uint64_t position() const noexcept { return block_index_; }

  private:
    void refill();

    Key key_{};
    std::uint64_t stream_ = 0;
    std::uint64_t block_index_ = 0;
    Counter buffer_{};
    int used_ = 4;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ull);

/// SplitMix64 finalizer, used to derive independent stream ids.
std::uint64_t mix64(std::uint64_t x);

} // namespace layoutsplat
