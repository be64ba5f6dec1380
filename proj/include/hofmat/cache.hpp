#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hofmat/assembly.hpp"

namespace hofmat {

/// Binary cache of an assembled GeneralizedMatrix, little-endian throughout.
///
///   magic "HOFMATGM" | u32 version | f64 b | i32 dim
///   i32 R | i32 N_band | i32 K | f64 eps | i32 Q
///   u64 len + symbol id bytes | u64 field hash | u8 hermitian
///   u64 entry count, then per entry:
///     u64 row | u64 col | f64 re, im of the phase | m*m (re, im) column-major
///
/// Round trips are bit-exact.
void write_cache(const GeneralizedMatrix& h, const std::filesystem::path& path);
GeneralizedMatrix read_cache(const std::filesystem::path& path);

/// File name derived from (symbol id, field hash, b, params).
std::string cache_key(const std::string& symbol_id, std::uint64_t field_hash, double b, const TruncationParams& params);

}  // namespace hofmat
