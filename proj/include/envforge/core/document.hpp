#pragma once

// Structured payload documents and the hashing helpers built on their
// canonical serialization.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace envforge {

// nlohmann::json keeps object keys in a std::map, so dump() already emits
// keys in byte-wise alphabetical order.
using Document = nlohmann::json;

// Compact UTF-8 serialization with sorted keys; byte-comparable across runs.
std::string canonical_dump(const Document& doc);

// Parses text into a Document, throwing std::invalid_argument on malformed input.
Document parse_document(std::string_view text);

// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

// 64-bit FNV-1a followed by a splitmix64 finalizer.
std::uint64_t hash64(std::string_view bytes);

// The top bit of a base seed names a seed namespace (train vs. validation)
// and is carried into every seed derived from it.
inline constexpr std::uint64_t kSeedNamespaceBit = std::uint64_t{1} << 63;

// Per-instance seed derived from (env_id, difficulty, index, base_seed).
std::uint64_t derive_instance_seed(std::string_view env_id, int difficulty,
                                   std::uint64_t index, std::uint64_t base_seed);

std::string hex64(std::uint64_t value);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace envforge
