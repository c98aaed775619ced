#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace saeaudit {

// 64-bit FNV-1a. Used for content-addressed stage caching and artifact
// identity, not for security.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(std::string_view s);

// Hex-encoded digest of a whole file. Throws IoError if unreadable.
std::string digest_file(const std::filesystem::path& path);
std::string digest_string(std::string_view s);

}  // namespace saeaudit
