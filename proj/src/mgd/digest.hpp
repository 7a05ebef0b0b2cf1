#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace mgd {

using Digest256 = std::array<std::uint8_t, 32>;

Digest256 sha256(std::span<const std::uint8_t> bytes);
Digest256 sha256_file(const std::filesystem::path& path);

std::string to_hex(std::span<const std::uint8_t> bytes);
Digest256 digest_from_hex(const std::string& hex);

}  // namespace mgd
