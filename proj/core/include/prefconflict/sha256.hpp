#pragma once

#include <string>
#include <string_view>

namespace prefconflict {

// Lowercase hex SHA-256 digest (OpenSSL-backed).
std::string sha256_hex(std::string_view data);

}  // namespace prefconflict
