#pragma once

#include <string>
#include <vector>

namespace fsw {

std::string sha256_hex(const void* data, size_t n);
std::string sha256_hex(const std::string& s);
/// Digest of a file's bytes. Throws MissingFile when unreadable.
std::string sha256_file(const std::string& path);

}  // namespace fsw
