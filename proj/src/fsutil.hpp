#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>

#include "fcomm/msgcore.hpp"

namespace fcomm::detail {

/// Writes `head` then `body` to `path.tmp` and renames it onto `path`.
/// Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> head,
                       std::span<const std::byte> body);

/// Creates an empty file; fails with StaleMessage if it already exists.
void create_lock(const std::filesystem::path& path);

Bytes read_file(const std::filesystem::path& path);

/// Removes `path` if present; a missing file is not an error.
void remove_quietly(const std::filesystem::path& path) noexcept;

[[noreturn]] void throw_io(const std::string& what, int err);

}  // namespace fcomm::detail
