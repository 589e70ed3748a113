#pragma once

#include <filesystem>
#include <functional>
#include <ostream>

namespace fbmxcov::io {

// Writes through a temporary file in the target directory and renames it over
// `target`, so readers never see a partial file. The temporary is removed if
// `write` throws.
void atomic_write(const std::filesystem::path& target, const std::function<void(std::ostream&)>& write,
                  bool binary = false);

}  // namespace fbmxcov::io
