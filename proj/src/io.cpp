#include "fbmxcov/io.hpp"

#include <atomic>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>

#include <unistd.h>

namespace fbmxcov::io {

void atomic_write(const std::filesystem::path& target, const std::function<void(std::ostream&)>& write,
                  bool binary) {
  static std::atomic<unsigned> counter{0};
  const auto dir = target.has_parent_path() ? target.parent_path() : std::filesystem::path(".");
  const auto tmp = dir / ("." + target.filename().string() + ".tmp." + std::to_string(::getpid()) + "." +
                          std::to_string(counter++));
  try {
    {
      std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
      if (!out) {
        throw std::runtime_error("cannot open " + tmp.string() + " for writing");
      }
      write(out);
      out.flush();
      if (!out) {
        throw std::runtime_error("write to " + tmp.string() + " failed");
      }
    }
    std::filesystem::rename(tmp, target);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

}  // namespace fbmxcov::io
