#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ciss {

struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0; // 1 or 3
  std::vector<uint8_t> pixels; // row-major, interleaved
};

void write_png(const std::filesystem::path& path, const ImageU8& img);
ImageU8 read_png(const std::filesystem::path& path);

} // namespace ciss
