#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pacg {

// Interleaved 8-bit raster; channels is 3 (PPM) or 1 (PGM).
struct ImageU8 {
  int width = 0, height = 0, channels = 1;
  std::vector<uint8_t> pixels;
};

void write_ppm(const std::string& path, const ImageU8& img);  // binary P6
ImageU8 read_ppm(const std::string& path);
void write_pgm(const std::string& path, const ImageU8& img);  // binary P5

}  // namespace pacg
