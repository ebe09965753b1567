#pragma once

#include <array>
#include <string>

#include "pacg/model.hpp"

namespace pacg {

// Per-pixel channel-L2 magnitude of one fused pyramid level.
struct Heatmap {
  int h = 0, w = 0;
  std::vector<double> magnitude;  // row-major
  double min = 0, max = 0;
};

std::array<Heatmap, 3> fused_heatmaps(const Model& model, const Tensor& rgb_img,
                                      const Tensor& ir_img);

// 8-bit min-max normalized PGM (all-zero when the map is constant).
void write_heatmap_pgm(const std::string& path, const Heatmap& hm);
// Raw values, one CSV row per image row.
void write_heatmap_csv(const std::string& path, const Heatmap& hm);

}  // namespace pacg
