#include "pacg/heatmap.hpp"

#include <cmath>
#include <fstream>

#include "pacg/image.hpp"
#include "pacg/text.hpp"

namespace pacg {

std::array<Heatmap, 3> fused_heatmaps(const Model& model, const Tensor& rgb_img,
                                      const Tensor& ir_img) {
  NoGradGuard no_grad;
  const FusedPyramid fp = model.fuse(model.backbone_forward(rgb_img, ir_img));
  std::array<Heatmap, 3> out;
  for (int k = 0; k < 3; ++k) {
    const Tensor& level = fp.levels[k];
    const Shape s = level.shape();
    Heatmap& hm = out[k];
    hm.h = s.h;
    hm.w = s.w;
    hm.magnitude.resize(static_cast<size_t>(s.h) * s.w);
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        double acc = 0;
        for (int c = 0; c < s.c; ++c) {
          const double v = level.at(0, c, i, j);
          acc += v * v;
        }
        hm.magnitude[static_cast<size_t>(i) * s.w + j] = std::sqrt(acc);
      }
    hm.min = hm.magnitude[0];
    hm.max = hm.magnitude[0];
    for (double v : hm.magnitude) {
      hm.min = std::min(hm.min, v);
      hm.max = std::max(hm.max, v);
    }
  }
  return out;
}

void write_heatmap_pgm(const std::string& path, const Heatmap& hm) {
  ImageU8 img;
  img.width = hm.w;
  img.height = hm.h;
  img.channels = 1;
  img.pixels.resize(hm.magnitude.size());
  const double span = hm.max - hm.min;
  for (size_t i = 0; i < hm.magnitude.size(); ++i) {
    const double norm = span > 0 ? (hm.magnitude[i] - hm.min) / span : 0.0;
    img.pixels[i] = static_cast<uint8_t>(std::lround(norm * 255.0));
  }
  write_pgm(path, img);
}

void write_heatmap_csv(const std::string& path, const Heatmap& hm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (int i = 0; i < hm.h; ++i) {
    for (int j = 0; j < hm.w; ++j) {
      if (j) out << ',';
      out << fmt_double(hm.magnitude[static_cast<size_t>(i) * hm.w + j]);
    }
    out << '\n';
  }
}

}  // namespace pacg
