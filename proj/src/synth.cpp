#include "pacg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pacg/image.hpp"
#include "pacg/rng.hpp"
#include "pacg/text.hpp"

namespace fs = std::filesystem;

namespace pacg {

void SynthConfig::validate() const {
  if (image_size < 32) throw std::invalid_argument("synth: image_size must be >= 32");
  if (num_classes < 1) throw std::invalid_argument("synth: num_classes must be >= 1");
  if (objects_min < 0 || objects_max < objects_min)
    throw std::invalid_argument("synth: bad object count range");
  if (object_size_min < 4 || object_size_max < object_size_min ||
      object_size_max > image_size)
    throw std::invalid_argument("synth: bad object size range");
  const double psum = p_both + p_rgb_only + p_ir_only;
  if (p_both < 0 || p_rgb_only < 0 || p_ir_only < 0 || std::abs(psum - 1.0) > 1e-9)
    throw std::invalid_argument("synth: visibility probabilities must be >= 0 and sum to 1");
  if (clutter < 0 || clutter_count < 0 || noise_sigma < 0)
    throw std::invalid_argument("synth: clutter/noise must be non-negative");
}

double class_intensity(int class_id, int num_classes, bool ir) {
  if (num_classes <= 1) return 0.9;
  // opposed intensity ramps: a class bright in RGB is dim in IR and vice
  // versa, so class identity is carried by the modality pair, not by either
  // image alone
  const double t = static_cast<double>(class_id) / (num_classes - 1);
  return ir ? 0.6 + 0.3 * t : 0.9 - 0.3 * t;
}

namespace {

struct Raster {
  int size = 0;
  std::vector<double> v;  // single plane; replicated to 3 channels on export
  explicit Raster(int s, double fill) : size(s), v(static_cast<size_t>(s) * s, fill) {}
  void fill_rect(int x0, int y0, int w, int h, double value) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) v[static_cast<size_t>(y) * size + x] = value;
  }
  void add_rect(int x0, int y0, int w, int h, double delta) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) v[static_cast<size_t>(y) * size + x] += delta;
  }
};

double rect_iou(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh) {
  const int ix = std::max(ax, bx), iy = std::max(ay, by);
  const int ix2 = std::min(ax + aw, bx + bw), iy2 = std::min(ay + ah, by + bh);
  const double inter = std::max(0, ix2 - ix) * static_cast<double>(std::max(0, iy2 - iy));
  const double uni = static_cast<double>(aw) * ah + static_cast<double>(bw) * bh - inter;
  return uni > 0 ? inter / uni : 0.0;
}

Tensor raster_to_tensor(const Raster& r) {
  const int s = r.size;
  std::vector<double> data(static_cast<size_t>(3) * s * s);
  for (int c = 0; c < 3; ++c)
    for (size_t i = 0; i < r.v.size(); ++i)
      data[static_cast<size_t>(c) * s * s + i] = std::clamp(r.v[i], 0.0, 1.0);
  return Tensor::from_vector({1, 3, s, s}, std::move(data));
}

ImageU8 tensor_to_image(const Tensor& t) {
  const Shape s = t.shape();
  ImageU8 img;
  img.width = s.w;
  img.height = s.h;
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(s.w) * s.h * 3);
  const auto& v = t.values();
  const size_t plane = static_cast<size_t>(s.h) * s.w;
  for (size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c)
      img.pixels[p * 3 + c] = static_cast<uint8_t>(
          std::lround(std::clamp(v[c * plane + p], 0.0, 1.0) * 255.0));
  return img;
}

Tensor image_to_tensor(const ImageU8& img) {
  std::vector<double> data(static_cast<size_t>(3) * img.width * img.height);
  const size_t plane = static_cast<size_t>(img.width) * img.height;
  for (size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c)
      data[static_cast<size_t>(c) * plane + p] = img.pixels[p * 3 + c] / 255.0;
  return Tensor::from_vector({1, 3, img.height, img.width}, std::move(data));
}

std::string scene_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return buf;
}

}  // namespace

std::vector<Scene> synth_generate(const SynthConfig& cfg, int count, SynthStats* stats) {
  cfg.validate();
  if (count < 0) throw std::invalid_argument("synth: count must be >= 0");
  const int S = cfg.image_size;
  SynthStats local;
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<size_t>(count));

  for (int si = 0; si < count; ++si) {
    Rng rng(hash_name(cfg.seed, "scene." + std::to_string(si)));
    Raster rgb(S, kBackgroundLevel), ir(S, kBackgroundLevel);

    for (Raster* plane : {&rgb, &ir}) {
      for (int k = 0; k < cfg.clutter_count; ++k) {
        const int w = rng.uniform_int(4, std::min(16, S));
        const int h = rng.uniform_int(4, std::min(16, S));
        const int x0 = rng.uniform_int(0, S - w);
        const int y0 = rng.uniform_int(0, S - h);
        plane->add_rect(x0, y0, w, h, rng.uniform(-cfg.clutter, cfg.clutter));
      }
    }

    Scene scene;
    const int want = rng.uniform_int(cfg.objects_min, cfg.objects_max);
    local.requested_objects += want;
    struct Placed {
      int x0, y0, w, h;
    };
    std::vector<Placed> placed;
    for (int oi = 0; oi < want; ++oi) {
      const int cls = rng.uniform_int(0, cfg.num_classes - 1);
      const int w = std::max(4, static_cast<int>(std::lround(
                                    rng.uniform(cfg.object_size_min, cfg.object_size_max))));
      const int h = std::max(4, static_cast<int>(std::lround(
                                    rng.uniform(cfg.object_size_min, cfg.object_size_max))));
      const double u = rng.uniform();
      const bool in_rgb = u < cfg.p_both + cfg.p_rgb_only;
      const bool in_ir = u < cfg.p_both || u >= cfg.p_both + cfg.p_rgb_only;

      bool ok = false;
      int x0 = 0, y0 = 0;
      for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
        x0 = rng.uniform_int(0, S - w);
        y0 = rng.uniform_int(0, S - h);
        ok = true;
        for (const auto& p : placed)
          if (rect_iou(x0, y0, w, h, p.x0, p.y0, p.w, p.h) > 0.1) {
            ok = false;
            break;
          }
      }
      if (!ok) {
        local.placement_failures++;
        continue;
      }
      placed.push_back({x0, y0, w, h});
      local.placed_objects++;
      if (in_rgb) rgb.fill_rect(x0, y0, w, h, class_intensity(cls, cfg.num_classes, false));
      if (in_ir) ir.fill_rect(x0, y0, w, h, class_intensity(cls, cfg.num_classes, true));
      scene.boxes.push_back({cls, x0 + w / 2.0, y0 + h / 2.0, static_cast<double>(w),
                             static_cast<double>(h)});
    }

    if (cfg.noise_sigma > 0) {
      for (Raster* plane : {&rgb, &ir})
        for (auto& v : plane->v) v += rng.normal(0.0, cfg.noise_sigma);
    }
    scene.rgb = raster_to_tensor(rgb);
    scene.ir = raster_to_tensor(ir);
    scenes.push_back(std::move(scene));
  }
  if (stats) *stats = local;
  return scenes;
}

void write_split(const std::string& dir, const std::vector<Scene>& scenes,
                 const SynthConfig& cfg, const SynthStats& stats) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw std::runtime_error("cannot create split directory: " + dir);

  for (size_t i = 0; i < scenes.size(); ++i) {
    const std::string stem = scene_stem(static_cast<int>(i));
    write_ppm(dir + "/" + stem + "_rgb.ppm", tensor_to_image(scenes[i].rgb));
    write_ppm(dir + "/" + stem + "_ir.ppm", tensor_to_image(scenes[i].ir));
    std::ofstream lf(dir + "/" + stem + ".txt", std::ios::binary);
    if (!lf) throw std::runtime_error("cannot write labels in " + dir);
    for (const auto& b : scenes[i].boxes)
      lf << b.class_id << ' ' << fmt_double(b.cx) << ' ' << fmt_double(b.cy) << ' '
         << fmt_double(b.w) << ' ' << fmt_double(b.h) << '\n';
  }

  std::ofstream meta(dir + "/meta.txt", std::ios::binary);
  if (!meta) throw std::runtime_error("cannot write meta.txt in " + dir);
  meta << "image_size=" << cfg.image_size << '\n'
       << "num_classes=" << cfg.num_classes << '\n'
       << "objects_min=" << cfg.objects_min << '\n'
       << "objects_max=" << cfg.objects_max << '\n'
       << "object_size_min=" << fmt_double(cfg.object_size_min) << '\n'
       << "object_size_max=" << fmt_double(cfg.object_size_max) << '\n'
       << "p_both=" << fmt_double(cfg.p_both) << '\n'
       << "p_rgb_only=" << fmt_double(cfg.p_rgb_only) << '\n'
       << "p_ir_only=" << fmt_double(cfg.p_ir_only) << '\n'
       << "clutter=" << fmt_double(cfg.clutter) << '\n'
       << "clutter_count=" << cfg.clutter_count << '\n'
       << "noise_sigma=" << fmt_double(cfg.noise_sigma) << '\n'
       << "seed=" << cfg.seed << '\n'
       << "scene_count=" << scenes.size() << '\n'
       << "requested_objects=" << stats.requested_objects << '\n'
       << "placed_objects=" << stats.placed_objects << '\n'
       << "placement_failures=" << stats.placement_failures << '\n';
}

SplitData read_split(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a dataset directory: " + dir);
  SplitData out;

  std::ifstream meta(dir + "/meta.txt");
  if (!meta) throw std::runtime_error("missing meta.txt in " + dir);
  std::string line;
  while (std::getline(meta, line)) {
    auto t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw std::runtime_error("malformed meta.txt line: '" + line + "'");
    out.meta[std::string(t.substr(0, eq))] = std::string(t.substr(eq + 1));
  }
  if (!out.meta.count("num_classes") || !out.meta.count("image_size"))
    throw std::runtime_error("meta.txt missing num_classes/image_size in " + dir);
  out.num_classes = static_cast<int>(parse_int(out.meta.at("num_classes")));
  out.image_size = static_cast<int>(parse_int(out.meta.at("image_size")));

  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 4 && name.ends_with(".txt") && name != "meta.txt")
      stems.push_back(name.substr(0, name.size() - 4));
  }
  std::sort(stems.begin(), stems.end());

  for (const auto& stem : stems) {
    Scene scene;
    scene.rgb = image_to_tensor(read_ppm(dir + "/" + stem + "_rgb.ppm"));
    scene.ir = image_to_tensor(read_ppm(dir + "/" + stem + "_ir.ppm"));
    std::ifstream lf(dir + "/" + stem + ".txt");
    while (std::getline(lf, line)) {
      auto t = trim(line);
      if (t.empty()) continue;
      std::istringstream ls{std::string(t)};
      GtBoxPx b;
      std::string cxs, cys, ws, hs;
      if (!(ls >> b.class_id >> cxs >> cys >> ws >> hs))
        throw std::runtime_error("malformed label line in " + stem + ".txt: '" + line + "'");
      b.cx = parse_double(cxs);
      b.cy = parse_double(cys);
      b.w = parse_double(ws);
      b.h = parse_double(hs);
      if (b.class_id < 0 || b.class_id >= out.num_classes)
        throw std::runtime_error("label class out of range in " + stem + ".txt");
      scene.boxes.push_back(b);
    }
    out.scenes.push_back(std::move(scene));
  }
  return out;
}

}  // namespace pacg
