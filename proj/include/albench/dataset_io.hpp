#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifdef ALBENCH_HAVE_PNG
#include <png.h>
#endif

#include "albench/core.hpp"
#include "albench/random.hpp"

namespace albench {

namespace fs = std::filesystem;

/// Pool split and the held-out evaluation split; the latter never enters U.
struct Split {
  Dataset train;
  Dataset test;
};

// ---------------------------------------------------------------------------
// Synthetic generators

/// Isotropic Gaussian clusters with centres on a scaled simplex-like layout.
inline Dataset make_blobs(std::size_t n, int num_classes, int dim, double spread, std::uint64_t seed) {
  require(num_classes > 0 && dim > 0, ErrorCode::config, "blobs need positive class count and dimension");
  Rng centre_rng(derive_seed(seed, 0));
  std::vector<std::vector<double>> centres(static_cast<std::size_t>(num_classes), std::vector<double>(dim));
  for (auto& c : centres) {
    for (auto& v : c) v = centre_rng.uniform(-6.0, 6.0);
  }
  Rng rng(derive_seed(seed, 1));
  Dataset d;
  d.num_classes = num_classes;
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    std::vector<double> x(dim);
    for (int k = 0; k < dim; ++k) x[k] = centres[cls][k] + spread * rng.normal();
    d.features.push_back(std::move(x));
    d.labels.push_back(cls);
  }
  return d;
}

/// Two interleaved half circles: class 0 on the upper unit arc, class 1 on
/// the lower arc shifted by (1, 0.5); Gaussian noise of scale `noise`.
inline Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 2);
    const double t = std::numbers::pi * rng.uniform();
    double x = cls == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double y = cls == 0 ? std::sin(t) : 0.5 - std::sin(t);
    x += noise * rng.normal();
    y += noise * rng.normal();
    d.features.push_back({x, y});
    d.labels.push_back(cls);
  }
  return d;
}

/// Base colour of a class in the synthetic segmentation rasters.
inline std::array<float, 3> class_colour(ClassId c) {
  const auto bit = [c](int b) { return ((c >> b) & 1) != 0 ? 0.8f : 0.2f; };
  const float shade = 0.1f * static_cast<float>((c / 8) % 3);
  return {bit(0) - shade, bit(1) + shade, bit(2)};
}

/// Images of random rectangles and ellipses on class-0 background; pixel
/// colour is the class colour plus Gaussian noise, clamped to [0, 1].
inline Dataset make_seg_blobs(std::size_t n, int width, int height, int num_classes, std::uint64_t seed,
                              double noise = 0.1) {
  require(num_classes >= 2 && width > 0 && height > 0, ErrorCode::config, "invalid segmentation blob shape");
  Rng rng(seed);
  Dataset d;
  d.task = Task::segmentation;
  d.num_classes = num_classes;
  for (std::size_t i = 0; i < n; ++i) {
    LabelMask m(width, height, 0);
    const int shapes = 1 + static_cast<int>(rng.below(3));
    for (int s = 0; s < shapes; ++s) {
      const int cls = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(num_classes - 1)));
      const double cx = rng.uniform(0, width);
      const double cy = rng.uniform(0, height);
      const double rx = rng.uniform(2.0, std::max(2.5, width / 3.0));
      const double ry = rng.uniform(2.0, std::max(2.5, height / 3.0));
      const bool ellipse = rng.below(2) == 0;
      for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
          const double dx = (c + 0.5 - cx) / rx;
          const double dy = (r + 0.5 - cy) / ry;
          if (ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0) m.set(r, c, cls);
        }
      }
    }
    Image im{width, height, 3, std::vector<float>(static_cast<std::size_t>(width) * height * 3)};
    for (std::size_t p = 0; p < m.size(); ++p) {
      const auto col = class_colour(m.pixels[p]);
      for (int ch = 0; ch < 3; ++ch) {
        im.values[p * 3 + ch] = std::clamp(col[ch] + static_cast<float>(noise * rng.normal()), 0.0f, 1.0f);
      }
    }
    d.images.push_back(std::move(im));
    d.masks.push_back(std::move(m));
  }
  return d;
}

// ---------------------------------------------------------------------------
// CSV: header feature_0,...,feature_{d-1},target

inline Dataset read_csv_dataset(const fs::path& path, int num_classes = 0) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::io, path.string() + " is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
  }
  require(header.size() >= 2 && header.back() == "target", ErrorCode::io,
          path.string() + ": header must end with 'target'");
  for (std::size_t k = 0; k + 1 < header.size(); ++k) {
    require(header[k] == "feature_" + std::to_string(k), ErrorCode::io,
            path.string() + ": expected column feature_" + std::to_string(k));
  }
  Dataset d;
  int max_label = -1;
  for (std::size_t row = 2; std::getline(in, line); ++row) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> x;
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        x.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(ErrorCode::io, path.string() + ":" + std::to_string(row) + ": not a number: '" + cell + "'");
      }
    }
    require(x.size() == header.size(), ErrorCode::io, path.string() + ":" + std::to_string(row) + ": wrong cell count");
    const double t = x.back();
    require(t >= 0 && t == std::floor(t), ErrorCode::io,
            path.string() + ":" + std::to_string(row) + ": target must be a non-negative integer");
    x.pop_back();
    d.labels.push_back(static_cast<ClassId>(t));
    max_label = std::max(max_label, d.labels.back());
    d.features.push_back(std::move(x));
  }
  d.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  return d;
}

inline void write_csv_dataset(const Dataset& d, const fs::path& path) {
  require(d.task == Task::classification, ErrorCode::invalid_argument, "CSV export is for classification sets");
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write " + path.string());
  out.precision(17);
  for (std::size_t k = 0; k < d.feature_dim(); ++k) out << "feature_" << k << ',';
  out << "target\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.features[i]) out << v << ',';
    out << d.labels[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Netpbm (binary P5 / P6) and PNG

namespace detail {

inline int pnm_int(std::istream& in) {
  int c = in.peek();
  while (c == '#' || std::isspace(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int v = -1;
  in >> v;
  return v;
}

struct Pnm {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

inline Pnm read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  require(magic == "P5" || magic == "P6", ErrorCode::io, path.string() + ": only binary P5/P6 is supported");
  Pnm p;
  p.channels = magic == "P5" ? 1 : 3;
  p.width = pnm_int(in);
  p.height = pnm_int(in);
  const int maxval = pnm_int(in);
  require(p.width > 0 && p.height > 0 && maxval == 255, ErrorCode::io, path.string() + ": bad header");
  in.get();
  p.data.resize(static_cast<std::size_t>(p.width) * p.height * p.channels);
  in.read(reinterpret_cast<char*>(p.data.data()), static_cast<std::streamsize>(p.data.size()));
  require(in.gcount() == static_cast<std::streamsize>(p.data.size()), ErrorCode::io, path.string() + ": truncated");
  return p;
}

#ifdef ALBENCH_HAVE_PNG
/// 8-bit grey or palette PNG; palette images yield raw palette indices.
inline Pnm read_png_indices(const fs::path& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  require(fp != nullptr, ErrorCode::io, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail(ErrorCode::io, path.string() + ": PNG decode failed");
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const auto colour = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth < 8) png_set_packing(png);
  const bool indexed = colour == PNG_COLOR_TYPE_PALETTE || colour == PNG_COLOR_TYPE_GRAY;
  png_read_update_info(png, info);
  Pnm p;
  p.width = static_cast<int>(png_get_image_width(png, info));
  p.height = static_cast<int>(png_get_image_height(png, info));
  p.channels = static_cast<int>(png_get_channels(png, info));
  const bool ok = indexed && depth <= 8 && p.channels == 1;
  if (ok) {
    p.data.resize(static_cast<std::size_t>(p.width) * p.height);
    std::vector<png_bytep> rows(static_cast<std::size_t>(p.height));
    for (int r = 0; r < p.height; ++r) rows[r] = p.data.data() + static_cast<std::size_t>(r) * p.width;
    png_read_image(png, rows.data());
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  require(ok, ErrorCode::io, path.string() + ": mask PNG must be 8-bit grey or palette");
  return p;
}
#endif

}  // namespace detail

/// 8-bit mask from .pgm, or from .png when built with libpng.
inline LabelMask read_mask(const fs::path& path, std::optional<ClassId> void_id = std::nullopt) {
  detail::Pnm p;
  if (path.extension() == ".png") {
#ifdef ALBENCH_HAVE_PNG
    p = detail::read_png_indices(path);
#else
    fail(ErrorCode::io, "built without PNG support: " + path.string());
#endif
  } else {
    p = detail::read_pnm(path);
    require(p.channels == 1, ErrorCode::io, path.string() + ": mask must be single-channel");
  }
  LabelMask m(p.width, p.height, 0, void_id);
  m.pixels = std::move(p.data);
  return m;
}

inline void write_mask(const LabelMask& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write " + path.string());
  out << "P5\n" << m.width << ' ' << m.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(m.pixels.data()), static_cast<std::streamsize>(m.pixels.size()));
}

inline Image read_image(const fs::path& path) {
  const auto p = detail::read_pnm(path);
  Image im{p.width, p.height, p.channels, std::vector<float>(p.data.size())};
  std::transform(p.data.begin(), p.data.end(), im.values.begin(), [](std::uint8_t v) { return v / 255.0f; });
  return im;
}

inline void write_image(const Image& im, const fs::path& path) {
  require(im.channels == 1 || im.channels == 3, ErrorCode::invalid_argument, "PNM output needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write " + path.string());
  out << (im.channels == 1 ? "P5\n" : "P6\n") << im.width << ' ' << im.height << "\n255\n";
  for (float v : im.values) out.put(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
}

/// Mask files (.pgm, .png) of a directory in lexicographic order.
inline std::vector<fs::path> list_mask_files(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::io, dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".png")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<LabelMask> read_mask_dir(const fs::path& dir, std::optional<ClassId> void_id = std::nullopt) {
  std::vector<LabelMask> out;
  for (const auto& p : list_mask_files(dir)) out.push_back(read_mask(p, void_id));
  return out;
}

/// Segmentation split from paired directories: images/<stem>.ppm|.pgm and
/// masks/<stem>.pgm|.png.
inline Dataset read_segmentation_dir(const fs::path& images, const fs::path& masks, int num_classes,
                                     std::optional<ClassId> void_id) {
  Dataset d;
  d.task = Task::segmentation;
  d.num_classes = num_classes;
  for (const auto& mp : list_mask_files(masks)) {
    fs::path ip;
    for (const char* ext : {".ppm", ".pgm"}) {
      const auto cand = images / (mp.stem().string() + ext);
      if (fs::exists(cand)) ip = cand;
    }
    require(!ip.empty(), ErrorCode::io, "no image for mask " + mp.string());
    d.images.push_back(read_image(ip));
    d.masks.push_back(read_mask(mp, void_id));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Config-driven loading

/// `cfg.kind` is one of blobs, two_moons, seg_blobs, csv, seg_dir.
inline Split load_split(const Json& cfg, const fs::path& base = {}) {
  const auto kind = cfg.value("kind", std::string{});
  auto path = [&](const std::string& key) {
    require(cfg.contains(key), ErrorCode::config, "dataset." + key + " is required for kind '" + kind + "'");
    fs::path p = cfg.at(key).get<std::string>();
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  const auto seed = cfg.value("seed", std::uint64_t{0});
  const auto n_train = cfg.value("train_size", std::size_t{500});
  const auto n_test = cfg.value("test_size", std::size_t{500});
  Split s;
  if (kind == "blobs") {
    const int k = cfg.value("num_classes", 3);
    const int dim = cfg.value("dim", 2);
    const double spread = cfg.value("spread", 1.0);
    // One generator call so both splits share centres.
    auto all = make_blobs(n_train + n_test, k, dim, spread, seed);
    s.train.num_classes = s.test.num_classes = k;
    for (std::size_t i = 0; i < all.size(); ++i) {
      auto& dst = i < n_train ? s.train : s.test;
      dst.features.push_back(std::move(all.features[i]));
      dst.labels.push_back(all.labels[i]);
    }
  } else if (kind == "two_moons") {
    const double noise = cfg.value("noise", 0.1);
    s.train = make_two_moons(n_train, noise, derive_seed(seed, 0));
    s.test = make_two_moons(n_test, noise, derive_seed(seed, 1));
  } else if (kind == "seg_blobs") {
    const int k = cfg.value("num_classes", 4);
    const int w = cfg.value("width", 16);
    const int h = cfg.value("height", 16);
    s.train = make_seg_blobs(n_train, w, h, k, derive_seed(seed, 0));
    s.test = make_seg_blobs(n_test, w, h, k, derive_seed(seed, 1));
  } else if (kind == "csv") {
    const int k = cfg.value("num_classes", 0);
    s.train = read_csv_dataset(path("train"), k);
    s.test = read_csv_dataset(path("test"), k);
    s.train.num_classes = s.test.num_classes = std::max(s.train.num_classes, s.test.num_classes);
  } else if (kind == "seg_dir") {
    require(cfg.contains("num_classes"), ErrorCode::config, "dataset.num_classes is required for seg_dir");
    const int k = cfg.at("num_classes").get<int>();
    std::optional<ClassId> void_id;
    if (cfg.contains("void_id")) void_id = cfg.at("void_id").get<int>();
    s.train = read_segmentation_dir(path("train_images"), path("train_masks"), k, void_id);
    s.test = read_segmentation_dir(path("test_images"), path("test_masks"), k, void_id);
  } else {
    fail(ErrorCode::config, "unknown dataset kind '" + kind + "'");
  }
  for (const auto* d : {&s.train, &s.test}) {
    const auto v = validate_dataset(*d);
    if (!v.empty()) {
      fail(ErrorCode::config, "dataset invalid (" + std::to_string(v.size()) + " violations), first: " + v[0].message);
    }
  }
  require(s.train.size() > 0 && s.test.size() > 0, ErrorCode::config, "dataset splits must be non-empty");
  return s;
}

}  // namespace albench
