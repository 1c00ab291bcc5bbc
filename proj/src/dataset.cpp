#include "oob/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "oob/error.hpp"
#include "oob/png_io.hpp"
#include "oob/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace oob {

namespace {

json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error::ingestion("malformed JSON in " + path + ": " + e.what());
  }
  return doc;
}

std::string stem_of(const std::string& file) { return fs::path(file).stem().string(); }

}  // namespace

Dataset load_dataset(const std::string& root_path, const std::string& annotation_file) {
  const json doc = parse_json_file(annotation_file);
  if (!doc.contains("class_names") || !doc["class_names"].is_array())
    throw Error::validation("annotation document lacks class_names array");
  if (!doc.contains("images") || !doc["images"].is_array())
    throw Error::validation("annotation document lacks images array");

  Dataset ds;
  for (const auto& n : doc["class_names"]) ds.class_names.push_back(n.get<std::string>());
  ds.target_class = doc.value("target_class", 0);
  if (ds.target_class < 0 || ds.target_class >= static_cast<int>(ds.class_names.size()))
    throw Error::validation("target_class out of range");

  std::set<std::string> seen;
  int ref_h = -1, ref_w = -1;
  for (const auto& entry : doc["images"]) {
    const std::string file = entry.at("file").get<std::string>();
    Sample s;
    s.id = stem_of(file);
    if (!seen.insert(s.id).second) throw Error::validation("duplicate sample id " + s.id);

    const fs::path img_path = fs::path(root_path) / file;
    if (!fs::exists(img_path)) throw Error::ingestion("missing image for id " + s.id);
    s.image = read_png(img_path.string());
    const int h = s.image.dim(1), w = s.image.dim(2);
    if (ref_h < 0) {
      ref_h = h;
      ref_w = w;
    } else if (h != ref_h || w != ref_w) {
      throw Error::validation("image size mismatch for id " + s.id);
    }

    if (entry.contains("annotations")) {
      for (const auto& a : entry["annotations"]) {
        Annotation ann;
        const auto& b = a.at("box");
        if (!b.is_array() || b.size() != 4)
          throw Error::validation("box must have 4 entries for id " + s.id);
        ann.box = {b[0].get<Scalar>(), b[1].get<Scalar>(), b[2].get<Scalar>(),
                   b[3].get<Scalar>()};
        ann.class_id = a.at("class_id").get<int>();
        if (!ann.box.valid())
          throw Error::validation("degenerate box for id " + s.id);
        if (ann.box.x_min < 0 || ann.box.y_min < 0 || ann.box.x_max > w || ann.box.y_max > h)
          throw Error::validation("box outside image for id " + s.id);
        if (ann.class_id < 0 || ann.class_id >= static_cast<int>(ds.class_names.size()))
          throw Error::validation("class_id out of vocabulary for id " + s.id);
        s.annotations.push_back(ann);
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& root_path,
                  const std::string& annotation_file) {
  fs::create_directories(root_path);
  json doc;
  doc["class_names"] = dataset.class_names;
  doc["target_class"] = dataset.target_class;
  doc["images"] = json::array();
  for (const auto& s : dataset.samples) {
    const std::string file = s.id + ".png";
    write_png((fs::path(root_path) / file).string(), s.image);
    json entry;
    entry["file"] = file;
    entry["annotations"] = json::array();
    for (const auto& a : s.annotations) {
      json ja;
      ja["box"] = {a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max};
      ja["class_id"] = a.class_id;
      entry["annotations"].push_back(ja);
    }
    doc["images"].push_back(entry);
  }
  std::ofstream out(annotation_file);
  if (!out) throw Error::io("cannot write " + annotation_file);
  out << doc.dump(2) << "\n";
}

namespace {

struct Jitter {
  Scalar r, g, b;
};

void paint(Tensor& img, int x, int y, Scalar r, Scalar g, Scalar b) {
  img.at3(0, y, x) = r;
  img.at3(1, y, x) = g;
  img.at3(2, y, x) = b;
}

}  // namespace

void draw_octagon_sign(Tensor& img, Scalar cx, Scalar cy, Scalar e, Scalar jr, Scalar jg,
                       Scalar jb) {
  const int h = img.dim(1), w = img.dim(2);
  const Scalar diag = std::sqrt(2.0) * e;
  const Scalar ring = std::max<Scalar>(1.0, 0.16 * e);
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - e)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + e)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - e)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + e)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const Scalar dx = std::abs(x + 0.5 - cx);
      const Scalar dy = std::abs(y + 0.5 - cy);
      if (dx > e || dy > e || dx + dy > diag) continue;
      const Scalar margin =
          std::min({e - dx, e - dy, (diag - dx - dy) / std::sqrt(2.0)});
      if (margin < ring)
        paint(img, x, y, 0.93, 0.93, 0.92);
      else
        paint(img, x, y, 0.80 + jr, 0.09 + jg, 0.11 + jb);
    }
}

namespace {

void draw_distractor(Tensor& img, int cls, Scalar x0, Scalar y0, Scalar d, const Jitter& j) {
  const int h = img.dim(1), w = img.dim(2);
  const int px0 = std::max(0, static_cast<int>(std::floor(x0)));
  const int px1 = std::min(w - 1, static_cast<int>(std::ceil(x0 + d)));
  const int py0 = std::max(0, static_cast<int>(std::floor(y0)));
  const int py1 = std::min(h - 1, static_cast<int>(std::ceil(y0 + d)));
  for (int y = py0; y <= py1; ++y)
    for (int x = px0; x <= px1; ++x) {
      const Scalar px = x + 0.5, py = y + 0.5;
      if (px < x0 || px > x0 + d || py < y0 || py > y0 + d) continue;
      bool inside = false;
      if (cls == 1) {
        inside = true;
      } else if (cls == 2) {
        const Scalar t = (py - y0) / d;
        inside = std::abs(px - (x0 + 0.5 * d)) <= t * 0.5 * d;
      } else {
        const Scalar ddx = px - (x0 + 0.5 * d), ddy = py - (y0 + 0.5 * d);
        inside = ddx * ddx + ddy * ddy <= 0.25 * d * d;
      }
      if (!inside) continue;
      if (cls == 1)
        paint(img, x, y, 0.14 + j.r, 0.24 + j.g, 0.82 + j.b);
      else if (cls == 2)
        paint(img, x, y, 0.15 + j.r, 0.68 + j.g, 0.22 + j.b);
      else
        paint(img, x, y, 0.88 + j.r, 0.74 + j.g, 0.12 + j.b);
    }
}

}  // namespace

Dataset generate_synthetic_dataset(int n_samples, int height, int width, std::uint64_t seed) {
  if (n_samples < 0) throw Error::argument("n_samples must be non-negative");
  if (height < 32 || width < 32) throw Error::argument("image size must be at least 32x32");

  Dataset ds;
  ds.class_names = {"sign", "square", "triangle", "circle"};
  ds.target_class = 0;

  const Scalar base = std::min(height, width);
  for (int i = 0; i < n_samples; ++i) {
    Rng rng(stream_seed(seed, static_cast<std::uint64_t>(i)));
    Sample s;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%06d", i);
    s.id = buf;
    s.image = Tensor({3, height, width});

    // background: bilinear blend of four corner colors plus mild noise
    Scalar corner[4][3];
    for (auto& c : corner)
      for (auto& ch : c) ch = rng.uniform(0.15, 0.85);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const Scalar u = width > 1 ? static_cast<Scalar>(x) / (width - 1) : 0;
        const Scalar v = height > 1 ? static_cast<Scalar>(y) / (height - 1) : 0;
        for (int c = 0; c < 3; ++c) {
          Scalar val = (1 - v) * ((1 - u) * corner[0][c] + u * corner[1][c]) +
                       v * ((1 - u) * corner[2][c] + u * corner[3][c]);
          val += rng.uniform(-0.02, 0.02);
          s.image.at3(c, y, x) = std::clamp<Scalar>(val, 0, 1);
        }
      }

    // sign box with clear space beneath for trigger placement
    const Scalar size = rng.uniform(0.22 * base, 0.34 * base);
    const Scalar max_y0 = height - 2 - 2.2 * size;
    const Scalar x0 = rng.uniform(1.0, width - 1 - size);
    const Scalar y0 = rng.uniform(1.0, std::max<Scalar>(1.0 + 1e-9, max_y0));
    BoundingBox sign_box{x0, y0, x0 + size, y0 + size};

    const int n_distract = static_cast<int>(rng.uniform_int(3));
    for (int d = 0; d < n_distract; ++d) {
      const int cls = 1 + static_cast<int>(rng.uniform_int(3));
      const Scalar dsize = rng.uniform(0.12 * base, 0.22 * base);
      for (int attempt = 0; attempt < 20; ++attempt) {
        const Scalar dx0 = rng.uniform(1.0, width - 1 - dsize);
        const Scalar dy0 = rng.uniform(1.0, height - 1 - dsize);
        BoundingBox dbox{dx0, dy0, dx0 + dsize, dy0 + dsize};
        if (intersection_area(dbox, sign_box) > 0) continue;
        Jitter j{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
        draw_distractor(s.image, cls, dx0, dy0, dsize, j);
        s.annotations.push_back({dbox, cls});
        break;
      }
    }

    Jitter j{rng.uniform(-0.04, 0.04), rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03)};
    draw_octagon_sign(s.image, sign_box.center_x(), sign_box.center_y(), 0.5 * size, j.r, j.g,
                      j.b);
    s.annotations.push_back({sign_box, 0});

    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Tensor make_masked_image(const Sample& sample, int target_class, Scalar gray_value) {
  bool found = false;
  for (const auto& a : sample.annotations)
    if (a.class_id == target_class) found = true;
  if (!found) throw Error::argument("sample " + sample.id + " has no target-class annotation");

  Tensor out = sample.image;
  const int h = out.dim(1), w = out.dim(2);
  for (const auto& a : sample.annotations) {
    if (a.class_id != target_class) continue;
    for (int y = 0; y < h; ++y) {
      const Scalar cy = y + 0.5;
      if (cy < a.box.y_min || cy >= a.box.y_max) continue;
      for (int x = 0; x < w; ++x) {
        const Scalar cx = x + 0.5;
        if (cx < a.box.x_min || cx >= a.box.x_max) continue;
        for (int c = 0; c < 3; ++c) out.at3(c, y, x) = gray_value;
      }
    }
  }
  return out;
}

std::vector<std::vector<int>> split_batches(const Dataset& dataset, int batch_size,
                                            std::uint64_t seed) {
  if (batch_size <= 0) throw Error::argument("batch_size must be positive");
  const int n = static_cast<int>(dataset.samples.size());
  if (n == 0) throw Error::argument("cannot batch an empty dataset");

  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const int k = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[i], perm[k]);
  }

  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    batches.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return batches;
}

CocoConvertResult convert_coco_subset(const std::string& coco_json,
                                      const std::string& images_dir,
                                      const std::string& out_dir,
                                      const std::string& target_category,
                                      double train_fraction, std::uint64_t seed) {
  if (train_fraction < 0 || train_fraction > 1)
    throw Error::argument("train_fraction must be in [0,1]");
  const json doc = parse_json_file(coco_json);

  std::map<int, std::string> categories;
  for (const auto& c : doc.at("categories"))
    categories[c.at("id").get<int>()] = c.at("name").get<std::string>();
  std::vector<std::string> class_names;
  std::unordered_map<int, int> cat_to_class;
  int target_class = -1;
  for (const auto& [cid, name] : categories) {
    cat_to_class[cid] = static_cast<int>(class_names.size());
    if (name == target_category) target_class = static_cast<int>(class_names.size());
    class_names.push_back(name);
  }
  if (target_class < 0)
    throw Error::argument("category " + target_category + " not present in " + coco_json);

  struct ImageRec {
    std::string file;
    double w = 0, h = 0;
    std::vector<Annotation> anns;
  };
  std::map<int, ImageRec> images;
  for (const auto& im : doc.at("images")) {
    ImageRec rec;
    rec.file = im.at("file_name").get<std::string>();
    rec.w = im.at("width").get<double>();
    rec.h = im.at("height").get<double>();
    images[im.at("id").get<int>()] = std::move(rec);
  }

  CocoConvertResult result;
  for (const auto& a : doc.at("annotations")) {
    const int image_id = a.at("image_id").get<int>();
    auto it = images.find(image_id);
    if (it == images.end()) continue;
    const auto& bb = a.at("bbox");
    BoundingBox box{bb[0].get<Scalar>(), bb[1].get<Scalar>(),
                    bb[0].get<Scalar>() + bb[2].get<Scalar>(),
                    bb[1].get<Scalar>() + bb[3].get<Scalar>()};
    box.x_min = std::clamp<Scalar>(box.x_min, 0, it->second.w);
    box.x_max = std::clamp<Scalar>(box.x_max, 0, it->second.w);
    box.y_min = std::clamp<Scalar>(box.y_min, 0, it->second.h);
    box.y_max = std::clamp<Scalar>(box.y_max, 0, it->second.h);
    if (!box.valid()) {
      ++result.skipped_boxes;
      continue;
    }
    const auto cat = cat_to_class.find(a.at("category_id").get<int>());
    if (cat == cat_to_class.end()) {
      ++result.skipped_boxes;
      continue;
    }
    it->second.anns.push_back({box, cat->second});
  }

  std::vector<int> kept;
  for (const auto& [id, rec] : images) {
    bool has_target = false;
    for (const auto& a : rec.anns)
      if (a.class_id == target_class) has_target = true;
    if (!has_target) continue;
    if (!images_dir.empty() && !fs::exists(fs::path(images_dir) / rec.file))
      throw Error::ingestion("missing image file " + rec.file);
    kept.push_back(id);
  }

  Rng rng(seed);
  for (int i = static_cast<int>(kept.size()) - 1; i > 0; --i) {
    const int k = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(kept[i], kept[k]);
  }
  const int n_train =
      static_cast<int>(std::lround(train_fraction * static_cast<double>(kept.size())));

  auto emit = [&](const std::string& name, int begin, int end) {
    json out;
    out["class_names"] = class_names;
    out["target_class"] = target_class;
    out["images"] = json::array();
    for (int i = begin; i < end; ++i) {
      const auto& rec = images[kept[i]];
      json entry;
      entry["file"] = rec.file;
      entry["annotations"] = json::array();
      for (const auto& a : rec.anns) {
        json ja;
        ja["box"] = {a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max};
        ja["class_id"] = a.class_id;
        entry["annotations"].push_back(ja);
      }
      out["images"].push_back(entry);
    }
    std::ofstream f((fs::path(out_dir) / name).string());
    if (!f) throw Error::io("cannot write " + name + " under " + out_dir);
    f << out.dump(2) << "\n";
  };

  fs::create_directories(out_dir);
  emit("train.json", 0, n_train);
  emit("val.json", n_train, static_cast<int>(kept.size()));
  result.train_images = n_train;
  result.val_images = static_cast<int>(kept.size()) - n_train;
  return result;
}

}  // namespace oob
