#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oob/geometry.hpp"
#include "oob/tensor.hpp"

namespace oob {

struct Annotation {
  BoundingBox box;
  int class_id = 0;
};

struct Sample {
  Tensor image;  // [3,H,W], values in [0,1]
  std::vector<Annotation> annotations;
  std::string id;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;
  int target_class = 0;

  int height() const { return samples.empty() ? 0 : samples.front().image.dim(1); }
  int width() const { return samples.empty() ? 0 : samples.front().image.dim(2); }
};

// Annotation document: UTF-8 JSON with top-level "class_names" (array of
// strings), optional "target_class" (default 0), and "images" as an ordered
// array of {"file": name, "annotations": [{"box": [x0,y0,x1,y1], "class_id": c}]}.
// Image files are resolved relative to root_path and decoded as 8-bit RGB PNG.
Dataset load_dataset(const std::string& root_path, const std::string& annotation_file);

// Writes sample PNGs under root_path and the annotation document beside them.
void save_dataset(const Dataset& dataset, const std::string& root_path,
                  const std::string& annotation_file);

// Deterministic desk-scale dataset: one red octagon sign (class 0) per image,
// placed with clear space beneath it, plus up to two distractor shapes from
// classes {square, triangle, circle}. Pure function of its arguments.
Dataset generate_synthetic_dataset(int n_samples, int height, int width, std::uint64_t seed);

// Rasterizes the red octagon sign used by the synthetic data. The sign's
// exact bounding box is [cx - e, cy - e, cx + e, cy + e].
void draw_octagon_sign(Tensor& image, Scalar cx, Scalar cy, Scalar half_extent, Scalar jr = 0,
                       Scalar jg = 0, Scalar jb = 0);

// Copy of sample.image with every target-class box overwritten by gray_value
// on all channels. A pixel is covered when its center lies in [x_min,x_max) x
// [y_min,y_max). Throws if the sample has no target-class annotation.
Tensor make_masked_image(const Sample& sample, int target_class, Scalar gray_value = 0.5);

// Seeded permutation of sample indices partitioned into ceil(n/batch_size)
// batches. Callers derive a fresh seed per epoch.
std::vector<std::vector<int>> split_batches(const Dataset& dataset, int batch_size,
                                            std::uint64_t seed);

struct CocoConvertResult {
  int train_images = 0;
  int val_images = 0;
  int skipped_boxes = 0;
};

// Reads a COCO-style instances JSON, keeps images that contain the target
// category, rewrites boxes to [x0,y0,x1,y1], and emits train.json/val.json
// annotation documents under out_dir referencing the original image files.
CocoConvertResult convert_coco_subset(const std::string& coco_json,
                                      const std::string& images_dir,
                                      const std::string& out_dir,
                                      const std::string& target_category,
                                      double train_fraction, std::uint64_t seed);

}  // namespace oob
