#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "oob/dataset.hpp"
#include "oob/geometry.hpp"
#include "oob/tape.hpp"
#include "oob/tensor.hpp"

namespace oob {

struct Detection {
  BoundingBox box;
  int class_id = 0;
  Scalar conf_coor = 0;  // objectness
  Scalar conf_cls = 0;   // probability of class_id
  // provenance into the forward pass, used to rebuild differentiable scores
  int level = 0;
  int cell_y = 0;
  int cell_x = 0;
  int image = 0;  // index within the forward batch

  Scalar score() const { return conf_coor * conf_cls; }
};

struct FeatureMap {
  std::vector<Tensor> levels;  // [C,h,w] per neck scale
  std::vector<std::string> level_names;
};

// One tape-bound forward pass over a batch. Detections and neck features come
// from the same pass; head holds the raw per-level prediction maps.
struct ForwardResult {
  std::vector<Var> neck;              // [N,C,h,w] per level
  std::vector<Var> head;              // [N,5+C,h,w] per level
  std::vector<int> strides;           // per level
  std::vector<std::string> level_names;
  std::vector<std::vector<Detection>> detections;  // per batch image, pre-NMS
};

class DetectorContract {
 public:
  virtual ~DetectorContract() = default;
  virtual int class_count() const = 0;
  virtual std::pair<int, int> input_size() const = 0;  // (H, W)
  virtual bool differentiable() const = 0;
  virtual Scalar candidate_floor() const = 0;

  // images: [N,3,H,W] Var. Single forward pass producing detections and the
  // neck tap together.
  virtual ForwardResult forward(Tape& tape, Var images) const = 0;

  // Convenience wrappers over one scratch-tape forward pass on a [3,H,W] image.
  std::vector<Detection> detect(const Tensor& image) const;
  FeatureMap features(const Tensor& image) const;
};

// Small convolutional detector: 4 downsampling-capable conv stages, a 2-level
// neck (strides 4 and 8), and a shared anchor-free head predicting per cell
// (tx,ty,tw,th, objectness, per-class logits). Class scores are independent
// sigmoids; class_id is the argmax logit.
class ToyDetector : public DetectorContract {
 public:
  ToyDetector(int class_count, int input_h, int input_w, std::uint64_t seed);

  int class_count() const override { return classes_; }
  std::pair<int, int> input_size() const override { return {in_h_, in_w_}; }
  bool differentiable() const override { return true; }
  Scalar candidate_floor() const override { return floor_; }
  void set_candidate_floor(Scalar f) { floor_ = f; }

  ForwardResult forward(Tape& tape, Var images) const override;

  // Forward pass with weight leaves that require grad; fills weight_vars in
  // the same order as named_params(). Used by the trainer.
  ForwardResult forward_trainable(Tape& tape, Var images,
                                  std::vector<Var>& weight_vars) const;

  std::vector<std::pair<std::string, Tensor*>> named_params();
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;

  std::string architecture_hash() const;
  void save_checkpoint(const std::string& path,
                       const std::vector<std::string>& class_names) const;
  // Throws a validation error when the stored architecture hash differs from
  // the one this build constructs.
  static ToyDetector load_checkpoint(const std::string& path,
                                     std::vector<std::string>* class_names = nullptr);

 private:
  struct Conv {
    Tensor w, b;
    int stride = 1, pad = 0;
  };

  ForwardResult forward_impl(Tape& tape, Var images, bool weight_grads,
                             std::vector<Var>* weight_vars) const;

  int classes_;
  int in_h_, in_w_;
  Scalar floor_ = 1e-3;
  Conv stem_, c1_, c2_, c3_, lat3_, lat2_, fuse_, head_, pred_;
};

struct TrainMetrics {
  std::vector<Scalar> epoch_losses;
  Scalar clean_detection_rate = 0;  // on the training set, threshold 0.5
};

// Deterministic training given seed: Adam(1e-3), batch 16, objectness and
// per-class BCE plus weighted box regression. Throws a config error when the
// dataset has fewer than 50 samples.
TrainMetrics train_toy_detector(ToyDetector& detector, const Dataset& dataset, int epochs,
                                std::uint64_t seed);

// Fraction of samples with at least one target-class detection whose
// confidence product reaches the threshold.
Scalar detection_rate(const DetectorContract& detector, const Dataset& dataset,
                      int target_class, Scalar threshold = 0.5);

}  // namespace oob
