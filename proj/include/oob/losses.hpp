#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "oob/augment.hpp"
#include "oob/dataset.hpp"
#include "oob/detector.hpp"
#include "oob/renderer.hpp"
#include "oob/tape.hpp"

namespace oob {

struct LossWeights {
  Scalar lambda_fg = 0;
  Scalar lambda_tv = 0;
};

struct LossBreakdown {
  Scalar l_det = 0;
  Scalar l_fg = 0;
  Scalar l_tv = 0;
  Scalar l_all = 0;
  int evaluated = 0;  // batch images that contributed
  int skipped = 0;    // placement failures
};

// Max over target-class candidates of conf_coor * conf_cls; 0 when none.
Scalar l_det_value(const std::vector<Detection>& candidates, int target_class);

// Batch mean of the per-image max, built from one forward pass.
Var l_det_op(Tape& tape, const ForwardResult& fwd, int target_class);

// Sum over levels of ||a - b||_2 / sqrt(level element count).
Scalar l_fg_value(const FeatureMap& a, const FeatureMap& b);

// Total variation with the stabilizer inside the root:
// sum over channels and pixels of sqrt(dv^2 + dh^2 + eps_tv), border
// differences taken as zero. Accepts any [C,U,V] trigger.
Scalar l_tv_value(const Tensor& trigger, Scalar eps_tv = 1e-6);
Var l_tv_op(Tape& tape, Var trigger, Scalar eps_tv = 1e-6);

// Neck features of each sample's masked image, computed on first use and
// reused across epochs. Not thread safe; the optimizer loop is sequential.
class MaskFeatureCache {
 public:
  MaskFeatureCache(const DetectorContract& detector, const Dataset& dataset, int target_class,
                   Scalar gray_value = 0.5);
  const FeatureMap& get(int sample_index);

 private:
  const DetectorContract& detector_;
  const Dataset& dataset_;
  int target_class_;
  Scalar gray_value_;
  std::vector<std::optional<FeatureMap>> cache_;
};

struct BatchLoss {
  Var loss;  // scalar on the tape
  LossBreakdown values;
};

// Full objective over one batch: per image, draw an EOT transform
// (stream_base + position), place the trigger beside every target-class box,
// composite, then run one detector forward over the stacked composites.
// l_fg compares neck features against the cached masked-image features when
// lambda_fg > 0. Placement failures skip the image and count in `skipped`.
BatchLoss l_all_op(Tape& tape, Var trigger, const Dataset& dataset,
                   const std::vector<int>& batch, const DetectorContract& detector,
                   const LossWeights& weights, const EOTConfig& eot_config,
                   std::uint64_t eot_stream_base, const PlacementRule& rule, int target_class,
                   MaskFeatureCache& mask_cache, Scalar eps_tv = 1e-6);

}  // namespace oob
