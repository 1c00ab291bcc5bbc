#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oob/dataset.hpp"
#include "oob/detector.hpp"
#include "oob/renderer.hpp"
#include "oob/tensor.hpp"
#include "oob/uapgd.hpp"

namespace oob {

struct FrameSequence {
  std::vector<Sample> frames;  // ordered; uniform size
  std::vector<std::string> class_names;
  int target_class = 0;
  Scalar frame_rate = 10.0;  // Hz
};

struct PerImageResult {
  std::string id;
  bool detected = false;
  Scalar max_conf = 0;
  bool placement_failed = false;
};

struct EvalResult {
  Scalar asr = 0;  // fraction of images with no target detection at threshold
  std::vector<PerImageResult> per_image;
  Scalar threshold = 0.5;
};

struct SequenceResult {
  std::vector<Scalar> series;  // per-frame max target confidence after NMS
  Scalar undetected_proportion = 0;
  Scalar threshold = 0.5;
};

// Class-aware greedy NMS by descending confidence product.
std::vector<Detection> nms(std::vector<Detection> candidates, Scalar iou_threshold = 0.5);

// Deterministic evaluation with EOT off. `trigger` may be null for the clean
// baseline. An image counts as detected when any post-NMS target-class
// detection reaches the threshold; placement failures count as detected and
// are flagged. `workers` parallelizes across images with a deterministic merge.
EvalResult evaluate_asr(const Dataset& dataset, const Tensor* trigger,
                        const DetectorContract& detector, const PlacementRule& rule,
                        int target_class, Scalar threshold = 0.5, int workers = 1);

SequenceResult evaluate_sequence(const FrameSequence& seq, const Tensor* trigger,
                                 const DetectorContract& detector, const PlacementRule& rule,
                                 int target_class, Scalar threshold = 0.5);

// Deterministic sequence of a sign growing linearly from scale_lo to scale_hi
// (fractions of the frame's short side), with exact per-frame annotations.
FrameSequence generate_approach_sequence(int n_frames, int height, int width, Scalar scale_lo,
                                         Scalar scale_hi, std::uint64_t seed,
                                         Scalar frame_rate = 10.0);

// PNG frames plus the annotation document, frame_rate included in the doc.
void save_sequence(const FrameSequence& seq, const std::string& root_path,
                   const std::string& annotation_file);
FrameSequence load_frame_sequence(const std::string& root_path,
                                  const std::string& annotation_file);

// Everything reportable about one run, assembled by the caller.
struct RunArtifacts {
  std::string name;
  AttackReport attack;
  EvalResult eval;
  SequenceResult sequence;
  bool has_attack = false;
  bool has_eval = false;
  bool has_sequence = false;
};

// Writes summary.json, per_image.jsonl, and PNG plots (each with a JSON
// sidecar describing the plotted data): loss vs epoch with halving markers,
// confidence vs frame, and an ASR comparison bar chart. An empty run list
// produces a zero-entry summary and no plots.
void emit_report(const std::vector<RunArtifacts>& runs, const std::string& output_dir);

}  // namespace oob
