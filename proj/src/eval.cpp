#include "oob/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "oob/error.hpp"
#include "oob/plot.hpp"
#include "oob/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace oob {

std::vector<Detection> nms(std::vector<Detection> candidates, Scalar iou_threshold) {
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return candidates[a].score() > candidates[b].score();
  });
  std::vector<Detection> kept;
  std::vector<bool> suppressed(candidates.size(), false);
  for (int i : order) {
    if (suppressed[i]) continue;
    kept.push_back(candidates[i]);
    for (int j : order) {
      if (suppressed[j] || j == i) continue;
      if (candidates[j].class_id != candidates[i].class_id) continue;
      if (iou(candidates[j].box, candidates[i].box) > iou_threshold) suppressed[j] = true;
    }
    suppressed[i] = true;
  }
  return kept;
}

namespace {

// Renders the trigger beside every target box, detects, and reports the max
// post-NMS target confidence. placement_failed wins over everything else.
PerImageResult evaluate_one(const Sample& sample, const Tensor* trigger,
                            const DetectorContract& detector, const PlacementRule& rule,
                            int target_class, Scalar threshold, int img_h, int img_w) {
  PerImageResult r;
  r.id = sample.id;
  Tensor composite = sample.image;
  if (trigger) {
    for (const auto& ann : sample.annotations) {
      if (ann.class_id != target_class) continue;
      try {
        const BoundingBox region =
            placement(ann.box, rule, trigger->dim(1), trigger->dim(2), img_h, img_w);
        composite = render(composite, *trigger, affine_params(region, img_h, img_w));
      } catch (const Error& e) {
        if (e.kind() != Error::Kind::placement) throw;
        r.placement_failed = true;
        r.detected = true;
        return r;
      }
    }
  }
  const auto kept = nms(detector.detect(composite));
  for (const auto& d : kept)
    if (d.class_id == target_class) r.max_conf = std::max(r.max_conf, d.score());
  r.detected = r.max_conf >= threshold;
  return r;
}

}  // namespace

EvalResult evaluate_asr(const Dataset& dataset, const Tensor* trigger,
                        const DetectorContract& detector, const PlacementRule& rule,
                        int target_class, Scalar threshold, int workers) {
  EvalResult result;
  result.threshold = threshold;
  const int n = static_cast<int>(dataset.samples.size());
  if (n == 0) return result;
  result.per_image.resize(n);

  const int img_h = dataset.height(), img_w = dataset.width();
  auto work = [&](int begin, int step) {
    for (int i = begin; i < n; i += step)
      result.per_image[i] = evaluate_one(dataset.samples[i], trigger, detector, rule,
                                         target_class, threshold, img_h, img_w);
  };
  workers = std::max(1, workers);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work, t, workers);
    for (auto& t : pool) t.join();
  }

  int undetected = 0;
  for (const auto& r : result.per_image)
    if (!r.detected) ++undetected;
  result.asr = static_cast<Scalar>(undetected) / static_cast<Scalar>(n);
  return result;
}

SequenceResult evaluate_sequence(const FrameSequence& seq, const Tensor* trigger,
                                 const DetectorContract& detector, const PlacementRule& rule,
                                 int target_class, Scalar threshold) {
  if (seq.frames.empty()) throw Error::argument("evaluate_sequence: empty sequence");
  SequenceResult out;
  out.threshold = threshold;
  const int img_h = seq.frames.front().image.dim(1);
  const int img_w = seq.frames.front().image.dim(2);
  int undetected = 0;
  for (const auto& frame : seq.frames) {
    const PerImageResult r =
        evaluate_one(frame, trigger, detector, rule, target_class, threshold, img_h, img_w);
    // a placement failure counts as a detected frame with an unknown score
    out.series.push_back(r.placement_failed ? threshold : r.max_conf);
    if (!r.detected) ++undetected;
  }
  out.undetected_proportion =
      static_cast<Scalar>(undetected) / static_cast<Scalar>(seq.frames.size());
  return out;
}

FrameSequence generate_approach_sequence(int n_frames, int height, int width, Scalar scale_lo,
                                         Scalar scale_hi, std::uint64_t seed,
                                         Scalar frame_rate) {
  if (n_frames < 2) throw Error::argument("approach sequence needs at least 2 frames");
  if (height < 32 || width < 32) throw Error::argument("frame size must be at least 32x32");
  if (!(scale_lo > 0 && scale_lo < scale_hi && scale_hi <= 1))
    throw Error::argument("scale range must satisfy 0 < lo < hi <= 1");

  FrameSequence seq;
  seq.class_names = {"sign", "square", "triangle", "circle"};
  seq.target_class = 0;
  seq.frame_rate = frame_rate;

  const Scalar base = std::min(height, width);
  Rng bg_rng(stream_seed(seed, 0));
  Scalar corner[4][3];
  for (auto& c : corner)
    for (auto& ch : c) ch = bg_rng.uniform(0.15, 0.85);

  for (int f = 0; f < n_frames; ++f) {
    Sample s;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06d", f);
    s.id = buf;
    s.image = Tensor({3, height, width});
    Rng rng(stream_seed(seed, 1 + static_cast<std::uint64_t>(f)));
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const Scalar u = static_cast<Scalar>(x) / (width - 1);
        const Scalar v = static_cast<Scalar>(y) / (height - 1);
        for (int c = 0; c < 3; ++c) {
          Scalar val = (1 - v) * ((1 - u) * corner[0][c] + u * corner[1][c]) +
                       v * ((1 - u) * corner[2][c] + u * corner[3][c]);
          val += rng.uniform(-0.01, 0.01);
          s.image.at3(c, y, x) = std::clamp<Scalar>(val, 0, 1);
        }
      }

    const Scalar t = static_cast<Scalar>(f) / (n_frames - 1);
    const Scalar size = (scale_lo + t * (scale_hi - scale_lo)) * base;
    const Scalar cx = width / 2.0, cy = 0.42 * height;
    draw_octagon_sign(s.image, cx, cy, size / 2);
    s.annotations.push_back(
        {{cx - size / 2, cy - size / 2, cx + size / 2, cy + size / 2}, 0});
    seq.frames.push_back(std::move(s));
  }
  return seq;
}

void save_sequence(const FrameSequence& seq, const std::string& root_path,
                   const std::string& annotation_file) {
  Dataset ds;
  ds.samples = seq.frames;
  ds.class_names = seq.class_names;
  ds.target_class = seq.target_class;
  save_dataset(ds, root_path, annotation_file);
  std::ifstream in(annotation_file);
  json doc;
  in >> doc;
  in.close();
  doc["frame_rate"] = seq.frame_rate;
  std::ofstream out(annotation_file);
  out << doc.dump(2) << "\n";
}

FrameSequence load_frame_sequence(const std::string& root_path,
                                  const std::string& annotation_file) {
  Dataset ds = load_dataset(root_path, annotation_file);
  if (ds.samples.empty()) throw Error::validation("frame sequence is empty");
  FrameSequence seq;
  seq.frames = std::move(ds.samples);
  seq.class_names = std::move(ds.class_names);
  seq.target_class = ds.target_class;
  std::ifstream in(annotation_file);
  json doc;
  in >> doc;
  seq.frame_rate = doc.value("frame_rate", 10.0);
  return seq;
}

void emit_report(const std::vector<RunArtifacts>& runs, const std::string& output_dir) {
  fs::create_directories(output_dir);

  json summary;
  summary["runs"] = json::array();
  for (const auto& run : runs) {
    json entry;
    entry["name"] = run.name;
    if (run.has_attack) {
      entry["l_best"] = run.attack.l_best;
      entry["epochs"] = run.attack.epochs_run;
      entry["halving_events"] = run.attack.halving_events;
      entry["final_eta_nominal"] = run.attack.final_eta_nominal;
      entry["skipped_images"] = run.attack.total_skipped;
    }
    if (run.has_eval) {
      entry["asr"] = run.eval.asr;
      entry["threshold"] = run.eval.threshold;
    }
    if (run.has_sequence) {
      entry["undetected_proportion"] = run.sequence.undetected_proportion;
      entry["frames"] = run.sequence.series.size();
    }
    summary["runs"].push_back(entry);
  }
  {
    std::ofstream out((fs::path(output_dir) / "summary.json").string());
    if (!out) throw Error::io("cannot write summary under " + output_dir);
    out << summary.dump(2) << "\n";
  }

  {
    std::ofstream out((fs::path(output_dir) / "per_image.jsonl").string());
    for (const auto& run : runs) {
      if (!run.has_eval) continue;
      for (const auto& r : run.eval.per_image) {
        json line;
        line["run"] = run.name;
        line["id"] = r.id;
        line["detected"] = r.detected;
        line["max_conf"] = r.max_conf;
        line["placement_failed"] = r.placement_failed;
        out << line.dump() << "\n";
      }
    }
  }

  if (runs.empty()) return;
  const fs::path plots = fs::path(output_dir) / "plots";
  fs::create_directories(plots);

  auto sidecar = [&](const fs::path& png, const json& data) {
    fs::path p = png;
    p.replace_extension(".json");
    std::ofstream out(p.string());
    out << data.dump(2) << "\n";
  };

  std::vector<std::pair<std::string, Scalar>> asr_bars;
  for (const auto& run : runs) {
    if (run.has_attack && !run.attack.epoch_losses.empty()) {
      const fs::path png = plots / ("loss_" + run.name + ".png");
      plot_line_chart(png.string(), "LOSS VS EPOCH: " + run.name, run.attack.epoch_losses,
                      run.attack.halving_events, std::nullopt);
      json data;
      data["series"] = run.attack.epoch_losses;
      data["halving_events"] = run.attack.halving_events;
      data["eta_schedule"] = run.attack.eta_schedule;
      sidecar(png, data);
    }
    if (run.has_sequence && !run.sequence.series.empty()) {
      const fs::path png = plots / ("conf_" + run.name + ".png");
      plot_line_chart(png.string(), "CONF VS FRAME: " + run.name, run.sequence.series, {},
                      run.sequence.threshold);
      json data;
      data["series"] = run.sequence.series;
      data["threshold"] = run.sequence.threshold;
      data["undetected_proportion"] = run.sequence.undetected_proportion;
      sidecar(png, data);
    }
    if (run.has_eval) asr_bars.emplace_back(run.name, run.eval.asr);
  }
  if (!asr_bars.empty()) {
    const fs::path png = plots / "asr_comparison.png";
    plot_bars(png.string(), "ASR BY METHOD", asr_bars);
    json data;
    for (const auto& [name, v] : asr_bars) data["asr"][name] = v;
    sidecar(png, data);
  }
}

}  // namespace oob
