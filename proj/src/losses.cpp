#include "oob/losses.hpp"

#include <algorithm>
#include <cmath>

#include "oob/error.hpp"

namespace oob {

Scalar l_det_value(const std::vector<Detection>& candidates, int target_class) {
  Scalar best = 0;
  for (const auto& d : candidates)
    if (d.class_id == target_class) best = std::max(best, d.score());
  return best;
}

namespace {

// Differentiable conf_coor * conf_cls for one candidate, rebuilt from the raw
// head map it was decoded from.
Var candidate_score_op(Tape& tape, const ForwardResult& fwd, const Detection& d) {
  const Tensor& hv = tape.value(fwd.head[d.level]);
  const int k = hv.dim(1), gh = hv.dim(2), gw = hv.dim(3);
  const long cell = static_cast<long>(d.cell_y) * gw + d.cell_x;
  const long base = (static_cast<long>(d.image) * k) * gh * gw;
  const long obj_idx = base + 4L * gh * gw + cell;
  const long cls_idx = base + (5L + d.class_id) * gh * gw + cell;
  Var obj = tape.sigmoid(tape.index(fwd.head[d.level], obj_idx));
  Var cls = tape.sigmoid(tape.index(fwd.head[d.level], cls_idx));
  return tape.mul(obj, cls);
}

}  // namespace

Var l_det_op(Tape& tape, const ForwardResult& fwd, int target_class) {
  std::vector<Var> per_image;
  for (const auto& dets : fwd.detections) {
    std::vector<Var> scores;
    for (const auto& d : dets)
      if (d.class_id == target_class) scores.push_back(candidate_score_op(tape, fwd, d));
    if (scores.empty())
      per_image.push_back(tape.scalar(0, false));
    else
      per_image.push_back(tape.max_of(scores));
  }
  if (per_image.empty()) return tape.scalar(0, false);
  return tape.mean_of(per_image);
}

Scalar l_fg_value(const FeatureMap& a, const FeatureMap& b) {
  if (a.levels.size() != b.levels.size())
    throw Error::argument("l_fg: feature maps have different level counts");
  Scalar total = 0;
  for (std::size_t i = 0; i < a.levels.size(); ++i) {
    if (!a.levels[i].same_shape(b.levels[i]))
      throw Error::argument("l_fg: feature level shape mismatch");
    Scalar sq = 0;
    const Tensor& x = a.levels[i];
    const Tensor& y = b.levels[i];
    for (long j = 0; j < x.size(); ++j) {
      const Scalar d = x[j] - y[j];
      sq += d * d;
    }
    total += std::sqrt(sq) / std::sqrt(static_cast<Scalar>(x.size()));
  }
  return total;
}

Scalar l_tv_value(const Tensor& trigger, Scalar eps_tv) {
  if (trigger.rank() != 3) throw Error::argument("l_tv: trigger must be [C,U,V]");
  const int c = trigger.dim(0), u = trigger.dim(1), v = trigger.dim(2);
  Scalar total = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < u; ++i)
      for (int j = 0; j < v; ++j) {
        const Scalar here = trigger.at3(ch, i, j);
        const Scalar dv = i + 1 < u ? here - trigger.at3(ch, i + 1, j) : 0;
        const Scalar dh = j + 1 < v ? here - trigger.at3(ch, i, j + 1) : 0;
        total += std::sqrt(dv * dv + dh * dh + eps_tv);
      }
  return total;
}

Var l_tv_op(Tape& tape, Var trigger, Scalar eps_tv) {
  const Tensor& trig = tape.value(trigger);
  if (trig.rank() != 3) throw Error::argument("l_tv_op: trigger must be [C,U,V]");
  Tensor out({1});
  out[0] = l_tv_value(trig, eps_tv);
  const Tensor snapshot = trig;

  return tape.custom(std::move(out), {trigger},
                     [snapshot, trigger, eps_tv](Tape& t, const Tensor& g) {
                       Tensor* tg = t.grad_buffer(trigger);
                       if (!tg) return;
                       const Scalar gs = g[0];
                       const int c = snapshot.dim(0), u = snapshot.dim(1), v = snapshot.dim(2);
                       for (int ch = 0; ch < c; ++ch)
                         for (int i = 0; i < u; ++i)
                           for (int j = 0; j < v; ++j) {
                             const Scalar here = snapshot.at3(ch, i, j);
                             const Scalar dv =
                                 i + 1 < u ? here - snapshot.at3(ch, i + 1, j) : 0;
                             const Scalar dh =
                                 j + 1 < v ? here - snapshot.at3(ch, i, j + 1) : 0;
                             const Scalar r = std::sqrt(dv * dv + dh * dh + eps_tv);
                             if (r == 0) continue;
                             const Scalar s = gs / r;
                             const long at = (static_cast<long>(ch) * u + i) * v + j;
                             if (i + 1 < u) {
                               (*tg)[at] += s * dv;
                               (*tg)[(static_cast<long>(ch) * u + i + 1) * v + j] -= s * dv;
                             }
                             if (j + 1 < v) {
                               (*tg)[at] += s * dh;
                               (*tg)[(static_cast<long>(ch) * u + i) * v + j + 1] -= s * dh;
                             }
                           }
                     });
}

MaskFeatureCache::MaskFeatureCache(const DetectorContract& detector, const Dataset& dataset,
                                   int target_class, Scalar gray_value)
    : detector_(detector),
      dataset_(dataset),
      target_class_(target_class),
      gray_value_(gray_value),
      cache_(dataset.samples.size()) {}

const FeatureMap& MaskFeatureCache::get(int sample_index) {
  if (sample_index < 0 || sample_index >= static_cast<int>(cache_.size()))
    throw Error::argument("mask feature cache: sample index out of range");
  auto& slot = cache_[sample_index];
  if (!slot) {
    const Tensor masked =
        make_masked_image(dataset_.samples[sample_index], target_class_, gray_value_);
    slot = detector_.features(masked);
  }
  return *slot;
}

BatchLoss l_all_op(Tape& tape, Var trigger, const Dataset& dataset,
                   const std::vector<int>& batch, const DetectorContract& detector,
                   const LossWeights& weights, const EOTConfig& eot_config,
                   std::uint64_t eot_stream_base, const PlacementRule& rule, int target_class,
                   MaskFeatureCache& mask_cache, Scalar eps_tv) {
  if (weights.lambda_fg < 0 || weights.lambda_tv < 0)
    throw Error::argument("loss weights must be non-negative");

  BatchLoss out;
  const int img_h = dataset.height(), img_w = dataset.width();

  std::vector<Var> composites;
  std::vector<int> used;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Sample& sample = dataset.samples[batch[j]];
    std::vector<BoundingBox> regions;
    bool has_target = false, placeable = true;
    for (const auto& ann : sample.annotations) {
      if (ann.class_id != target_class) continue;
      has_target = true;
      try {
        const Tensor& trig = tape.value(trigger);
        regions.push_back(placement(ann.box, rule, trig.dim(1), trig.dim(2), img_h, img_w));
      } catch (const Error& e) {
        if (e.kind() != Error::Kind::placement) throw;
        placeable = false;
        break;
      }
    }
    if (!has_target)
      throw Error::argument("l_all: sample " + sample.id + " has no target-class annotation");
    if (!placeable) {
      ++out.values.skipped;
      continue;
    }

    const EOTDraw draw = sample_eot(eot_config, eot_stream_base + j);
    Var trig_var = apply_eot_op(tape, trigger, draw);
    Var composite = tape.leaf(sample.image, false);
    for (const auto& region : regions) {
      AffineParams params = affine_params(region, img_h, img_w);
      params = with_rotation(params, draw.rotation);
      composite = render_op(tape, composite, trig_var, params);
    }
    composites.push_back(composite);
    used.push_back(batch[j]);
  }
  out.values.evaluated = static_cast<int>(used.size());

  Var det_var, fg_var;
  if (composites.empty()) {
    det_var = tape.scalar(0, false);
    fg_var = tape.scalar(0, false);
  } else {
    Var stacked = tape.stack_images(composites);
    ForwardResult fwd = detector.forward(tape, stacked);
    det_var = l_det_op(tape, fwd, target_class);

    if (weights.lambda_fg > 0) {
      const int n = static_cast<int>(used.size());
      Var fg_total{};
      for (std::size_t li = 0; li < fwd.neck.size(); ++li) {
        const Tensor& neck_val = tape.value(fwd.neck[li]);
        Tensor mask_stack(neck_val.shape());
        const long per = mask_stack.size() / n;
        for (int i = 0; i < n; ++i) {
          const FeatureMap& fm = mask_cache.get(used[i]);
          const Tensor& lvl = fm.levels.at(li);
          if (lvl.size() != per)
            throw Error::argument("l_all: cached mask feature shape mismatch");
          std::copy(lvl.data(), lvl.data() + per, mask_stack.data() + i * per);
        }
        Var diff = tape.sub(fwd.neck[li], tape.leaf(mask_stack, false));
        Var per_img = tape.sum_per_image(tape.square(diff));
        Var norm = tape.mul_scalar(tape.sqrt_guarded(per_img),
                                   1.0 / std::sqrt(static_cast<Scalar>(per)));
        Var lvl_mean = tape.mean(norm);
        fg_total = fg_total.valid() ? tape.add(fg_total, lvl_mean) : lvl_mean;
      }
      fg_var = fg_total;
    } else {
      fg_var = tape.scalar(0, false);
    }
  }

  Var tv_var = l_tv_op(tape, trigger, eps_tv);
  Var total = tape.add(tape.add(det_var, tape.mul_scalar(fg_var, weights.lambda_fg)),
                       tape.mul_scalar(tv_var, weights.lambda_tv));

  out.loss = total;
  out.values.l_det = tape.scalar_value(det_var);
  out.values.l_fg = tape.scalar_value(fg_var);
  out.values.l_tv = tape.scalar_value(tv_var);
  out.values.l_all = tape.scalar_value(total);
  return out;
}

}  // namespace oob
