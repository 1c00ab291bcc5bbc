#include "oob/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "oob/error.hpp"

namespace oob {

BoundingBox placement(const BoundingBox& box, const PlacementRule& rule, int trigger_rows,
                      int trigger_cols, int image_h, int image_w) {
  if (!box.valid() || box.x_min < 0 || box.y_min < 0 || box.x_max > image_w ||
      box.y_max > image_h)
    throw Error::argument("placement: box must be valid and inside the image");
  if (rule.relative_scale <= 0) throw Error::argument("placement: relative_scale must be > 0");
  if (rule.gap_fraction < 0) throw Error::argument("placement: gap_fraction must be >= 0");
  if (trigger_rows <= 0 || trigger_cols <= 0)
    throw Error::argument("placement: trigger dims must be positive");

  const Scalar aspect = static_cast<Scalar>(trigger_rows) / trigger_cols;
  const bool vertical = rule.mode == PlacementRule::Mode::below ||
                        rule.mode == PlacementRule::Mode::above;

  Scalar rw, rh;
  if (vertical) {
    rw = box.width() * rule.relative_scale;
    rh = rw * aspect;
  } else {
    rh = box.height() * rule.relative_scale;
    rw = rh / aspect;
  }

  BoundingBox r;
  switch (rule.mode) {
    case PlacementRule::Mode::below: {
      const Scalar top = box.y_max + rule.gap_fraction * box.height();
      r = {box.center_x() - rw / 2, top, box.center_x() + rw / 2, top + rh};
      break;
    }
    case PlacementRule::Mode::above: {
      const Scalar bottom = box.y_min - rule.gap_fraction * box.height();
      r = {box.center_x() - rw / 2, bottom - rh, box.center_x() + rw / 2, bottom};
      break;
    }
    case PlacementRule::Mode::left: {
      const Scalar right = box.x_min - rule.gap_fraction * box.width();
      r = {right - rw, box.center_y() - rh / 2, right, box.center_y() + rh / 2};
      break;
    }
    case PlacementRule::Mode::right: {
      const Scalar left = box.x_max + rule.gap_fraction * box.width();
      r = {left, box.center_y() - rh / 2, left + rw, box.center_y() + rh / 2};
      break;
    }
  }

  // placement axis overflow means there is no legal region on that side
  if (r.x_min < 0 || r.y_min < 0 || r.x_max > image_w || r.y_max > image_h) {
    if (vertical) {
      if (r.y_min < 0 || r.y_max > image_h)
        throw Error::placement("placement: no room on the requested side of the box");
      Scalar shift = 0;
      if (r.x_min < 0) shift = -r.x_min;
      if (r.x_max > image_w) shift = image_w - r.x_max;
      r.x_min += shift;
      r.x_max += shift;
      if (r.x_min < 0 || r.x_max > image_w)
        throw Error::placement("placement: region wider than the image");
    } else {
      if (r.x_min < 0 || r.x_max > image_w)
        throw Error::placement("placement: no room on the requested side of the box");
      Scalar shift = 0;
      if (r.y_min < 0) shift = -r.y_min;
      if (r.y_max > image_h) shift = image_h - r.y_max;
      r.y_min += shift;
      r.y_max += shift;
      if (r.y_min < 0 || r.y_max > image_h)
        throw Error::placement("placement: region taller than the image");
    }
  }
  return r;
}

AffineParams affine_params(const BoundingBox& region, int image_h, int image_w) {
  if (!region.valid()) throw Error::argument("affine_params: degenerate region");
  if (region.x_min < 0 || region.y_min < 0 || region.x_max > image_w ||
      region.y_max > image_h)
    throw Error::argument("affine_params: region outside the image");
  AffineParams p;
  p.s_h = region.width() / image_w;
  p.s_v = region.height() / image_h;
  p.t_h = 2 * region.center_x() / image_w - 1;
  p.t_v = 2 * region.center_y() / image_h - 1;
  p.alpha = 0;
  return p;
}

void map_point(const AffineParams& params, Scalar u, Scalar v, Scalar& out_u, Scalar& out_v) {
  const Scalar c = std::cos(params.alpha), s = std::sin(params.alpha);
  out_u = params.s_h * (c * u - s * v) + params.t_h;
  out_v = params.s_v * (s * u + c * v) + params.t_v;
}

namespace {

struct WarpContext {
  Scalar c, s;
  Scalar s_h, s_v, t_h, t_v;
  int h, w;        // image dims
  int u_rows, v_cols;  // trigger dims
  int x0, x1, y0, y1;  // destination bounding box, inclusive
};

WarpContext make_context(const AffineParams& p, int image_h, int image_w, int trigger_rows,
                         int trigger_cols) {
  if (p.s_h <= 0 || p.s_v <= 0) throw Error::argument("render: scales must be positive");
  WarpContext ctx;
  ctx.c = std::cos(p.alpha);
  ctx.s = std::sin(p.alpha);
  ctx.s_h = p.s_h;
  ctx.s_v = p.s_v;
  ctx.t_h = p.t_h;
  ctx.t_v = p.t_v;
  ctx.h = image_h;
  ctx.w = image_w;
  ctx.u_rows = trigger_rows;
  ctx.v_cols = trigger_cols;

  Scalar min_x = 1e30, max_x = -1e30, min_y = 1e30, max_y = -1e30;
  for (int corner = 0; corner < 4; ++corner) {
    const Scalar cu = (corner & 1) ? 1 : -1;
    const Scalar cv = (corner & 2) ? 1 : -1;
    Scalar iu, iv;
    map_point(p, cu, cv, iu, iv);
    const Scalar px = (iu + 1) / 2 * image_w - 0.5;
    const Scalar py = (iv + 1) / 2 * image_h - 0.5;
    min_x = std::min(min_x, px);
    max_x = std::max(max_x, px);
    min_y = std::min(min_y, py);
    max_y = std::max(max_y, py);
  }
  ctx.x0 = std::max(0, static_cast<int>(std::floor(min_x)) - 1);
  ctx.x1 = std::min(image_w - 1, static_cast<int>(std::ceil(max_x)) + 1);
  ctx.y0 = std::max(0, static_cast<int>(std::floor(min_y)) - 1);
  ctx.y1 = std::min(image_h - 1, static_cast<int>(std::ceil(max_y)) + 1);
  return ctx;
}

// Inverse warp of one destination pixel into trigger normalized coordinates.
inline bool invert_pixel(const WarpContext& ctx, int x, int y, Scalar& u, Scalar& v) {
  const Scalar iu = (x + 0.5) / ctx.w * 2 - 1;
  const Scalar iv = (y + 0.5) / ctx.h * 2 - 1;
  const Scalar pp = (iu - ctx.t_h) / ctx.s_h;
  const Scalar qq = (iv - ctx.t_v) / ctx.s_v;
  u = ctx.c * pp + ctx.s * qq;
  v = -ctx.s * pp + ctx.c * qq;
  return std::abs(u) <= 1 && std::abs(v) <= 1;
}

struct BilinearTaps {
  int idx[4];
  Scalar wgt[4];
};

inline BilinearTaps taps_for(const WarpContext& ctx, Scalar u, Scalar v) {
  const Scalar fx = (u + 1) / 2 * ctx.v_cols - 0.5;
  const Scalar fy = (v + 1) / 2 * ctx.u_rows - 0.5;
  const int jx = static_cast<int>(std::floor(fx));
  const int jy = static_cast<int>(std::floor(fy));
  const Scalar ax = fx - jx, ay = fy - jy;
  const int x0 = std::clamp(jx, 0, ctx.v_cols - 1);
  const int x1 = std::clamp(jx + 1, 0, ctx.v_cols - 1);
  const int y0 = std::clamp(jy, 0, ctx.u_rows - 1);
  const int y1 = std::clamp(jy + 1, 0, ctx.u_rows - 1);
  BilinearTaps t;
  t.idx[0] = y0 * ctx.v_cols + x0;
  t.idx[1] = y0 * ctx.v_cols + x1;
  t.idx[2] = y1 * ctx.v_cols + x0;
  t.idx[3] = y1 * ctx.v_cols + x1;
  t.wgt[0] = (1 - ay) * (1 - ax);
  t.wgt[1] = (1 - ay) * ax;
  t.wgt[2] = ay * (1 - ax);
  t.wgt[3] = ay * ax;
  return t;
}

Tensor render_forward(const Tensor& image, const Tensor& trigger, const WarpContext& ctx) {
  Tensor out = image;
  const long plane = static_cast<long>(ctx.u_rows) * ctx.v_cols;
  for (int y = ctx.y0; y <= ctx.y1; ++y)
    for (int x = ctx.x0; x <= ctx.x1; ++x) {
      Scalar u, v;
      if (!invert_pixel(ctx, x, y, u, v)) continue;
      const BilinearTaps t = taps_for(ctx, u, v);
      for (int c = 0; c < 3; ++c) {
        Scalar val = 0;
        for (int k = 0; k < 4; ++k) val += t.wgt[k] * trigger[c * plane + t.idx[k]];
        out.at3(c, y, x) = val;
      }
    }
  return out;
}

}  // namespace

Tensor render(const Tensor& image, const Tensor& trigger, const AffineParams& params) {
  if (image.rank() != 3 || image.dim(0) != 3) throw Error::argument("render: image must be [3,H,W]");
  if (trigger.rank() != 3 || trigger.dim(0) != 3)
    throw Error::argument("render: trigger must be [3,U,V]");
  const WarpContext ctx =
      make_context(params, image.dim(1), image.dim(2), trigger.dim(1), trigger.dim(2));
  return render_forward(image, trigger, ctx);
}

Var render_op(Tape& tape, Var base, Var trigger, const AffineParams& params) {
  const Tensor& image = tape.value(base);
  if (image.rank() != 3 || image.dim(0) != 3)
    throw Error::argument("render_op: base must be [3,H,W]");
  const Tensor& trig = tape.value(trigger);
  if (trig.rank() != 3 || trig.dim(0) != 3)
    throw Error::argument("render_op: trigger must be [3,U,V]");
  const WarpContext ctx =
      make_context(params, image.dim(1), image.dim(2), trig.dim(1), trig.dim(2));
  Tensor out = render_forward(image, trig, ctx);

  return tape.custom(
      std::move(out), {base, trigger}, [ctx, base, trigger](Tape& t, const Tensor& g) {
        const long plane = static_cast<long>(ctx.u_rows) * ctx.v_cols;
        const long img_plane = static_cast<long>(ctx.h) * ctx.w;
        if (Tensor* tg = t.grad_buffer(trigger)) {
          for (int y = ctx.y0; y <= ctx.y1; ++y)
            for (int x = ctx.x0; x <= ctx.x1; ++x) {
              Scalar u, v;
              if (!invert_pixel(ctx, x, y, u, v)) continue;
              const BilinearTaps taps = taps_for(ctx, u, v);
              for (int c = 0; c < 3; ++c) {
                const Scalar gv = g[c * img_plane + static_cast<long>(y) * ctx.w + x];
                if (gv == 0) continue;
                for (int k = 0; k < 4; ++k)
                  (*tg)[c * plane + taps.idx[k]] += gv * taps.wgt[k];
              }
            }
        }
        if (Tensor* bg = t.grad_buffer(base)) {
          for (int y = 0; y < ctx.h; ++y)
            for (int x = 0; x < ctx.w; ++x) {
              bool covered = false;
              if (y >= ctx.y0 && y <= ctx.y1 && x >= ctx.x0 && x <= ctx.x1) {
                Scalar u, v;
                covered = invert_pixel(ctx, x, y, u, v);
              }
              if (covered) continue;
              const long off = static_cast<long>(y) * ctx.w + x;
              for (int c = 0; c < 3; ++c) (*bg)[c * img_plane + off] += g[c * img_plane + off];
            }
        }
      });
}

Var render_op(Tape& tape, const Tensor& image, Var trigger, const AffineParams& params) {
  return render_op(tape, tape.leaf(image, false), trigger, params);
}

Tensor footprint_mask(const AffineParams& params, int image_h, int image_w) {
  // trigger dims only set sampling resolution, not the footprint shape
  const WarpContext ctx = make_context(params, image_h, image_w, 2, 2);
  Tensor mask({image_h, image_w});
  for (int y = ctx.y0; y <= ctx.y1; ++y)
    for (int x = ctx.x0; x <= ctx.x1; ++x) {
      Scalar u, v;
      if (invert_pixel(ctx, x, y, u, v)) mask[static_cast<long>(y) * image_w + x] = 1;
    }
  return mask;
}

}  // namespace oob
