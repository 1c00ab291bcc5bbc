#pragma once

#include <cstdint>

#include "oob/renderer.hpp"
#include "oob/tape.hpp"
#include "oob/tensor.hpp"

namespace oob {

struct EOTConfig {
  Scalar noise_amplitude = 4.0 / 255.0;
  Scalar brightness_delta = 0.1;
  Scalar contrast_lo = 0.9;
  Scalar contrast_hi = 1.1;
  Scalar rotation_max = 5.0 * 3.14159265358979323846 / 180.0;
  std::uint64_t seed = 0;

  static EOTConfig disabled() {
    EOTConfig c;
    c.noise_amplitude = 0;
    c.brightness_delta = 0;
    c.contrast_lo = 1;
    c.contrast_hi = 1;
    c.rotation_max = 0;
    return c;
  }
};

// One sampled transform. The noise field is not materialized here; it is a
// deterministic function of noise_seed and the trigger dims at apply time.
struct EOTDraw {
  Scalar brightness = 0;
  Scalar contrast = 1;
  Scalar rotation = 0;
  std::uint64_t noise_seed = 0;
  Scalar noise_amplitude = 0;

  bool identity() const {
    return brightness == 0 && contrast == 1 && noise_amplitude == 0;
  }
};

// Deterministic given (config.seed, stream_index). Parallel consumers must
// each own a distinct stream_index.
EOTDraw sample_eot(const EOTConfig& config, std::uint64_t stream_index);

// Per-pixel Uniform[-amplitude, amplitude] field for a [3,rows,cols] trigger.
Tensor eot_noise(const EOTDraw& draw, int rows, int cols);

// clamp(contrast * trigger + brightness + noise, 0, 1). The rotation component
// is not applied here; fold it into the affine parameters for the render.
Tensor apply_eot(const Tensor& trigger, const EOTDraw& draw);

// Tape version; the clamp passes gradient through wherever the pre-clamp value
// lies in [0,1], so d(output)/d(trigger) = contrast on unclamped pixels.
Var apply_eot_op(Tape& tape, Var trigger, const EOTDraw& draw);

inline AffineParams with_rotation(AffineParams params, Scalar delta) {
  params.alpha += delta;
  return params;
}

}  // namespace oob
