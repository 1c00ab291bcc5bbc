#include "oob/augment.hpp"

#include <algorithm>

#include "oob/error.hpp"
#include "oob/rng.hpp"

namespace oob {

EOTDraw sample_eot(const EOTConfig& config, std::uint64_t stream_index) {
  if (config.noise_amplitude < 0 || config.brightness_delta < 0 || config.rotation_max < 0)
    throw Error::config("EOT amplitudes must be non-negative");
  if (!(config.contrast_lo > 0 && config.contrast_lo <= 1 && config.contrast_hi >= 1))
    throw Error::config("EOT contrast range must satisfy 0 < lo <= 1 <= hi");

  Rng rng(stream_seed(config.seed, stream_index));
  EOTDraw d;
  d.brightness = rng.uniform(-config.brightness_delta, config.brightness_delta);
  d.contrast = rng.uniform(config.contrast_lo, config.contrast_hi);
  d.rotation = rng.uniform(-config.rotation_max, config.rotation_max);
  d.noise_seed = rng.next_u64();
  d.noise_amplitude = config.noise_amplitude;
  if (config.brightness_delta == 0) d.brightness = 0;
  if (config.contrast_lo == 1 && config.contrast_hi == 1) d.contrast = 1;
  if (config.rotation_max == 0) d.rotation = 0;
  return d;
}

Tensor eot_noise(const EOTDraw& draw, int rows, int cols) {
  Tensor n({3, rows, cols});
  if (draw.noise_amplitude == 0) return n;
  Rng rng(draw.noise_seed);
  for (long i = 0; i < n.size(); ++i)
    n[i] = rng.uniform(-draw.noise_amplitude, draw.noise_amplitude);
  return n;
}

Tensor apply_eot(const Tensor& trigger, const EOTDraw& draw) {
  if (trigger.rank() != 3 || trigger.dim(0) != 3)
    throw Error::argument("apply_eot: trigger must be [3,U,V]");
  if (draw.identity()) return trigger;
  const Tensor noise = eot_noise(draw, trigger.dim(1), trigger.dim(2));
  Tensor out = trigger;
  for (long i = 0; i < out.size(); ++i)
    out[i] = std::clamp<Scalar>(draw.contrast * trigger[i] + draw.brightness + noise[i], 0, 1);
  return out;
}

Var apply_eot_op(Tape& tape, Var trigger, const EOTDraw& draw) {
  const Tensor& t = tape.value(trigger);
  if (t.rank() != 3 || t.dim(0) != 3)
    throw Error::argument("apply_eot_op: trigger must be [3,U,V]");
  if (draw.identity()) return trigger;
  const Tensor noise = eot_noise(draw, t.dim(1), t.dim(2));
  Var scaled = tape.add_scalar(tape.mul_scalar(trigger, draw.contrast), draw.brightness);
  Var noisy = tape.add(scaled, tape.leaf(noise, false));
  return tape.clamp01(noisy);
}

}  // namespace oob
