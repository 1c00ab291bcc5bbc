#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oob/augment.hpp"
#include "oob/renderer.hpp"
#include "oob/tensor.hpp"

namespace oob {

// Full run configuration. Precedence: built-in defaults, then the --config
// file, then explicit command-line flags.
struct RunConfig {
  std::string mode = "uapgd";  // pgd | uapgd
  bool use_fg = true;
  Scalar lambda_fg = 0.1;
  Scalar lambda_tv = 1e-4;

  Scalar eta0 = 16.0 / 255.0;
  int epochs = 100;
  int l_o = 5;
  int l_c = 3;
  Scalar eps1 = 0.01;
  Scalar eps2 = 0.1;
  bool relative_slack = true;
  Scalar eta_floor = 1.0 / 255.0;
  int batch_size = 8;
  std::uint64_t seed = 0;

  bool eot = false;
  Scalar eot_noise = 4.0 / 255.0;
  Scalar eot_brightness = 0.1;
  Scalar eot_contrast_lo = 0.9;
  Scalar eot_contrast_hi = 1.1;
  Scalar eot_rotation_deg = 5.0;

  std::string placement_mode = "below";  // below | above | left | right
  Scalar relative_scale = 1.0;
  Scalar gap_fraction = 0.1;

  int trigger_rows = 16;
  int trigger_cols = 16;
  std::string init = "random";  // random | gray
  int target_class = 0;

  std::string data_dir;
  std::string annotations;  // default: <data_dir>/annotations.json
  std::string detector_path;
  std::string out_dir;
  int checkpoint_every = 0;
  std::string resume_path;

  PlacementRule placement_rule() const;
  EOTConfig eot_config() const;
};

// Exact parse of "16/255" style fractions; plain decimals pass through.
Scalar parse_fraction(const std::string& text);

std::string config_to_json(const RunConfig& config);
// Applies the keys present in the document on top of `config`.
void config_from_json(const std::string& text, RunConfig& config);

// Entry point used by main() and the tests; args exclude the program name.
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
int run_cli(const std::vector<std::string>& args);

}  // namespace oob
