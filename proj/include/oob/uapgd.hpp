#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "oob/augment.hpp"
#include "oob/dataset.hpp"
#include "oob/detector.hpp"
#include "oob/losses.hpp"
#include "oob/renderer.hpp"
#include "oob/tensor.hpp"

namespace oob {

struct UAPGDConfig {
  Scalar eta0 = 16.0 / 255.0;
  int n_epoch = 100;
  int l_c = 3;  // comparison length: windows compared before a halving check
  int l_o = 5;  // observation length: epochs per window
  // Slack values. In relative mode eps1 scales with |L_best| and eps2 with the
  // mean of the earlier window variances; in absolute mode they are used as is.
  Scalar eps1 = 0.01;
  Scalar eps2 = 0.1;
  bool relative_slack = true;
  // Nominal step size is eta0 / 2^h after h halvings; the applied step never
  // drops below eta_floor. Set the floor to 0 to disable it.
  Scalar eta_floor = 1.0 / 255.0;
  std::uint64_t seed = 0;
};

struct WindowStats {
  Scalar l_min = 0;
  Scalar v = 0;  // population variance
};

struct UAPGDState {
  Tensor trigger;  // working trigger
  Tensor a_best;
  Scalar l_best = std::numeric_limits<Scalar>::infinity();
  Scalar eta = 0;  // nominal step at `epoch`
  int epoch = 0;   // next epoch to run
  std::vector<Scalar> s_o;
  std::vector<WindowStats> s_c;
  std::vector<int> halving_events;
};

struct LossRecord {
  Scalar l_det = 0;
  Scalar l_fg = 0;
  Scalar l_tv = 0;
  Scalar l_all = 0;
  int evaluated = 0;
  int skipped = 0;
};

// One optimization objective seen as per-epoch batches. Implementations must
// be deterministic functions of (trigger, epoch, batch).
class EpochObjective {
 public:
  virtual ~EpochObjective() = default;
  virtual int batch_count(int epoch) = 0;
  virtual int trigger_channels() const { return 3; }
  // Evaluates the batch loss at `trigger` and fills `gradient` (same shape).
  virtual LossRecord evaluate(const Tensor& trigger, int epoch, int batch,
                              Tensor& gradient) = 0;
};

struct AttackReport {
  std::vector<Scalar> epoch_losses;   // running-mean L_i per epoch
  std::vector<Scalar> eta_schedule;   // applied step during each epoch
  std::vector<int> halving_events;    // epochs after which eta halved
  Scalar l_best = std::numeric_limits<Scalar>::infinity();
  Scalar final_eta_nominal = 0;       // eta0 / 2^halvings
  int epochs_run = 0;
  int total_skipped = 0;
};

// clamp(pixel - eta * sign(gradient), 0, 1) elementwise; sign(0) = 0.
Tensor pgd_update(const Tensor& trigger, const Tensor& gradient, Scalar eta);

// Minimum and population variance of one observation window. When
// expected_length >= 0 the input size must match it.
WindowStats window_stats(const std::vector<Scalar>& losses, int expected_length = -1);

// True iff the newest window's minimum is within eps1 of every earlier
// minimum AND its variance is within eps2 of every earlier variance; both
// comparisons use `newest >= earlier - eps`.
bool halving_condition(const std::vector<WindowStats>& s_c, Scalar eps1, Scalar eps2);

using BatchSink = std::function<void(int epoch, int batch, const LossRecord&, Scalar eta)>;
using EpochCallback =
    std::function<void(const UAPGDState&, const AttackReport&)>;

// The optimizer loop: per epoch, iterate batches accumulating the running
// mean L_i and stepping the trigger after every batch; track the best
// end-of-epoch trigger; group epoch losses into observation windows and halve
// the step (resetting the working trigger to the best one) when the stall
// condition holds over l_c consecutive windows. `resume` continues a previous
// run; `halving` false gives the fixed-step baseline.
std::pair<Tensor, AttackReport> run_uapgd_core(const UAPGDConfig& config,
                                               EpochObjective& objective,
                                               const Tensor& initial_trigger, bool halving,
                                               const BatchSink& sink = nullptr,
                                               const UAPGDState* resume = nullptr,
                                               const EpochCallback& on_epoch = nullptr);

// Dataset-backed objective: the full loss pipeline over seeded batch splits.
class AttackObjective : public EpochObjective {
 public:
  AttackObjective(const Dataset& dataset, const DetectorContract& detector,
                  const LossWeights& weights, const EOTConfig& eot_config,
                  const PlacementRule& rule, int target_class, int batch_size,
                  std::uint64_t seed);
  int batch_count(int epoch) override;
  LossRecord evaluate(const Tensor& trigger, int epoch, int batch, Tensor& gradient) override;

 private:
  const std::vector<std::vector<int>>& batches_for(int epoch);

  const Dataset& dataset_;
  const DetectorContract& detector_;
  LossWeights weights_;
  EOTConfig eot_;
  PlacementRule rule_;
  int target_class_;
  int batch_size_;
  std::uint64_t seed_;
  MaskFeatureCache cache_;
  int cached_epoch_ = -1;
  std::vector<std::vector<int>> cached_batches_;
};

std::pair<Tensor, AttackReport> run_uapgd(const UAPGDConfig& config, const Dataset& dataset,
                                          const DetectorContract& detector,
                                          const LossWeights& weights,
                                          const EOTConfig& eot_config,
                                          const PlacementRule& rule, int target_class,
                                          const Tensor& initial_trigger, int batch_size = 8,
                                          const BatchSink& sink = nullptr,
                                          const UAPGDState* resume = nullptr,
                                          const EpochCallback& on_epoch = nullptr);

// Fixed-step baseline: the same loop with halving disabled.
std::pair<Tensor, AttackReport> run_pgd(const UAPGDConfig& config, const Dataset& dataset,
                                        const DetectorContract& detector,
                                        const LossWeights& weights,
                                        const EOTConfig& eot_config, const PlacementRule& rule,
                                        int target_class, const Tensor& initial_trigger,
                                        int batch_size = 8, const BatchSink& sink = nullptr,
                                        const UAPGDState* resume = nullptr,
                                        const EpochCallback& on_epoch = nullptr);

// Uniform random trigger in [0,1] from the seed.
Tensor random_trigger(int rows, int cols, std::uint64_t seed);

// JSON round-trip for resumable runs; doubles survive exactly.
std::string serialize_state(const UAPGDState& state);
UAPGDState deserialize_state(const std::string& text);

}  // namespace oob
