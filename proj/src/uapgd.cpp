#include "oob/uapgd.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "oob/error.hpp"
#include "oob/rng.hpp"
#include "oob/tape.hpp"

using nlohmann::json;

namespace oob {

Tensor pgd_update(const Tensor& trigger, const Tensor& gradient, Scalar eta) {
  if (!trigger.same_shape(gradient))
    throw Error::argument("pgd_update: trigger and gradient shapes differ");
  if (eta < 0) throw Error::argument("pgd_update: eta must be non-negative");
  Tensor out = trigger;
  for (long i = 0; i < out.size(); ++i) {
    const Scalar g = gradient[i];
    const Scalar s = g > 0 ? 1 : (g < 0 ? -1 : 0);
    out[i] = std::clamp<Scalar>(out[i] - eta * s, 0, 1);
  }
  return out;
}

WindowStats window_stats(const std::vector<Scalar>& losses, int expected_length) {
  if (losses.empty()) throw Error::argument("window_stats: empty window");
  if (expected_length >= 0 && static_cast<int>(losses.size()) != expected_length)
    throw Error::argument("window_stats: expected " + std::to_string(expected_length) +
                          " losses, got " + std::to_string(losses.size()));
  WindowStats w;
  w.l_min = losses[0];
  Scalar mean = 0;
  for (Scalar l : losses) {
    w.l_min = std::min(w.l_min, l);
    mean += l;
  }
  mean /= static_cast<Scalar>(losses.size());
  for (Scalar l : losses) w.v += (l - mean) * (l - mean);
  w.v /= static_cast<Scalar>(losses.size());
  return w;
}

bool halving_condition(const std::vector<WindowStats>& s_c, Scalar eps1, Scalar eps2) {
  if (s_c.size() < 2) throw Error::argument("halving_condition: need at least 2 windows");
  const WindowStats& newest = s_c.back();
  for (std::size_t i = 0; i + 1 < s_c.size(); ++i) {
    if (newest.l_min < s_c[i].l_min - eps1) return false;  // still improving
    if (newest.v < s_c[i].v - eps2) return false;          // oscillation settling
  }
  return true;
}

namespace {

void validate_config(const UAPGDConfig& c) {
  if (c.eta0 < 0) throw Error::config("eta0 must be non-negative");
  if (c.n_epoch < 0) throw Error::config("n_epoch must be non-negative");
  if (c.l_o < 1) throw Error::config("l_o must be at least 1");
  if (c.l_c < 2) throw Error::config("l_c must be at least 2");
  if (c.eps1 < 0 || c.eps2 < 0) throw Error::config("slack values must be non-negative");
  if (c.eta_floor < 0) throw Error::config("eta_floor must be non-negative");
}

}  // namespace

std::pair<Tensor, AttackReport> run_uapgd_core(const UAPGDConfig& config,
                                               EpochObjective& objective,
                                               const Tensor& initial_trigger, bool halving,
                                               const BatchSink& sink,
                                               const UAPGDState* resume,
                                               const EpochCallback& on_epoch) {
  validate_config(config);
  if (initial_trigger.empty()) throw Error::argument("initial trigger is empty");

  UAPGDState st;
  if (resume) {
    st = *resume;
    if (!st.trigger.same_shape(initial_trigger))
      throw Error::argument("resume state trigger shape differs from initial trigger");
  } else {
    st.trigger = initial_trigger;
    st.a_best = initial_trigger;
    st.eta = config.eta0;
  }

  AttackReport report;
  report.halving_events = st.halving_events;
  report.l_best = st.l_best;

  Tensor gradient(initial_trigger.shape());
  for (int epoch = st.epoch; epoch < config.n_epoch; ++epoch) {
    const int k = objective.batch_count(epoch);
    if (k <= 0) throw Error::config("objective reported no batches");
    const Scalar eta_eff = std::max(st.eta, config.eta_floor);

    Scalar epoch_loss = 0;
    for (int b = 0; b < k; ++b) {
      gradient.fill(0);
      const LossRecord rec = objective.evaluate(st.trigger, epoch, b, gradient);
      if (!std::isfinite(rec.l_all))
        throw Error::validation("non-finite loss at epoch " + std::to_string(epoch) +
                                " batch " + std::to_string(b));
      epoch_loss += rec.l_all / static_cast<Scalar>(k);
      st.trigger = pgd_update(st.trigger, gradient, eta_eff);
      if (sink) sink(epoch, b, rec, eta_eff);
      report.total_skipped += rec.skipped;
    }

    report.epoch_losses.push_back(epoch_loss);
    report.eta_schedule.push_back(eta_eff);
    ++report.epochs_run;

    if (epoch_loss < st.l_best) {
      st.l_best = epoch_loss;
      st.a_best = st.trigger;
    }

    if (halving) {
      st.s_o.push_back(epoch_loss);
      if (static_cast<int>(st.s_o.size()) == config.l_o) {
        st.s_c.push_back(window_stats(st.s_o, config.l_o));
        st.s_o.clear();
        if (static_cast<int>(st.s_c.size()) == config.l_c) {
          Scalar eps1 = config.eps1, eps2 = config.eps2;
          if (config.relative_slack) {
            eps1 = config.eps1 * std::abs(st.l_best);
            Scalar mean_v = 0;
            for (std::size_t i = 0; i + 1 < st.s_c.size(); ++i) mean_v += st.s_c[i].v;
            mean_v /= static_cast<Scalar>(st.s_c.size() - 1);
            eps2 = config.eps2 * mean_v;
          }
          if (halving_condition(st.s_c, eps1, eps2)) {
            st.halving_events.push_back(epoch);
            st.eta = config.eta0 / std::pow(2.0, static_cast<Scalar>(st.halving_events.size()));
            st.trigger = st.a_best;
          }
          st.s_c.clear();
        }
      }
    }

    st.epoch = epoch + 1;
    report.halving_events = st.halving_events;
    report.l_best = st.l_best;
    report.final_eta_nominal = st.eta;
    if (on_epoch) on_epoch(st, report);
  }

  report.halving_events = st.halving_events;
  report.l_best = st.l_best;
  report.final_eta_nominal = st.eta;
  return {st.a_best, report};
}

AttackObjective::AttackObjective(const Dataset& dataset, const DetectorContract& detector,
                                 const LossWeights& weights, const EOTConfig& eot_config,
                                 const PlacementRule& rule, int target_class, int batch_size,
                                 std::uint64_t seed)
    : dataset_(dataset),
      detector_(detector),
      weights_(weights),
      eot_(eot_config),
      rule_(rule),
      target_class_(target_class),
      batch_size_(batch_size),
      seed_(seed),
      cache_(detector, dataset, target_class) {
  if (batch_size <= 0) throw Error::argument("batch_size must be positive");
  if (dataset.samples.empty()) throw Error::argument("attack dataset is empty");
  if (!detector.differentiable())
    throw Error::argument("attack objective needs a differentiable detector");
}

const std::vector<std::vector<int>>& AttackObjective::batches_for(int epoch) {
  if (cached_epoch_ != epoch) {
    cached_batches_ =
        split_batches(dataset_, batch_size_, stream_seed(seed_, 500000 + epoch));
    cached_epoch_ = epoch;
  }
  return cached_batches_;
}

int AttackObjective::batch_count(int epoch) {
  return static_cast<int>(batches_for(epoch).size());
}

LossRecord AttackObjective::evaluate(const Tensor& trigger, int epoch, int batch,
                                     Tensor& gradient) {
  const auto& batches = batches_for(epoch);
  if (batch < 0 || batch >= static_cast<int>(batches.size()))
    throw Error::argument("batch index out of range");

  Tape tape;
  Var trig = tape.leaf(trigger, true);
  const std::uint64_t stream_base =
      (static_cast<std::uint64_t>(epoch) << 32) | (static_cast<std::uint64_t>(batch) << 16);
  BatchLoss bl = l_all_op(tape, trig, dataset_, batches[batch], detector_, weights_, eot_,
                          stream_base, rule_, target_class_, cache_);
  tape.backward(bl.loss);
  gradient = tape.grad(trig);

  LossRecord rec;
  rec.l_det = bl.values.l_det;
  rec.l_fg = bl.values.l_fg;
  rec.l_tv = bl.values.l_tv;
  rec.l_all = bl.values.l_all;
  rec.evaluated = bl.values.evaluated;
  rec.skipped = bl.values.skipped;
  return rec;
}

std::pair<Tensor, AttackReport> run_uapgd(const UAPGDConfig& config, const Dataset& dataset,
                                          const DetectorContract& detector,
                                          const LossWeights& weights,
                                          const EOTConfig& eot_config,
                                          const PlacementRule& rule, int target_class,
                                          const Tensor& initial_trigger, int batch_size,
                                          const BatchSink& sink, const UAPGDState* resume,
                                          const EpochCallback& on_epoch) {
  AttackObjective obj(dataset, detector, weights, eot_config, rule, target_class, batch_size,
                      config.seed);
  return run_uapgd_core(config, obj, initial_trigger, true, sink, resume, on_epoch);
}

std::pair<Tensor, AttackReport> run_pgd(const UAPGDConfig& config, const Dataset& dataset,
                                        const DetectorContract& detector,
                                        const LossWeights& weights,
                                        const EOTConfig& eot_config, const PlacementRule& rule,
                                        int target_class, const Tensor& initial_trigger,
                                        int batch_size, const BatchSink& sink,
                                        const UAPGDState* resume,
                                        const EpochCallback& on_epoch) {
  AttackObjective obj(dataset, detector, weights, eot_config, rule, target_class, batch_size,
                      config.seed);
  return run_uapgd_core(config, obj, initial_trigger, false, sink, resume, on_epoch);
}

Tensor random_trigger(int rows, int cols, std::uint64_t seed) {
  if (rows <= 0 || cols <= 0) throw Error::argument("trigger dims must be positive");
  Tensor t({3, rows, cols});
  Rng rng(seed);
  for (long i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

namespace {

json tensor_to_json(const Tensor& t) {
  json j;
  j["shape"] = t.shape();
  j["data"] = std::vector<Scalar>(t.data(), t.data() + t.size());
  return j;
}

Tensor tensor_from_json(const json& j) {
  Tensor t(j.at("shape").get<std::vector<int>>());
  const auto data = j.at("data").get<std::vector<Scalar>>();
  if (static_cast<long>(data.size()) != t.size())
    throw Error::ingestion("state tensor size mismatch");
  std::copy(data.begin(), data.end(), t.data());
  return t;
}

}  // namespace

std::string serialize_state(const UAPGDState& state) {
  json j;
  j["trigger"] = tensor_to_json(state.trigger);
  j["a_best"] = tensor_to_json(state.a_best);
  j["l_best"] = state.l_best;
  j["eta"] = state.eta;
  j["epoch"] = state.epoch;
  j["s_o"] = state.s_o;
  j["s_c"] = json::array();
  for (const auto& w : state.s_c) j["s_c"].push_back({{"l_min", w.l_min}, {"v", w.v}});
  j["halving_events"] = state.halving_events;
  return j.dump(2);
}

UAPGDState deserialize_state(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error::ingestion(std::string("malformed state JSON: ") + e.what());
  }
  UAPGDState st;
  st.trigger = tensor_from_json(j.at("trigger"));
  st.a_best = tensor_from_json(j.at("a_best"));
  st.l_best = j.at("l_best").is_null() ? std::numeric_limits<Scalar>::infinity()
                                       : j.at("l_best").get<Scalar>();
  st.eta = j.at("eta").get<Scalar>();
  st.epoch = j.at("epoch").get<int>();
  st.s_o = j.at("s_o").get<std::vector<Scalar>>();
  for (const auto& w : j.at("s_c"))
    st.s_c.push_back({w.at("l_min").get<Scalar>(), w.at("v").get<Scalar>()});
  st.halving_events = j.at("halving_events").get<std::vector<int>>();
  return st;
}

}  // namespace oob
