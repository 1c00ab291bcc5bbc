#include "oob/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oob/dataset.hpp"
#include "oob/detector.hpp"
#include "oob/error.hpp"
#include "oob/eval.hpp"
#include "oob/losses.hpp"
#include "oob/png_io.hpp"
#include "oob/uapgd.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace oob {

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error::io("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error::io("cannot write " + path);
  out << text;
  if (!out) throw Error::io("short write to " + path);
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw Error::io("cannot create directory " + path + ": " + ec.message());
}

std::string annotations_path(const RunConfig& cfg) {
  if (!cfg.annotations.empty()) return cfg.annotations;
  return (fs::path(cfg.data_dir) / "annotations.json").string();
}

json attack_report_to_json(const AttackReport& r) {
  json j;
  j["epoch_losses"] = r.epoch_losses;
  j["eta_schedule"] = r.eta_schedule;
  j["halving_events"] = r.halving_events;
  if (std::isfinite(r.l_best))
    j["l_best"] = r.l_best;
  else
    j["l_best"] = nullptr;
  j["final_eta_nominal"] = r.final_eta_nominal;
  j["epochs_run"] = r.epochs_run;
  j["total_skipped"] = r.total_skipped;
  return j;
}

AttackReport attack_report_from_json(const json& j) {
  AttackReport r;
  r.epoch_losses = j.at("epoch_losses").get<std::vector<Scalar>>();
  r.eta_schedule = j.at("eta_schedule").get<std::vector<Scalar>>();
  r.halving_events = j.at("halving_events").get<std::vector<int>>();
  if (!j.at("l_best").is_null()) r.l_best = j.at("l_best").get<Scalar>();
  r.final_eta_nominal = j.at("final_eta_nominal").get<Scalar>();
  r.epochs_run = j.at("epochs_run").get<int>();
  r.total_skipped = j.at("total_skipped").get<int>();
  return r;
}

json eval_result_to_json(const EvalResult& r) {
  json per = json::array();
  for (const auto& p : r.per_image) {
    per.push_back({{"id", p.id},
                   {"detected", p.detected},
                   {"max_conf", p.max_conf},
                   {"placement_failed", p.placement_failed}});
  }
  return json{{"asr", r.asr}, {"threshold", r.threshold}, {"per_image", per}};
}

EvalResult eval_result_from_json(const json& j) {
  EvalResult r;
  r.asr = j.at("asr").get<Scalar>();
  r.threshold = j.at("threshold").get<Scalar>();
  for (const auto& p : j.at("per_image")) {
    PerImageResult pi;
    pi.id = p.at("id").get<std::string>();
    pi.detected = p.at("detected").get<bool>();
    pi.max_conf = p.at("max_conf").get<Scalar>();
    pi.placement_failed = p.at("placement_failed").get<bool>();
    r.per_image.push_back(std::move(pi));
  }
  return r;
}

json sequence_result_to_json(const SequenceResult& r) {
  return json{{"series", r.series},
              {"undetected_proportion", r.undetected_proportion},
              {"threshold", r.threshold}};
}

SequenceResult sequence_result_from_json(const json& j) {
  SequenceResult r;
  r.series = j.at("series").get<std::vector<Scalar>>();
  r.undetected_proportion = j.at("undetected_proportion").get<Scalar>();
  r.threshold = j.at("threshold").get<Scalar>();
  return r;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  int n = 100;
  int size = 64;
  int height = 0;  // override size when both set
  int width = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool approach = false;
  int frames = 60;
  double scale_lo = 0.12;
  double scale_hi = 0.5;
  double fps = 10.0;
};

int cmd_synth(const SynthArgs& a) {
  int h = a.height > 0 ? a.height : a.size;
  int w = a.width > 0 ? a.width : a.size;
  ensure_dir(a.out);
  if (a.approach) {
    FrameSequence seq = generate_approach_sequence(a.frames, h, w, a.scale_lo, a.scale_hi,
                                                   a.seed, a.fps);
    save_sequence(seq, a.out, (fs::path(a.out) / "annotations.json").string());
    std::cout << "wrote " << seq.frames.size() << " frames to " << a.out << "\n";
  } else {
    Dataset ds = generate_synthetic_dataset(a.n, h, w, a.seed);
    save_dataset(ds, a.out, (fs::path(a.out) / "annotations.json").string());
    std::cout << "wrote " << ds.samples.size() << " samples to " << a.out << "\n";
  }
  return 0;
}

// ---- train-detector --------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string annotations;
  int epochs = 30;
  std::uint64_t seed = 0;
  std::string out = "detector.ckpt";
};

int cmd_train_detector(const TrainArgs& a) {
  std::string annot = a.annotations.empty()
                          ? (fs::path(a.data) / "annotations.json").string()
                          : a.annotations;
  if (!fs::exists(annot)) throw Error::config("dataset annotations not found: " + annot);
  Dataset ds = load_dataset(a.data, annot);
  if (ds.samples.empty()) throw Error::config("dataset is empty: " + a.data);
  ToyDetector det(static_cast<int>(ds.class_names.size()), ds.height(), ds.width(), a.seed);
  TrainMetrics metrics;
  if (a.epochs > 0) {
    metrics = train_toy_detector(det, ds, a.epochs, a.seed);
  } else {
    metrics.clean_detection_rate = detection_rate(det, ds, ds.target_class);
  }
  if (!a.out.empty()) {
    fs::path parent = fs::path(a.out).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
  }
  det.save_checkpoint(a.out, ds.class_names);
  json j{{"checkpoint", a.out},
         {"epochs", a.epochs},
         {"clean_detection_rate", metrics.clean_detection_rate}};
  std::cout << j.dump() << "\n";
  return 0;
}

// ---- attack ----------------------------------------------------------------

std::vector<std::string> validate_attack_config(const RunConfig& c) {
  std::vector<std::string> errors;
  if (c.mode != "pgd" && c.mode != "uapgd")
    errors.push_back("mode must be pgd or uapgd, got '" + c.mode + "'");
  if (c.init != "random" && c.init != "gray")
    errors.push_back("init must be random or gray, got '" + c.init + "'");
  if (c.placement_mode != "below" && c.placement_mode != "above" &&
      c.placement_mode != "left" && c.placement_mode != "right")
    errors.push_back("placement_mode must be one of below/above/left/right, got '" +
                     c.placement_mode + "'");
  if (c.trigger_rows <= 0 || c.trigger_cols <= 0)
    errors.push_back("trigger dims must be positive");
  if (c.lambda_fg < 0) errors.push_back("lambda_fg must be >= 0");
  if (c.lambda_tv < 0) errors.push_back("lambda_tv must be >= 0");
  if (c.eta0 <= 0) errors.push_back("eta0 must be > 0");
  if (c.eta_floor < 0) errors.push_back("eta_floor must be >= 0");
  if (c.epochs < 0) errors.push_back("epochs must be >= 0");
  if (c.l_o < 1) errors.push_back("l_o must be >= 1");
  if (c.l_c < 2) errors.push_back("l_c must be >= 2");
  if (c.eps1 < 0) errors.push_back("eps1 must be >= 0");
  if (c.eps2 < 0) errors.push_back("eps2 must be >= 0");
  if (c.batch_size < 1) errors.push_back("batch_size must be >= 1");
  if (c.relative_scale <= 0) errors.push_back("relative_scale must be > 0");
  if (c.gap_fraction < 0) errors.push_back("gap_fraction must be >= 0");
  if (c.target_class < 0) errors.push_back("target_class must be >= 0");
  if (c.eot) {
    if (c.eot_noise < 0) errors.push_back("eot_noise must be >= 0");
    if (c.eot_brightness < 0) errors.push_back("eot_brightness must be >= 0");
    if (c.eot_contrast_lo <= 0 || c.eot_contrast_hi < c.eot_contrast_lo)
      errors.push_back("eot contrast range must satisfy 0 < lo <= hi");
    if (c.eot_rotation_deg < 0) errors.push_back("eot_rotation_deg must be >= 0");
  }
  if (c.data_dir.empty())
    errors.push_back("data dir is required");
  else if (!fs::exists(annotations_path(c)))
    errors.push_back("dataset annotations not found: " + annotations_path(c));
  if (c.detector_path.empty())
    errors.push_back("detector checkpoint is required");
  else if (!fs::exists(c.detector_path))
    errors.push_back("detector checkpoint not found: " + c.detector_path);
  if (c.out_dir.empty()) errors.push_back("output dir is required");
  if (!c.resume_path.empty() && !fs::exists(c.resume_path))
    errors.push_back("resume state not found: " + c.resume_path);
  return errors;
}

int cmd_attack(const RunConfig& cfg) {
  auto errors = validate_attack_config(cfg);
  if (!errors.empty()) {
    for (const auto& e : errors) std::cerr << "config error: " << e << "\n";
    return 2;
  }
  ensure_dir(cfg.out_dir);
  write_text_file((fs::path(cfg.out_dir) / "config.json").string(), config_to_json(cfg));

  Dataset ds = load_dataset(cfg.data_dir, annotations_path(cfg));
  std::vector<std::string> ckpt_classes;
  ToyDetector det = ToyDetector::load_checkpoint(cfg.detector_path, &ckpt_classes);
  if (cfg.target_class >= det.class_count())
    throw Error::config("target_class " + std::to_string(cfg.target_class) +
                        " out of range for detector with " +
                        std::to_string(det.class_count()) + " classes");
  auto [need_h, need_w] = det.input_size();
  if (ds.height() != need_h || ds.width() != need_w)
    throw Error::config("dataset size does not match detector input size");

  UAPGDConfig uc;
  uc.eta0 = cfg.eta0;
  uc.n_epoch = cfg.epochs;
  uc.l_c = cfg.l_c;
  uc.l_o = cfg.l_o;
  uc.eps1 = cfg.eps1;
  uc.eps2 = cfg.eps2;
  uc.relative_slack = cfg.relative_slack;
  uc.eta_floor = cfg.eta_floor;
  uc.seed = cfg.seed;

  LossWeights weights;
  weights.lambda_fg = cfg.use_fg ? cfg.lambda_fg : 0.0;
  weights.lambda_tv = cfg.lambda_tv;

  EOTConfig eot = cfg.eot_config();
  PlacementRule rule = cfg.placement_rule();

  Tensor init;
  std::unique_ptr<UAPGDState> resume;
  if (!cfg.resume_path.empty()) {
    resume = std::make_unique<UAPGDState>(
        deserialize_state(read_text_file(cfg.resume_path)));
    init = resume->trigger;
  } else if (cfg.init == "gray") {
    init = Tensor::full({3, cfg.trigger_rows, cfg.trigger_cols}, 0.5);
  } else {
    init = random_trigger(cfg.trigger_rows, cfg.trigger_cols, cfg.seed);
  }

  std::ofstream metrics((fs::path(cfg.out_dir) / "metrics.jsonl").string(),
                        resume ? std::ios::app : std::ios::trunc);
  if (!metrics) throw Error::io("cannot write metrics.jsonl under " + cfg.out_dir);
  BatchSink sink = [&metrics](int epoch, int batch, const LossRecord& rec, Scalar eta) {
    json j{{"epoch", epoch},   {"batch", batch}, {"l_det", rec.l_det},
           {"l_fg", rec.l_fg}, {"l_tv", rec.l_tv}, {"l_all", rec.l_all},
           {"eta", eta},       {"evaluated", rec.evaluated}, {"skipped", rec.skipped}};
    metrics << j.dump() << "\n";
  };

  fs::path state_path = fs::path(cfg.out_dir) / "state.json";
  fs::path trigger_path = fs::path(cfg.out_dir) / "trigger.png";
  EpochCallback on_epoch = nullptr;
  if (cfg.checkpoint_every > 0) {
    int every = cfg.checkpoint_every;
    on_epoch = [every, state_path, trigger_path](const UAPGDState& st, const AttackReport&) {
      if (st.epoch % every != 0) return;
      write_text_file(state_path.string(), serialize_state(st));
      const Tensor& best = st.a_best.empty() ? st.trigger : st.a_best;
      write_png(trigger_path.string(), best);
    };
  }

  auto [trigger, report] =
      cfg.mode == "uapgd"
          ? run_uapgd(uc, ds, det, weights, eot, rule, cfg.target_class, init,
                      cfg.batch_size, sink, resume.get(), on_epoch)
          : run_pgd(uc, ds, det, weights, eot, rule, cfg.target_class, init,
                    cfg.batch_size, sink, resume.get(), on_epoch);
  metrics.close();

  write_png(trigger_path.string(), trigger);
  write_text_file((fs::path(cfg.out_dir) / "attack_report.json").string(),
                  attack_report_to_json(report).dump(2) + "\n");

  // final state for later resumes
  UAPGDState final_state;
  final_state.trigger = trigger;
  final_state.a_best = trigger;
  final_state.l_best = report.l_best;
  final_state.eta = report.final_eta_nominal;
  final_state.epoch = report.epochs_run;
  final_state.halving_events = report.halving_events;
  // The in-loop callback already wrote richer states; only fill the gap when
  // checkpointing was off or the run ended between checkpoints.
  if (!(cfg.checkpoint_every > 0 && report.epochs_run > 0 &&
        report.epochs_run % cfg.checkpoint_every == 0))
    write_text_file(state_path.string(), serialize_state(final_state));

  json done{{"mode", cfg.mode},
            {"use_fg", cfg.use_fg},
            {"epochs_run", report.epochs_run},
            {"halvings", report.halving_events.size()},
            {"l_best", std::isfinite(report.l_best) ? json(report.l_best) : json()},
            {"trigger", trigger_path.string()}};
  std::cout << done.dump() << "\n";
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string annotations;
  std::string detector;
  std::string trigger;  // empty => clean baseline
  bool no_trigger = false;
  bool sequence = false;
  double threshold = 0.5;
  int workers = 1;
  int target_class = -1;  // default: dataset's
  std::string placement_mode = "below";
  double relative_scale = 1.0;
  double gap_fraction = 0.1;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  if (a.trigger.empty() && !a.no_trigger)
    throw Error::config("pass --trigger PATH or --no-trigger");
  if (!a.trigger.empty() && !fs::exists(a.trigger))
    throw Error::config("trigger image not found: " + a.trigger);
  std::string annot = a.annotations.empty()
                          ? (fs::path(a.data) / "annotations.json").string()
                          : a.annotations;
  if (!fs::exists(annot)) throw Error::config("dataset annotations not found: " + annot);
  if (!fs::exists(a.detector))
    throw Error::config("detector checkpoint not found: " + a.detector);

  RunConfig pc;
  pc.placement_mode = a.placement_mode;
  pc.relative_scale = a.relative_scale;
  pc.gap_fraction = a.gap_fraction;
  PlacementRule rule = pc.placement_rule();

  ToyDetector det = ToyDetector::load_checkpoint(a.detector);
  Tensor trig;
  const Tensor* trig_ptr = nullptr;
  if (!a.trigger.empty()) {
    trig = read_png(a.trigger);
    trig_ptr = &trig;
  }

  ensure_dir(a.out);
  if (a.sequence) {
    FrameSequence seq = load_frame_sequence(a.data, annot);
    int target = a.target_class >= 0 ? a.target_class : seq.target_class;
    SequenceResult r = evaluate_sequence(seq, trig_ptr, det, rule, target, a.threshold);
    write_text_file((fs::path(a.out) / "sequence_eval.json").string(),
                    sequence_result_to_json(r).dump(2) + "\n");
    std::cout << json{{"undetected_proportion", r.undetected_proportion},
                      {"frames", r.series.size()}}
                     .dump()
              << "\n";
  } else {
    Dataset ds = load_dataset(a.data, annot);
    int target = a.target_class >= 0 ? a.target_class : ds.target_class;
    EvalResult r = evaluate_asr(ds, trig_ptr, det, rule, target, a.threshold, a.workers);
    write_text_file((fs::path(a.out) / "eval.json").string(),
                    eval_result_to_json(r).dump(2) + "\n");
    std::cout << json{{"asr", r.asr}, {"images", r.per_image.size()}}.dump() << "\n";
  }
  return 0;
}

// ---- report -----------------------------------------------------------------

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out) {
  std::vector<RunArtifacts> runs;
  for (const auto& dir : run_dirs) {
    if (!fs::exists(dir)) throw Error::config("run dir not found: " + dir);
    RunArtifacts art;
    art.name = fs::path(dir).filename().string();
    if (art.name.empty()) art.name = fs::path(dir).parent_path().filename().string();
    fs::path ar = fs::path(dir) / "attack_report.json";
    if (fs::exists(ar)) {
      art.attack = attack_report_from_json(json::parse(read_text_file(ar.string())));
      art.has_attack = true;
    }
    fs::path ev = fs::path(dir) / "eval.json";
    if (fs::exists(ev)) {
      art.eval = eval_result_from_json(json::parse(read_text_file(ev.string())));
      art.has_eval = true;
    }
    fs::path sq = fs::path(dir) / "sequence_eval.json";
    if (fs::exists(sq)) {
      art.sequence = sequence_result_from_json(json::parse(read_text_file(sq.string())));
      art.has_sequence = true;
    }
    if (!art.has_attack && !art.has_eval && !art.has_sequence)
      throw Error::config("run dir has no reportable artifacts: " + dir);
    runs.push_back(std::move(art));
  }
  emit_report(runs, out);
  std::cout << "report written to " << out << "\n";
  return 0;
}

// ---- convert-coco -----------------------------------------------------------

struct CocoArgs {
  std::string coco;
  std::string images;
  std::string out;
  std::string category;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

int cmd_convert_coco(const CocoArgs& a) {
  if (!fs::exists(a.coco)) throw Error::config("coco json not found: " + a.coco);
  ensure_dir(a.out);
  CocoConvertResult r =
      convert_coco_subset(a.coco, a.images, a.out, a.category, a.train_fraction, a.seed);
  std::cout << json{{"train_images", r.train_images},
                    {"val_images", r.val_images},
                    {"skipped_boxes", r.skipped_boxes}}
                   .dump()
            << "\n";
  return 0;
}

int error_exit_code(const Error& e) {
  switch (e.kind()) {
    case Error::Kind::config:
    case Error::Kind::argument:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

PlacementRule RunConfig::placement_rule() const {
  PlacementRule rule;
  if (placement_mode == "below")
    rule.mode = PlacementRule::Mode::below;
  else if (placement_mode == "above")
    rule.mode = PlacementRule::Mode::above;
  else if (placement_mode == "left")
    rule.mode = PlacementRule::Mode::left;
  else if (placement_mode == "right")
    rule.mode = PlacementRule::Mode::right;
  else
    throw Error::config("unknown placement mode '" + placement_mode + "'");
  rule.relative_scale = relative_scale;
  rule.gap_fraction = gap_fraction;
  return rule;
}

EOTConfig RunConfig::eot_config() const {
  if (!eot) return EOTConfig::disabled();
  EOTConfig e;
  e.noise_amplitude = eot_noise;
  e.brightness_delta = eot_brightness;
  e.contrast_lo = eot_contrast_lo;
  e.contrast_hi = eot_contrast_hi;
  e.rotation_max = eot_rotation_deg * 3.14159265358979323846 / 180.0;
  e.seed = seed;
  return e;
}

Scalar parse_fraction(const std::string& text) {
  auto slash = text.find('/');
  try {
    if (slash == std::string::npos) {
      size_t used = 0;
      Scalar v = std::stod(text, &used);
      if (used != text.size()) throw Error::config("trailing characters in number '" + text + "'");
      return v;
    }
    std::string num = text.substr(0, slash);
    std::string den = text.substr(slash + 1);
    size_t un = 0, ud = 0;
    Scalar n = std::stod(num, &un);
    Scalar d = std::stod(den, &ud);
    if (un != num.size() || ud != den.size() || num.empty() || den.empty())
      throw Error::config("malformed fraction '" + text + "'");
    if (d == 0) throw Error::config("zero denominator in '" + text + "'");
    return n / d;
  } catch (const std::invalid_argument&) {
    throw Error::config("cannot parse number '" + text + "'");
  } catch (const std::out_of_range&) {
    throw Error::config("number out of range '" + text + "'");
  }
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["mode"] = c.mode;
  j["use_fg"] = c.use_fg;
  j["lambda_fg"] = c.lambda_fg;
  j["lambda_tv"] = c.lambda_tv;
  j["eta0"] = c.eta0;
  j["epochs"] = c.epochs;
  j["l_o"] = c.l_o;
  j["l_c"] = c.l_c;
  j["eps1"] = c.eps1;
  j["eps2"] = c.eps2;
  j["relative_slack"] = c.relative_slack;
  j["eta_floor"] = c.eta_floor;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["eot"] = c.eot;
  j["eot_noise"] = c.eot_noise;
  j["eot_brightness"] = c.eot_brightness;
  j["eot_contrast_lo"] = c.eot_contrast_lo;
  j["eot_contrast_hi"] = c.eot_contrast_hi;
  j["eot_rotation_deg"] = c.eot_rotation_deg;
  j["placement_mode"] = c.placement_mode;
  j["relative_scale"] = c.relative_scale;
  j["gap_fraction"] = c.gap_fraction;
  j["trigger_rows"] = c.trigger_rows;
  j["trigger_cols"] = c.trigger_cols;
  j["init"] = c.init;
  j["target_class"] = c.target_class;
  j["data_dir"] = c.data_dir;
  j["annotations"] = c.annotations;
  j["detector_path"] = c.detector_path;
  j["out_dir"] = c.out_dir;
  j["checkpoint_every"] = c.checkpoint_every;
  j["resume_path"] = c.resume_path;
  return j.dump(2) + "\n";
}

void config_from_json(const std::string& text, RunConfig& c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error::config(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error::config("config root must be a JSON object");
  auto num = [&](const char* key, Scalar& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (v.is_string())
      out = parse_fraction(v.get<std::string>());
    else if (v.is_number())
      out = v.get<Scalar>();
    else
      throw Error::config(std::string("config key '") + key + "' must be a number");
  };
  try {
    if (j.contains("mode")) c.mode = j.at("mode").get<std::string>();
    if (j.contains("use_fg")) c.use_fg = j.at("use_fg").get<bool>();
    num("lambda_fg", c.lambda_fg);
    num("lambda_tv", c.lambda_tv);
    num("eta0", c.eta0);
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("l_o")) c.l_o = j.at("l_o").get<int>();
    if (j.contains("l_c")) c.l_c = j.at("l_c").get<int>();
    num("eps1", c.eps1);
    num("eps2", c.eps2);
    if (j.contains("relative_slack")) c.relative_slack = j.at("relative_slack").get<bool>();
    num("eta_floor", c.eta_floor);
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("eot")) c.eot = j.at("eot").get<bool>();
    num("eot_noise", c.eot_noise);
    num("eot_brightness", c.eot_brightness);
    num("eot_contrast_lo", c.eot_contrast_lo);
    num("eot_contrast_hi", c.eot_contrast_hi);
    num("eot_rotation_deg", c.eot_rotation_deg);
    if (j.contains("placement_mode"))
      c.placement_mode = j.at("placement_mode").get<std::string>();
    num("relative_scale", c.relative_scale);
    num("gap_fraction", c.gap_fraction);
    if (j.contains("trigger_rows")) c.trigger_rows = j.at("trigger_rows").get<int>();
    if (j.contains("trigger_cols")) c.trigger_cols = j.at("trigger_cols").get<int>();
    if (j.contains("init")) c.init = j.at("init").get<std::string>();
    if (j.contains("target_class")) c.target_class = j.at("target_class").get<int>();
    if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("annotations")) c.annotations = j.at("annotations").get<std::string>();
    if (j.contains("detector_path"))
      c.detector_path = j.at("detector_path").get<std::string>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("checkpoint_every"))
      c.checkpoint_every = j.at("checkpoint_every").get<int>();
    if (j.contains("resume_path")) c.resume_path = j.at("resume_path").get<std::string>();
  } catch (const json::exception& e) {
    throw Error::config(std::string("config type error: ") + e.what());
  }
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"out-of-box trigger toolkit"};
  app.require_subcommand(1);

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset or approach sequence");
  synth->add_option("--n", sy.n, "sample count");
  synth->add_option("--size", sy.size, "square image side");
  synth->add_option("--height", sy.height, "image height (overrides --size)");
  synth->add_option("--width", sy.width, "image width (overrides --size)");
  synth->add_option("--seed", sy.seed, "rng seed");
  synth->add_option("--out", sy.out, "output directory")->required();
  synth->add_flag("--approach", sy.approach, "emit an approach frame sequence instead");
  synth->add_option("--frames", sy.frames, "approach frame count");
  synth->add_option("--scale-lo", sy.scale_lo, "starting sign scale");
  synth->add_option("--scale-hi", sy.scale_hi, "final sign scale");
  synth->add_option("--fps", sy.fps, "frame rate stored in the annotation doc");

  TrainArgs tr;
  auto* train = app.add_subcommand("train-detector", "train the toy detector");
  train->add_option("--data", tr.data, "dataset directory")->required();
  train->add_option("--annotations", tr.annotations, "annotation file (default <data>/annotations.json)");
  train->add_option("--epochs", tr.epochs, "training epochs");
  train->add_option("--seed", tr.seed, "rng seed");
  train->add_option("--out", tr.out, "checkpoint path")->required();

  RunConfig cfg;
  std::string config_path;
  std::string eta_text, eta_floor_text, eps1_text, eps2_text, lambda_fg_text, lambda_tv_text;
  auto* attack = app.add_subcommand("attack", "optimize a trigger against a detector");
  attack->add_option("--config", config_path, "JSON config file (flags override)");
  auto* o_mode = attack->add_option("--mode", cfg.mode, "pgd | uapgd");
  auto* o_fg = attack->add_flag("--fg,!--no-fg", cfg.use_fg, "enable feature guidance");
  auto* o_lfg = attack->add_option("--lambda-fg", lambda_fg_text, "feature guidance weight");
  auto* o_ltv = attack->add_option("--lambda-tv", lambda_tv_text, "smoothness weight");
  auto* o_eta = attack->add_option("--eta", eta_text, "initial step size, e.g. 16/255");
  auto* o_epochs = attack->add_option("--epochs", cfg.epochs, "epoch budget");
  auto* o_lo = attack->add_option("--l-o", cfg.l_o, "epochs per observation window");
  auto* o_lc = attack->add_option("--l-c", cfg.l_c, "windows compared per halving check");
  auto* o_eps1 = attack->add_option("--eps1", eps1_text, "stall slack on window minima");
  auto* o_eps2 = attack->add_option("--eps2", eps2_text, "stall slack on window variances");
  auto* o_rel = attack->add_flag("--relative-slack,!--absolute-slack", cfg.relative_slack,
                                 "scale slacks by running statistics");
  auto* o_floor = attack->add_option("--eta-floor", eta_floor_text, "minimum applied step");
  auto* o_bs = attack->add_option("--batch-size", cfg.batch_size, "images per step");
  auto* o_seed = attack->add_option("--seed", cfg.seed, "rng seed");
  auto* o_eot = attack->add_flag("--eot,!--no-eot", cfg.eot, "enable EOT augmentation");
  auto* o_en = attack->add_option("--eot-noise", cfg.eot_noise, "EOT noise amplitude");
  auto* o_eb = attack->add_option("--eot-brightness", cfg.eot_brightness, "EOT brightness delta");
  auto* o_eclo = attack->add_option("--eot-contrast-lo", cfg.eot_contrast_lo, "EOT contrast low");
  auto* o_echi = attack->add_option("--eot-contrast-hi", cfg.eot_contrast_hi, "EOT contrast high");
  auto* o_erot = attack->add_option("--eot-rotation-deg", cfg.eot_rotation_deg, "EOT rotation (degrees)");
  auto* o_pm = attack->add_option("--placement", cfg.placement_mode, "below|above|left|right");
  auto* o_ps = attack->add_option("--relative-scale", cfg.relative_scale, "trigger width / box width");
  auto* o_pg = attack->add_option("--gap", cfg.gap_fraction, "gap as a fraction of box size");
  auto* o_trr = attack->add_option("--trigger-rows", cfg.trigger_rows, "trigger pixel rows");
  auto* o_trc = attack->add_option("--trigger-cols", cfg.trigger_cols, "trigger pixel cols");
  auto* o_init = attack->add_option("--init", cfg.init, "random | gray");
  auto* o_tc = attack->add_option("--target-class", cfg.target_class, "class to suppress");
  auto* o_data = attack->add_option("--data", cfg.data_dir, "dataset directory");
  auto* o_annot = attack->add_option("--annotations", cfg.annotations, "annotation file");
  auto* o_det = attack->add_option("--detector", cfg.detector_path, "detector checkpoint");
  auto* o_out = attack->add_option("--out", cfg.out_dir, "output directory");
  auto* o_ck = attack->add_option("--checkpoint-every", cfg.checkpoint_every,
                                  "save state every N epochs (0 = end only)");
  auto* o_resume = attack->add_option("--resume", cfg.resume_path, "state.json to continue from");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trigger (or clean baseline)");
  eval_cmd->add_option("--data", ev.data, "dataset or sequence directory")->required();
  eval_cmd->add_option("--annotations", ev.annotations, "annotation file");
  eval_cmd->add_option("--detector", ev.detector, "detector checkpoint")->required();
  eval_cmd->add_option("--trigger", ev.trigger, "trigger PNG");
  eval_cmd->add_flag("--no-trigger", ev.no_trigger, "clean baseline");
  eval_cmd->add_flag("--sequence", ev.sequence, "treat the dataset as an ordered frame sequence");
  eval_cmd->add_option("--threshold", ev.threshold, "detection threshold");
  eval_cmd->add_option("--workers", ev.workers, "parallel image workers");
  eval_cmd->add_option("--target-class", ev.target_class, "class to score (default: dataset's)");
  eval_cmd->add_option("--placement", ev.placement_mode, "below|above|left|right");
  eval_cmd->add_option("--relative-scale", ev.relative_scale, "trigger width / box width");
  eval_cmd->add_option("--gap", ev.gap_fraction, "gap as a fraction of box size");
  eval_cmd->add_option("--out", ev.out, "output directory")->required();

  std::vector<std::string> report_runs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "aggregate run directories into plots");
  report->add_option("--run", report_runs, "run directory (repeatable)")->required();
  report->add_option("--out", report_out, "output directory")->required();

  CocoArgs co;
  auto* coco = app.add_subcommand("convert-coco", "convert a COCO instances subset");
  coco->add_option("--coco", co.coco, "instances JSON")->required();
  coco->add_option("--images", co.images, "image directory (empty skips existence checks)");
  coco->add_option("--out", co.out, "output directory")->required();
  coco->add_option("--category", co.category, "target category name")->required();
  coco->add_option("--train-fraction", co.train_fraction, "train split fraction");
  coco->add_option("--seed", co.seed, "shuffle seed");

  std::vector<const char*> argv;
  argv.push_back("oobtrig");
  for (const auto& s : args) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(sy);
    if (*train) return cmd_train_detector(tr);
    if (*attack) {
      if (!config_path.empty()) {
        // File first, then re-apply explicit flags on top.
        RunConfig file_cfg;
        config_from_json(read_text_file(config_path), file_cfg);
        RunConfig flag_cfg = cfg;
        cfg = file_cfg;
        if (o_mode->count()) cfg.mode = flag_cfg.mode;
        if (o_fg->count()) cfg.use_fg = flag_cfg.use_fg;
        if (o_epochs->count()) cfg.epochs = flag_cfg.epochs;
        if (o_lo->count()) cfg.l_o = flag_cfg.l_o;
        if (o_lc->count()) cfg.l_c = flag_cfg.l_c;
        if (o_rel->count()) cfg.relative_slack = flag_cfg.relative_slack;
        if (o_bs->count()) cfg.batch_size = flag_cfg.batch_size;
        if (o_seed->count()) cfg.seed = flag_cfg.seed;
        if (o_eot->count()) cfg.eot = flag_cfg.eot;
        if (o_en->count()) cfg.eot_noise = flag_cfg.eot_noise;
        if (o_eb->count()) cfg.eot_brightness = flag_cfg.eot_brightness;
        if (o_eclo->count()) cfg.eot_contrast_lo = flag_cfg.eot_contrast_lo;
        if (o_echi->count()) cfg.eot_contrast_hi = flag_cfg.eot_contrast_hi;
        if (o_erot->count()) cfg.eot_rotation_deg = flag_cfg.eot_rotation_deg;
        if (o_pm->count()) cfg.placement_mode = flag_cfg.placement_mode;
        if (o_ps->count()) cfg.relative_scale = flag_cfg.relative_scale;
        if (o_pg->count()) cfg.gap_fraction = flag_cfg.gap_fraction;
        if (o_trr->count()) cfg.trigger_rows = flag_cfg.trigger_rows;
        if (o_trc->count()) cfg.trigger_cols = flag_cfg.trigger_cols;
        if (o_init->count()) cfg.init = flag_cfg.init;
        if (o_tc->count()) cfg.target_class = flag_cfg.target_class;
        if (o_data->count()) cfg.data_dir = flag_cfg.data_dir;
        if (o_annot->count()) cfg.annotations = flag_cfg.annotations;
        if (o_det->count()) cfg.detector_path = flag_cfg.detector_path;
        if (o_out->count()) cfg.out_dir = flag_cfg.out_dir;
        if (o_ck->count()) cfg.checkpoint_every = flag_cfg.checkpoint_every;
        if (o_resume->count()) cfg.resume_path = flag_cfg.resume_path;
      }
      if (o_eta->count()) cfg.eta0 = parse_fraction(eta_text);
      if (o_floor->count()) cfg.eta_floor = parse_fraction(eta_floor_text);
      if (o_eps1->count()) cfg.eps1 = parse_fraction(eps1_text);
      if (o_eps2->count()) cfg.eps2 = parse_fraction(eps2_text);
      if (o_lfg->count()) cfg.lambda_fg = parse_fraction(lambda_fg_text);
      if (o_ltv->count()) cfg.lambda_tv = parse_fraction(lambda_tv_text);
      return cmd_attack(cfg);
    }
    if (*eval_cmd) return cmd_eval(ev);
    if (*report) return cmd_report(report_runs, report_out);
    if (*coco) return cmd_convert_coco(co);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return error_exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace oob
