#include "oob/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "oob/error.hpp"
#include "oob/rng.hpp"

using nlohmann::json;

namespace oob {

namespace {

Scalar sigmoid_s(Scalar x) { return 1.0 / (1.0 + std::exp(-x)); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Tensor he_init(const std::vector<int>& shape, int fan_in, Rng& rng) {
  Tensor t(shape);
  const Scalar std_dev = std::sqrt(2.0 / fan_in);
  for (long i = 0; i < t.size(); ++i) t[i] = rng.normal() * std_dev;
  return t;
}

}  // namespace

std::vector<Detection> DetectorContract::detect(const Tensor& image) const {
  const auto [h, w] = input_size();
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != h || image.dim(2) != w)
    throw Error::argument("detect: image shape does not match detector input size");
  Tensor batch({1, 3, h, w});
  std::copy(image.data(), image.data() + image.size(), batch.data());
  Tape tape;
  ForwardResult r = forward(tape, tape.leaf(batch, false));
  return r.detections.empty() ? std::vector<Detection>{} : r.detections[0];
}

FeatureMap DetectorContract::features(const Tensor& image) const {
  const auto [h, w] = input_size();
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != h || image.dim(2) != w)
    throw Error::argument("features: image shape does not match detector input size");
  Tensor batch({1, 3, h, w});
  std::copy(image.data(), image.data() + image.size(), batch.data());
  Tape tape;
  ForwardResult r = forward(tape, tape.leaf(batch, false));
  FeatureMap fm;
  fm.level_names = r.level_names;
  for (Var v : r.neck) {
    const Tensor& t = tape.value(v);
    Tensor level({t.dim(1), t.dim(2), t.dim(3)});
    std::copy(t.data(), t.data() + level.size(), level.data());
    fm.levels.push_back(std::move(level));
  }
  return fm;
}

ToyDetector::ToyDetector(int class_count, int input_h, int input_w, std::uint64_t seed)
    : classes_(class_count), in_h_(input_h), in_w_(input_w) {
  if (class_count <= 0) throw Error::argument("ToyDetector: class_count must be positive");
  if (input_h % 8 != 0 || input_w % 8 != 0 || input_h < 32 || input_w < 32)
    throw Error::argument("ToyDetector: input size must be >= 32 and divisible by 8");

  Rng rng(seed);
  auto make = [&](int cout, int cin, int k, int stride, int pad) {
    Conv c;
    c.w = he_init({cout, cin, k, k}, cin * k * k, rng);
    c.b = Tensor({cout});
    c.stride = stride;
    c.pad = pad;
    return c;
  };
  stem_ = make(12, 3, 3, 1, 1);
  c1_ = make(20, 12, 3, 2, 1);
  c2_ = make(28, 20, 3, 2, 1);
  c3_ = make(40, 28, 3, 2, 1);
  lat3_ = make(28, 40, 1, 1, 0);
  lat2_ = make(28, 28, 1, 1, 0);
  fuse_ = make(28, 56, 3, 1, 1);
  head_ = make(24, 28, 3, 1, 1);
  pred_ = make(5 + classes_, 24, 1, 1, 0);
  // start objectness and class probabilities low
  for (int c = 4; c < 5 + classes_; ++c) pred_.b[c] = -2.0;
}

std::vector<std::pair<std::string, Tensor*>> ToyDetector::named_params() {
  return {{"stem.w", &stem_.w}, {"stem.b", &stem_.b}, {"c1.w", &c1_.w},   {"c1.b", &c1_.b},
          {"c2.w", &c2_.w},     {"c2.b", &c2_.b},     {"c3.w", &c3_.w},   {"c3.b", &c3_.b},
          {"lat3.w", &lat3_.w}, {"lat3.b", &lat3_.b}, {"lat2.w", &lat2_.w}, {"lat2.b", &lat2_.b},
          {"fuse.w", &fuse_.w}, {"fuse.b", &fuse_.b}, {"head.w", &head_.w}, {"head.b", &head_.b},
          {"pred.w", &pred_.w}, {"pred.b", &pred_.b}};
}

std::vector<std::pair<std::string, const Tensor*>> ToyDetector::named_params() const {
  auto mut = const_cast<ToyDetector*>(this)->named_params();
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [n, t] : mut) out.emplace_back(n, t);
  return out;
}

std::string ToyDetector::architecture_hash() const {
  std::ostringstream desc;
  desc << "toy-det-v1;classes=" << classes_ << ";in=" << in_h_ << "x" << in_w_
       << ";act=silu;strides=4,8";
  for (const auto& [name, t] : named_params()) {
    desc << ";" << name << "=";
    for (int d = 0; d < t->rank(); ++d) desc << t->dim(d) << (d + 1 < t->rank() ? "x" : "");
  }
  std::ostringstream hex;
  hex << std::hex << fnv1a(desc.str());
  return hex.str();
}

ForwardResult ToyDetector::forward(Tape& tape, Var images) const {
  return forward_impl(tape, images, false, nullptr);
}

ForwardResult ToyDetector::forward_trainable(Tape& tape, Var images,
                                             std::vector<Var>& weight_vars) const {
  weight_vars.clear();
  return forward_impl(tape, images, true, &weight_vars);
}

ForwardResult ToyDetector::forward_impl(Tape& tape, Var images, bool weight_grads,
                                        std::vector<Var>* weight_vars) const {
  const Tensor& im = tape.value(images);
  if (im.rank() != 4 || im.dim(1) != 3 || im.dim(2) != in_h_ || im.dim(3) != in_w_)
    throw Error::argument("detector forward: expected images [N,3,H,W] matching input size");
  const int n = im.dim(0);

  auto wb = [&](const Conv& c) {
    Var w = tape.leaf(c.w, weight_grads);
    Var b = tape.leaf(c.b, weight_grads);
    if (weight_vars) {
      weight_vars->push_back(w);
      weight_vars->push_back(b);
    }
    return std::make_pair(w, b);
  };
  auto conv = [&](Var x, const Conv& c, const std::pair<Var, Var>& p) {
    return tape.bias_add(tape.conv2d(x, p.first, c.stride, c.pad), p.second);
  };

  Var x0 = tape.silu(conv(images, stem_, wb(stem_)));
  Var x1 = tape.silu(conv(x0, c1_, wb(c1_)));
  Var x2 = tape.silu(conv(x1, c2_, wb(c2_)));
  Var x3 = tape.silu(conv(x2, c3_, wb(c3_)));
  Var p3 = tape.silu(conv(x3, lat3_, wb(lat3_)));
  Var l2 = tape.silu(conv(x2, lat2_, wb(lat2_)));
  Var cat = tape.concat_channels(l2, tape.upsample2(p3));
  Var p2 = tape.silu(conv(cat, fuse_, wb(fuse_)));

  const auto hp = wb(head_);
  const auto pp = wb(pred_);
  auto run_head = [&](Var p) {
    Var h = tape.silu(tape.bias_add(tape.conv2d(p, hp.first, 1, 1), hp.second));
    return tape.bias_add(tape.conv2d(h, pp.first, 1, 0), pp.second);
  };
  Var o2 = run_head(p2);
  Var o3 = run_head(p3);

  ForwardResult r;
  r.neck = {p2, p3};
  r.head = {o2, o3};
  r.strides = {4, 8};
  r.level_names = {"stride4", "stride8"};
  r.detections.assign(n, {});
  for (int li = 0; li < 2; ++li) {
    const Tensor& hv = tape.value(r.head[li]);
    const int s = r.strides[li];
    const int gh = hv.dim(2), gw = hv.dim(3);
    for (int b = 0; b < n; ++b)
      for (int cy = 0; cy < gh; ++cy)
        for (int cx = 0; cx < gw; ++cx) {
          const Scalar obj = sigmoid_s(hv.at4(b, 4, cy, cx));
          int best = 0;
          Scalar best_logit = hv.at4(b, 5, cy, cx);
          for (int c = 1; c < classes_; ++c) {
            const Scalar l = hv.at4(b, 5 + c, cy, cx);
            if (l > best_logit) {
              best_logit = l;
              best = c;
            }
          }
          const Scalar cls = sigmoid_s(best_logit);
          if (obj * cls < floor_) continue;
          const Scalar px = (cx + sigmoid_s(hv.at4(b, 0, cy, cx))) * s;
          const Scalar py = (cy + sigmoid_s(hv.at4(b, 1, cy, cx))) * s;
          const Scalar bw = sigmoid_s(hv.at4(b, 2, cy, cx)) * in_w_;
          const Scalar bh = sigmoid_s(hv.at4(b, 3, cy, cx)) * in_h_;
          Detection d;
          d.box = {std::max<Scalar>(0, px - bw / 2), std::max<Scalar>(0, py - bh / 2),
                   std::min<Scalar>(in_w_, px + bw / 2), std::min<Scalar>(in_h_, py + bh / 2)};
          if (!d.box.valid()) continue;
          d.class_id = best;
          d.conf_coor = obj;
          d.conf_cls = cls;
          d.level = li;
          d.cell_y = cy;
          d.cell_x = cx;
          d.image = b;
          r.detections[b].push_back(d);
        }
  }
  return r;
}

void ToyDetector::save_checkpoint(const std::string& path,
                                  const std::vector<std::string>& class_names) const {
  json header;
  header["format"] = 1;
  header["arch"] = architecture_hash();
  header["class_count"] = classes_;
  header["input_size"] = {in_h_, in_w_};
  header["class_names"] = class_names;
  header["arrays"] = json::array();
  for (const auto& [name, t] : named_params()) {
    json a;
    a["name"] = name;
    a["shape"] = t->shape();
    header["arrays"].push_back(a);
  }
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error::io("cannot write checkpoint " + path);
  out.write("OOBCKPT1", 8);
  const std::uint64_t hl = hs.size();
  out.write(reinterpret_cast<const char*>(&hl), sizeof(hl));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : named_params())
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(Scalar)));
  if (!out) throw Error::io("short write on checkpoint " + path);
}

ToyDetector ToyDetector::load_checkpoint(const std::string& path,
                                         std::vector<std::string>* class_names) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error::io("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "OOBCKPT1", 8) != 0)
    throw Error::ingestion("not a detector checkpoint: " + path);
  std::uint64_t hl = 0;
  in.read(reinterpret_cast<char*>(&hl), sizeof(hl));
  if (!in || hl > (1u << 20)) throw Error::ingestion("corrupt checkpoint header: " + path);
  std::string hs(hl, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hl));
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception&) {
    throw Error::ingestion("corrupt checkpoint header: " + path);
  }

  ToyDetector det(header.at("class_count").get<int>(), header.at("input_size")[0].get<int>(),
                  header.at("input_size")[1].get<int>(), 0);
  if (header.at("arch").get<std::string>() != det.architecture_hash())
    throw Error::validation("checkpoint architecture mismatch for " + path);
  if (class_names) *class_names = header.at("class_names").get<std::vector<std::string>>();

  auto params = det.named_params();
  if (header.at("arrays").size() != params.size())
    throw Error::validation("checkpoint array count mismatch for " + path);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = header["arrays"][i];
    if (a.at("name").get<std::string>() != params[i].first ||
        a.at("shape").get<std::vector<int>>() != params[i].second->shape())
      throw Error::validation("checkpoint array layout mismatch for " + path);
    in.read(reinterpret_cast<char*>(params[i].second->data()),
            static_cast<std::streamsize>(params[i].second->size() * sizeof(Scalar)));
  }
  if (!in) throw Error::ingestion("checkpoint truncated: " + path);
  return det;
}

TrainMetrics train_toy_detector(ToyDetector& detector, const Dataset& dataset, int epochs,
                                std::uint64_t seed) {
  if (dataset.samples.size() < 50)
    throw Error::config("training needs at least 50 samples, got " +
                        std::to_string(dataset.samples.size()));
  const auto [in_h, in_w] = detector.input_size();
  if (dataset.height() != in_h || dataset.width() != in_w)
    throw Error::config("dataset image size does not match detector input size");
  if (epochs < 0) throw Error::argument("epochs must be non-negative");

  const int classes = detector.class_count();
  const int batch_size = 16;
  const Scalar lr = 1e-3, b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
  const Scalar box_weight = 5.0, obj_pos_weight = 16.0;
  const Scalar level_cut = 0.28 * std::min(in_h, in_w);

  auto params = detector.named_params();
  std::vector<Tensor> m, v;
  for (auto& [name, t] : params) {
    m.push_back(Tensor(t->shape()));
    v.push_back(Tensor(t->shape()));
  }

  TrainMetrics metrics;
  long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto batches = split_batches(dataset, batch_size, stream_seed(seed, 1000 + epoch));
    Scalar epoch_loss = 0;
    for (const auto& batch : batches) {
      const int n = static_cast<int>(batch.size());
      Tensor images({n, 3, in_h, in_w});
      for (int i = 0; i < n; ++i) {
        const Tensor& src = dataset.samples[batch[i]].image;
        std::copy(src.data(), src.data() + src.size(),
                  images.data() + static_cast<long>(i) * src.size());
      }

      Tape tape;
      std::vector<Var> wv;
      ForwardResult fwd = detector.forward_trainable(tape, tape.leaf(images, false), wv);

      Var total{};
      for (int li = 0; li < 2; ++li) {
        const Tensor& hv = tape.value(fwd.head[li]);
        const int s = fwd.strides[li];
        const int gh = hv.dim(2), gw = hv.dim(3);
        const int k = 5 + classes;
        Tensor t_mse({n, k, gh, gw}), m_mse({n, k, gh, gw});
        Tensor t_bce({n, k, gh, gw}), m_bce({n, k, gh, gw});
        for (int i = 0; i < n; ++i)
          for (int cy = 0; cy < gh; ++cy)
            for (int cx = 0; cx < gw; ++cx) m_bce.at4(i, 4, cy, cx) = 1.0;
        for (int i = 0; i < n; ++i) {
          for (const auto& ann : dataset.samples[batch[i]].annotations) {
            const Scalar bw = ann.box.width(), bh = ann.box.height();
            const int li_target = std::max(bw, bh) <= level_cut ? 0 : 1;
            if (li_target != li) continue;
            const int gx = std::clamp(static_cast<int>(ann.box.center_x() / s), 0, gw - 1);
            const int gy = std::clamp(static_cast<int>(ann.box.center_y() / s), 0, gh - 1);
            t_mse.at4(i, 0, gy, gx) = ann.box.center_x() / s - gx;
            t_mse.at4(i, 1, gy, gx) = ann.box.center_y() / s - gy;
            t_mse.at4(i, 2, gy, gx) = bw / in_w;
            t_mse.at4(i, 3, gy, gx) = bh / in_h;
            for (int c = 0; c < 4; ++c) m_mse.at4(i, c, gy, gx) = box_weight;
            t_bce.at4(i, 4, gy, gx) = 1.0;
            m_bce.at4(i, 4, gy, gx) = obj_pos_weight;
            for (int c = 0; c < classes; ++c) {
              t_bce.at4(i, 5 + c, gy, gx) = c == ann.class_id ? 1.0 : 0.0;
              m_bce.at4(i, 5 + c, gy, gx) = 1.0;
            }
          }
        }
        Var x = fwd.head[li];
        Var dm = tape.sub(tape.sigmoid(x), tape.leaf(t_mse, false));
        Var mse = tape.sum(tape.mul(tape.leaf(m_mse, false), tape.square(dm)));
        Var bmap = tape.sub(tape.softplus(x), tape.mul(x, tape.leaf(t_bce, false)));
        Var bce = tape.sum(tape.mul(tape.leaf(m_bce, false), bmap));
        Var lvl = tape.add(mse, bce);
        total = total.valid() ? tape.add(total, lvl) : lvl;
      }
      total = tape.mul_scalar(total, 1.0 / n);
      epoch_loss += tape.scalar_value(total);

      tape.backward(total);
      ++step;
      const Scalar bc1 = 1.0 - std::pow(b1, static_cast<Scalar>(step));
      const Scalar bc2 = 1.0 - std::pow(b2, static_cast<Scalar>(step));
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const Tensor& g = tape.grad(wv[pi]);
        Tensor& w = *params[pi].second;
        for (long j = 0; j < w.size(); ++j) {
          m[pi][j] = b1 * m[pi][j] + (1 - b1) * g[j];
          v[pi][j] = b2 * v[pi][j] + (1 - b2) * g[j] * g[j];
          w[j] -= lr * (m[pi][j] / bc1) / (std::sqrt(v[pi][j] / bc2) + adam_eps);
        }
      }
    }
    metrics.epoch_losses.push_back(epoch_loss / static_cast<Scalar>(batches.size()));
  }

  metrics.clean_detection_rate = detection_rate(detector, dataset, dataset.target_class, 0.5);
  return metrics;
}

Scalar detection_rate(const DetectorContract& detector, const Dataset& dataset,
                      int target_class, Scalar threshold) {
  if (dataset.samples.empty()) return 0;
  int detected = 0;
  for (const auto& s : dataset.samples) {
    for (const auto& d : detector.detect(s.image)) {
      if (d.class_id == target_class && d.score() >= threshold) {
        ++detected;
        break;
      }
    }
  }
  return static_cast<Scalar>(detected) / static_cast<Scalar>(dataset.samples.size());
}

}  // namespace oob
