#include "oob/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

namespace oob {

using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

int Tape::push(Tensor value, std::vector<int> parents,
               std::function<void(Tape&, const Tensor&)> back) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  for (int p : n.parents)
    if (nodes_[static_cast<std::size_t>(p)].needs_grad) n.needs_grad = true;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw Error::argument("Tape: invalid var handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw Error::argument("Tape: invalid var handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::scalar(Scalar value, bool requires_grad) {
  return leaf(Tensor::full({1}, value), requires_grad);
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

Scalar Tape::scalar_value(Var v) const {
  const Tensor& t = node(v).value;
  if (t.size() != 1) throw Error::argument("Tape: scalar_value on non-scalar");
  return t[0];
}

bool Tape::requires_grad(Var v) const { return node(v).needs_grad; }

void Tape::ensure_grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.shape());
    n.grad_alloc = true;
  }
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad_alloc) return n.grad;
  if (zero_.shape() != n.value.shape())
    const_cast<Tape*>(this)->zero_ = Tensor(n.value.shape());
  return zero_;
}

void Tape::accumulate(Var v, const Tensor& delta) {
  Node& n = node(v);
  if (!n.needs_grad) return;
  ensure_grad(v.id);
  if (!n.grad.same_shape(delta)) throw Error::argument("Tape: gradient shape mismatch");
  Scalar* g = n.grad.data();
  const Scalar* d = delta.data();
  for (long i = 0; i < delta.size(); ++i) g[i] += d[i];
}

Tensor* Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (!n.needs_grad) return nullptr;
  ensure_grad(v.id);
  return &n.grad;
}

void Tape::backward(Var root) {
  Node& r = node(root);
  if (r.value.size() != 1) throw Error::argument("Tape: backward root must be scalar");
  for (auto& n : nodes_) {
    if (n.grad_alloc) n.grad.fill(0);
  }
  ensure_grad(root.id);
  r.grad[0] = 1;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || !n.back || !n.grad_alloc) continue;
    n.back(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw Error::argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var Tape::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  check_same_shape(av, bv, "add");
  Tensor out = av;
  for (long i = 0; i < out.size(); ++i) out[i] += bv[i];
  int id = push(std::move(out), {a.id, b.id}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
  return {id};
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  check_same_shape(av, bv, "sub");
  Tensor out = av;
  for (long i = 0; i < out.size(); ++i) out[i] -= bv[i];
  int id = push(std::move(out), {a.id, b.id}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (Tensor* gb = t.grad_buffer(b)) {
      for (long i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
  return {id};
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  check_same_shape(av, bv, "mul");
  Tensor out = av;
  for (long i = 0; i < out.size(); ++i) out[i] *= bv[i];
  int id = push(std::move(out), {a.id, b.id}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av2 = t.value(a);
    const Tensor& bv2 = t.value(b);
    if (Tensor* ga = t.grad_buffer(a))
      for (long i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv2[i];
    if (Tensor* gb = t.grad_buffer(b))
      for (long i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av2[i];
  });
  return {id};
}

Var Tape::add_scalar(Var a, Scalar s) {
  Tensor out = value(a);
  for (long i = 0; i < out.size(); ++i) out[i] += s;
  int id = push(std::move(out), {a.id},
                [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
  return {id};
}

Var Tape::mul_scalar(Var a, Scalar s) {
  Tensor out = value(a);
  for (long i = 0; i < out.size(); ++i) out[i] *= s;
  int id = push(std::move(out), {a.id}, [a, s](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (long i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * s;
  });
  return {id};
}

Var Tape::square(Var a) {
  Tensor out = value(a);
  for (long i = 0; i < out.size(); ++i) out[i] *= out[i];
  int id = push(std::move(out), {a.id}, [a](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    if (Tensor* ga = t.grad_buffer(a))
      for (long i = 0; i < g.size(); ++i) (*ga)[i] += 2 * av[i] * g[i];
  });
  return {id};
}

Var Tape::sqrt_guarded(Var a) {
  Tensor out = value(a);
  for (long i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
  int id = push(std::move(out), {a.id}, [a](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    if (Tensor* ga = t.grad_buffer(a)) {
      for (long i = 0; i < g.size(); ++i) {
        const Scalar s = std::sqrt(av[i]);
        if (s > 0) (*ga)[i] += g[i] / (2 * s);
      }
    }
  });
  return {id};
}

Var Tape::sigmoid(Var a) {
  Tensor out = value(a);
  for (long i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  Var result{push(std::move(out), {a.id}, nullptr)};
  // backward reads the node's own output value
  Node& n = node(result);
  if (n.needs_grad) {
    n.back = [a, result](Tape& t, const Tensor& g) {
      const Tensor& y = t.value(result);
      if (Tensor* ga = t.grad_buffer(a))
        for (long i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (1 - y[i]);
    };
  }
  return result;
}

Var Tape::silu(Var a) {
  const Tensor& av = value(a);
  Tensor out = av;
  for (long i = 0; i < out.size(); ++i) {
    const Scalar s = 1.0 / (1.0 + std::exp(-out[i]));
    out[i] *= s;
  }
  int id = push(std::move(out), {a.id}, [a](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(a);
    if (Tensor* ga = t.grad_buffer(a)) {
      for (long i = 0; i < g.size(); ++i) {
        const Scalar s = 1.0 / (1.0 + std::exp(-x[i]));
        (*ga)[i] += g[i] * (s + x[i] * s * (1 - s));
      }
    }
  });
  return {id};
}

Var Tape::softplus(Var a) {
  Tensor out = value(a);
  for (long i = 0; i < out.size(); ++i) {
    const Scalar x = out[i];
    out[i] = x > 30 ? x : std::log1p(std::exp(x));
  }
  int id = push(std::move(out), {a.id}, [a](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(a);
    if (Tensor* ga = t.grad_buffer(a))
      for (long i = 0; i < g.size(); ++i)
        (*ga)[i] += g[i] / (1.0 + std::exp(-x[i]));
  });
  return {id};
}

Var Tape::clamp01(Var a) {
  const Tensor& av = value(a);
  Tensor out = av;
  for (long i = 0; i < out.size(); ++i)
    out[i] = std::min<Scalar>(1, std::max<Scalar>(0, out[i]));
  int id = push(std::move(out), {a.id}, [a](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(a);
    if (Tensor* ga = t.grad_buffer(a))
      for (long i = 0; i < g.size(); ++i)
        if (x[i] >= 0 && x[i] <= 1) (*ga)[i] += g[i];
  });
  return {id};
}

// ---------------------------------------------------------------------------
// structure

Var Tape::bias_add(Var x, Var bias) {
  const Tensor& xv = value(x);
  const Tensor& bv = value(bias);
  if (xv.rank() != 4 || bv.rank() != 1 || bv.dim(0) != xv.dim(1))
    throw Error::argument("bias_add: expected [N,C,H,W] and [C]");
  const int N = xv.dim(0), C = xv.dim(1);
  const long plane = static_cast<long>(xv.dim(2)) * xv.dim(3);
  Tensor out = xv;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      Scalar* p = out.data() + (static_cast<long>(n) * C + c) * plane;
      const Scalar b = bv[c];
      for (long i = 0; i < plane; ++i) p[i] += b;
    }
  int id = push(std::move(out), {x.id, bias.id},
                [x, bias, N, C, plane](Tape& t, const Tensor& g) {
                  t.accumulate(x, g);
                  if (Tensor* gb = t.grad_buffer(bias)) {
                    for (int n = 0; n < N; ++n)
                      for (int c = 0; c < C; ++c) {
                        const Scalar* p = g.data() + (static_cast<long>(n) * C + c) * plane;
                        Scalar acc = 0;
                        for (long i = 0; i < plane; ++i) acc += p[i];
                        (*gb)[c] += acc;
                      }
                  }
                });
  return {id};
}

Var Tape::concat_channels(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rank() != 4 || bv.rank() != 4 || av.dim(0) != bv.dim(0) ||
      av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
    throw Error::argument("concat_channels: incompatible shapes");
  const int N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1);
  const long plane = static_cast<long>(av.dim(2)) * av.dim(3);
  Tensor out({N, Ca + Cb, av.dim(2), av.dim(3)});
  for (int n = 0; n < N; ++n) {
    std::copy(av.data() + n * Ca * plane, av.data() + (n + 1) * Ca * plane,
              out.data() + static_cast<long>(n) * (Ca + Cb) * plane);
    std::copy(bv.data() + n * Cb * plane, bv.data() + (n + 1) * Cb * plane,
              out.data() + static_cast<long>(n) * (Ca + Cb) * plane + Ca * plane);
  }
  int id = push(std::move(out), {a.id, b.id},
                [a, b, N, Ca, Cb, plane](Tape& t, const Tensor& g) {
                  if (Tensor* ga = t.grad_buffer(a))
                    for (int n = 0; n < N; ++n) {
                      const Scalar* src = g.data() + static_cast<long>(n) * (Ca + Cb) * plane;
                      Scalar* dst = ga->data() + static_cast<long>(n) * Ca * plane;
                      for (long i = 0; i < Ca * plane; ++i) dst[i] += src[i];
                    }
                  if (Tensor* gb = t.grad_buffer(b))
                    for (int n = 0; n < N; ++n) {
                      const Scalar* src =
                          g.data() + static_cast<long>(n) * (Ca + Cb) * plane + Ca * plane;
                      Scalar* dst = gb->data() + static_cast<long>(n) * Cb * plane;
                      for (long i = 0; i < Cb * plane; ++i) dst[i] += src[i];
                    }
                });
  return {id};
}

Var Tape::upsample2(Var x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 4) throw Error::argument("upsample2: expected [N,C,H,W]");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  Tensor out({N, C, H * 2, W * 2});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const Scalar v = xv.at4(n, c, h, w);
          out.at4(n, c, 2 * h, 2 * w) = v;
          out.at4(n, c, 2 * h, 2 * w + 1) = v;
          out.at4(n, c, 2 * h + 1, 2 * w) = v;
          out.at4(n, c, 2 * h + 1, 2 * w + 1) = v;
        }
  int id = push(std::move(out), {x.id}, [x, N, C, H, W](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_buffer(x)) {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w)
              gx->at4(n, c, h, w) += g.at4(n, c, 2 * h, 2 * w) +
                                     g.at4(n, c, 2 * h, 2 * w + 1) +
                                     g.at4(n, c, 2 * h + 1, 2 * w) +
                                     g.at4(n, c, 2 * h + 1, 2 * w + 1);
    }
  });
  return {id};
}

Var Tape::softmax_channels(Var x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 4) throw Error::argument("softmax_channels: expected [N,C,H,W]");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  Tensor out = xv;
  const long plane = static_cast<long>(H) * W;
  for (int n = 0; n < N; ++n)
    for (long i = 0; i < plane; ++i) {
      Scalar m = -1e300;
      for (int c = 0; c < C; ++c)
        m = std::max(m, out[(static_cast<long>(n) * C + c) * plane + i]);
      Scalar z = 0;
      for (int c = 0; c < C; ++c) {
        Scalar& v = out[(static_cast<long>(n) * C + c) * plane + i];
        v = std::exp(v - m);
        z += v;
      }
      for (int c = 0; c < C; ++c)
        out[(static_cast<long>(n) * C + c) * plane + i] /= z;
    }
  Var result{push(std::move(out), {x.id}, nullptr)};
  Node& n = node(result);
  if (n.needs_grad) {
    n.back = [x, result, N, C, plane](Tape& t, const Tensor& g) {
      const Tensor& y = t.value(result);
      if (Tensor* gx = t.grad_buffer(x)) {
        for (int b = 0; b < N; ++b)
          for (long i = 0; i < plane; ++i) {
            Scalar dot = 0;
            for (int c = 0; c < C; ++c) {
              const long idx = (static_cast<long>(b) * C + c) * plane + i;
              dot += g[idx] * y[idx];
            }
            for (int c = 0; c < C; ++c) {
              const long idx = (static_cast<long>(b) * C + c) * plane + i;
              (*gx)[idx] += y[idx] * (g[idx] - dot);
            }
          }
      }
    };
  }
  return result;
}

// conv2d via im2col: columns are [Cin*kh*kw x N*Ho*Wo], weights [Cout x Cin*kh*kw].
namespace {

void im2col(const Tensor& x, int kh, int kw, int stride, int pad, MatrixRM& cols,
            int Ho, int Wo) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  cols.setZero(static_cast<long>(C) * kh * kw, static_cast<long>(N) * Ho * Wo);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < kh; ++i)
        for (int j = 0; j < kw; ++j) {
          const long row = (static_cast<long>(c) * kh + i) * kw + j;
          for (int ho = 0; ho < Ho; ++ho) {
            const int hi = ho * stride + i - pad;
            if (hi < 0 || hi >= H) continue;
            const long col_base = (static_cast<long>(n) * Ho + ho) * Wo;
            for (int wo = 0; wo < Wo; ++wo) {
              const int wi = wo * stride + j - pad;
              if (wi < 0 || wi >= W) continue;
              cols(row, col_base + wo) = x.at4(n, c, hi, wi);
            }
          }
        }
}

void col2im_accumulate(const MatrixRM& cols, int N, int C, int H, int W, int kh,
                       int kw, int stride, int pad, int Ho, int Wo, Tensor& out) {
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < kh; ++i)
        for (int j = 0; j < kw; ++j) {
          const long row = (static_cast<long>(c) * kh + i) * kw + j;
          for (int ho = 0; ho < Ho; ++ho) {
            const int hi = ho * stride + i - pad;
            if (hi < 0 || hi >= H) continue;
            const long col_base = (static_cast<long>(n) * Ho + ho) * Wo;
            for (int wo = 0; wo < Wo; ++wo) {
              const int wi = wo * stride + j - pad;
              if (wi < 0 || wi >= W) continue;
              out.at4(n, c, hi, wi) += cols(row, col_base + wo);
            }
          }
        }
}

}  // namespace

Var Tape::conv2d(Var x, Var w, int stride, int pad) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  if (xv.rank() != 4 || wv.rank() != 4)
    throw Error::argument("conv2d: expected [N,Cin,H,W] and [Cout,Cin,kh,kw]");
  if (xv.dim(1) != wv.dim(1)) throw Error::argument("conv2d: channel mismatch");
  const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw Error::argument("conv2d: output would be empty");

  MatrixRM cols;
  im2col(xv, kh, kw, stride, pad, cols, Ho, Wo);
  ConstMapRM wmat(wv.data(), Cout, static_cast<long>(Cin) * kh * kw);

  Tensor out({N, Cout, Ho, Wo});
  // GEMM result is [Cout x N*Ho*Wo]; scatter into NCHW order
  MatrixRM prod = wmat * cols;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < Cout; ++c) {
      Scalar* dst = out.data() + (static_cast<long>(n) * Cout + c) * Ho * Wo;
      const Scalar* src = prod.row(c).data() + static_cast<long>(n) * Ho * Wo;
      std::copy(src, src + static_cast<long>(Ho) * Wo, dst);
    }

  int id = push(std::move(out), {x.id, w.id},
                [x, w, N, Cin, H, W, Cout, kh, kw, Ho, Wo, stride, pad](
                    Tape& t, const Tensor& g) {
                  // reshape upstream grad to [Cout x N*Ho*Wo]
                  MatrixRM gmat(Cout, static_cast<long>(N) * Ho * Wo);
                  for (int n = 0; n < N; ++n)
                    for (int c = 0; c < Cout; ++c) {
                      const Scalar* src =
                          g.data() + (static_cast<long>(n) * Cout + c) * Ho * Wo;
                      std::copy(src, src + static_cast<long>(Ho) * Wo,
                                gmat.row(c).data() + static_cast<long>(n) * Ho * Wo);
                    }
                  const Tensor& xv2 = t.value(x);
                  const Tensor& wv2 = t.value(w);
                  if (Tensor* gw = t.grad_buffer(w)) {
                    MatrixRM cols2;
                    im2col(xv2, kh, kw, stride, pad, cols2, Ho, Wo);
                    MatrixRM dW = gmat * cols2.transpose();
                    Scalar* p = gw->data();
                    for (long i = 0; i < dW.rows(); ++i)
                      for (long j = 0; j < dW.cols(); ++j)
                        p[i * dW.cols() + j] += dW(i, j);
                  }
                  if (Tensor* gx = t.grad_buffer(x)) {
                    ConstMapRM wmat2(wv2.data(), Cout,
                                     static_cast<long>(Cin) * kh * kw);
                    MatrixRM dcols = wmat2.transpose() * gmat;
                    col2im_accumulate(dcols, N, Cin, H, W, kh, kw, stride, pad,
                                      Ho, Wo, *gx);
                  }
                });
  return {id};
}

// ---------------------------------------------------------------------------
// reductions / indexing

Var Tape::sum(Var x) {
  const Tensor& xv = value(x);
  Scalar acc = 0;
  for (long i = 0; i < xv.size(); ++i) acc += xv[i];
  int id = push(Tensor::full({1}, acc), {x.id}, [x](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_buffer(x))
      for (long i = 0; i < gx->size(); ++i) (*gx)[i] += g[0];
  });
  return {id};
}

Var Tape::mean(Var x) {
  const Tensor& xv = value(x);
  if (xv.size() == 0) throw Error::argument("mean: empty tensor");
  const Scalar inv = 1.0 / static_cast<Scalar>(xv.size());
  Scalar acc = 0;
  for (long i = 0; i < xv.size(); ++i) acc += xv[i];
  int id = push(Tensor::full({1}, acc * inv), {x.id},
                [x, inv](Tape& t, const Tensor& g) {
                  if (Tensor* gx = t.grad_buffer(x))
                    for (long i = 0; i < gx->size(); ++i) (*gx)[i] += g[0] * inv;
                });
  return {id};
}

Var Tape::sum_per_image(Var x) {
  const Tensor& xv = value(x);
  if (xv.rank() < 2) throw Error::argument("sum_per_image: rank must be >= 2");
  const int N = xv.dim(0);
  const long per = xv.size() / N;
  Tensor out({N});
  for (int n = 0; n < N; ++n) {
    Scalar acc = 0;
    const Scalar* p = xv.data() + n * per;
    for (long i = 0; i < per; ++i) acc += p[i];
    out[n] = acc;
  }
  int id = push(std::move(out), {x.id}, [x, N, per](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_buffer(x))
      for (int n = 0; n < N; ++n) {
        Scalar* p = gx->data() + n * per;
        for (long i = 0; i < per; ++i) p[i] += g[n];
      }
  });
  return {id};
}

Var Tape::index(Var x, long flat) {
  const Tensor& xv = value(x);
  if (flat < 0 || flat >= xv.size()) throw Error::argument("index: out of range");
  int id = push(Tensor::full({1}, xv[flat]), {x.id},
                [x, flat](Tape& t, const Tensor& g) {
                  if (Tensor* gx = t.grad_buffer(x)) (*gx)[flat] += g[0];
                });
  return {id};
}

Var Tape::max_of(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw Error::argument("max_of: empty list");
  int best = 0;
  Scalar bv = scalar_value(scalars[0]);
  for (std::size_t i = 1; i < scalars.size(); ++i) {
    const Scalar v = scalar_value(scalars[i]);
    if (v > bv) {
      bv = v;
      best = static_cast<int>(i);
    }
  }
  std::vector<int> parents;
  parents.reserve(scalars.size());
  for (Var v : scalars) parents.push_back(v.id);
  Var winner = scalars[static_cast<std::size_t>(best)];
  int id = push(Tensor::full({1}, bv), std::move(parents),
                [winner](Tape& t, const Tensor& g) { t.accumulate(winner, g); });
  return {id};
}

Var Tape::mean_of(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw Error::argument("mean_of: empty list");
  const Scalar inv = 1.0 / static_cast<Scalar>(scalars.size());
  Scalar acc = 0;
  for (Var v : scalars) acc += scalar_value(v);
  std::vector<int> parents;
  for (Var v : scalars) parents.push_back(v.id);
  std::vector<Var> captured = scalars;
  int id = push(Tensor::full({1}, acc * inv), std::move(parents),
                [captured, inv](Tape& t, const Tensor& g) {
                  Tensor d = Tensor::full({1}, g[0] * inv);
                  for (Var v : captured) t.accumulate(v, d);
                });
  return {id};
}

Var Tape::stack_images(const std::vector<Var>& images) {
  if (images.empty()) throw Error::argument("stack_images: empty list");
  const Tensor& first = value(images[0]);
  if (first.rank() != 3) throw Error::argument("stack_images: expected [C,H,W] items");
  const int k = static_cast<int>(images.size());
  const long per = first.size();
  Tensor out({k, first.dim(0), first.dim(1), first.dim(2)});
  std::vector<int> parents;
  for (int i = 0; i < k; ++i) {
    const Tensor& v = value(images[static_cast<std::size_t>(i)]);
    if (!v.same_shape(first)) throw Error::argument("stack_images: shape mismatch");
    std::copy(v.data(), v.data() + per, out.data() + static_cast<long>(i) * per);
    parents.push_back(images[static_cast<std::size_t>(i)].id);
  }
  std::vector<Var> captured = images;
  int id = push(std::move(out), std::move(parents),
                [captured, per](Tape& t, const Tensor& g) {
                  for (std::size_t i = 0; i < captured.size(); ++i) {
                    if (Tensor* gi = t.grad_buffer(captured[i])) {
                      const Scalar* src = g.data() + static_cast<long>(i) * per;
                      for (long j = 0; j < per; ++j) (*gi)[j] += src[j];
                    }
                  }
                });
  return {id};
}

Var Tape::custom(Tensor value, std::vector<Var> parents,
                 std::function<void(Tape&, const Tensor&)> back) {
  std::vector<int> ids;
  ids.reserve(parents.size());
  for (Var p : parents) ids.push_back(p.id);
  return {push(std::move(value), std::move(ids), std::move(back))};
}

// ---------------------------------------------------------------------------

Tensor finite_difference(const std::function<Scalar(const Tensor&)>& f,
                         const Tensor& x, Scalar step) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (long i = 0; i < x.size(); ++i) {
    const Scalar orig = probe[i];
    probe[i] = orig + step;
    const Scalar hi = f(probe);
    probe[i] = orig - step;
    const Scalar lo = f(probe);
    probe[i] = orig;
    g[i] = (hi - lo) / (2 * step);
  }
  return g;
}

Scalar max_relative_error(const Tensor& a, const Tensor& b, Scalar floor) {
  if (!a.same_shape(b)) throw Error::argument("max_relative_error: shape mismatch");
  Scalar worst = 0;
  for (long i = 0; i < a.size(); ++i) {
    const Scalar denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace oob
