// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace danas::diff {

std::vector<PrimitiveInfo> primitive_set() {
  return {
      {"conv2d", "dense 2-D convolution with stride and padding"},
      {"depthwise_conv2d", "grouped 2-D convolution, one group per channel"},
      {"dilated_conv2d", "depthwise 2-D convolution with dilation 2"},
      {"max_pool2d", "3x3 max pooling"},
      {"avg_pool2d", "3x3 average pooling excluding padding"},
      {"global_avg_pool", "spatial mean per channel"},
      {"batch_norm", "affine per-channel normalisation"},
      {"relu", "rectifier"},
      {"linear", "fully-connected map with bias"},
      {"softmax", "softmax over the last axis"},
      {"cross_entropy", "mean cross-entropy against integer labels"},
      {"add", "elementwise sum"},
      {"mul", "elementwise product"},
      {"scale", "multiplication by a constant"},
      {"sum", "reduction to a scalar"},
      {"weighted_sum", "sum of tensors weighted by a differentiable vector"},
      {"select_row", "row of a matrix"},
      {"slice", "range of a vector"},
      {"concat", "channel concatenation"},
      {"slice_channels", "channel range"},
      {"channel_shuffle", "channel interleave across groups"},
      {"shift2d", "spatial shift with zero fill"},
      {"zero", "zeros with the strided shape of the input"},
  };
}

namespace {

template <typename T>
Tape<T>& tape_of(Var<T> v) {
  require(v.valid(), "op applied to an unbound variable");
  return *v.tape();
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ContractViolation(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
  }
}

// Range of output positions o with 0 <= o * stride + offset < in_extent.
inline void valid_range(long in_extent, long out_extent, long stride, long offset, long& lo, long& hi) {
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  const long last = in_extent - 1 - offset;
  hi = last < 0 ? 0 : last / stride + 1;
  hi = std::min(hi, out_extent);
  if (hi < lo) {
    hi = lo;
  }
}

// Dot product with a fixed 8-lane split so the loop vectorises without
// reassociation flags; the summation order is still fixed, so results are
// reproducible.
template <typename T>
inline T lane_dot(const T* a, const T* b, long n) {
  T acc[8] = {};
  long i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) {
      acc[l] += a[i + l] * b[i + l];
    }
  }
  T tail{0};
  for (; i < n; ++i) {
    tail += a[i] * b[i];
  }
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += bv[i];
  }
  const int ia = a.id();
  const int ib = b.id();
  return tape_of(a).record("add", std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    for (int p : {ia, ib}) {
      if (Tensor<T>* gp = t.grad_if(p)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gp)[i] += g[i];
        }
      }
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] *= bv[i];
  }
  const int ia = a.id();
  const int ib = b.id();
  return tape_of(a).record("mul", std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& av = t.value(ia);
    const Tensor<T>& bv = t.value(ib);
    if (Tensor<T>* ga = t.grad_if(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*ga)[i] += g[i] * bv[i];
      }
    }
    if (Tensor<T>* gb = t.grad_if(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*gb)[i] += g[i] * av[i];
      }
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) {
    v *= factor;
  }
  const int ix = x.id();
  return tape_of(x).record("scale", std::move(out), {x}, [ix, factor](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (Tensor<T>* gx = t.grad_if(ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*gx)[i] += factor * g[i];
      }
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc{0};
  for (T v : x.value().values()) {
    acc += v;
  }
  const int ix = x.id();
  return tape_of(x).record("sum", Tensor<T>::scalar(acc), {x}, [ix](Tape<T>& t, int self) {
    const T g = t.grad(self)[0];
    if (Tensor<T>* gx = t.grad_if(ix)) {
      for (T& v : gx->values()) {
        v += g;
      }
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) {
    v = v > T{0} ? v : T{0};
  }
  const int ix = x.id();
  return tape_of(x).record("relu", std::move(out), {x}, [ix](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv = t.value(ix);
    if (Tensor<T>* gx = t.grad_if(ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv[i] > T{0}) {
          (*gx)[i] += g[i];
        }
      }
    }
  });
}

template <typename T>
Var<T> softmax(Var<T> x) {
  const Tensor<T>& xv = x.value();
  require(xv.rank() >= 1, "softmax: scalar input");
  const std::size_t cols = xv.shape().back();
  const std::size_t rows = xv.size() / cols;
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T* o = out.data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T z{0};
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] /= z;
    }
  }
  const int ix = x.id();
  return tape_of(x).record("softmax", std::move(out), {x}, [ix, rows, cols](Tape<T>& t, int self) {
    Tensor<T>* gx = t.grad_if(ix);
    if (!gx) {
      return;
    }
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * cols;
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) {
        dot += g[base + c] * y[base + c];
      }
      for (std::size_t c = 0; c < cols; ++c) {
        (*gx)[base + c] += y[base + c] * (g[base + c] - dot);
      }
    }
  });
}

template <typename T>
Var<T> select_row(Var<T> x, std::size_t row) {
  require_rank(x.shape(), 2, "select_row");
  const std::size_t cols = x.shape()[1];
  require(row < x.shape()[0], "select_row: row out of range");
  const T* src = x.value().data() + row * cols;
  Tensor<T> out(Shape{cols}, std::vector<T>(src, src + cols));
  const int ix = x.id();
  return tape_of(x).record("select_row", std::move(out), {x}, [ix, row, cols](Tape<T>& t, int self) {
    if (Tensor<T>* gx = t.grad_if(ix)) {
      const Tensor<T>& g = t.grad(self);
      for (std::size_t c = 0; c < cols; ++c) {
        (*gx)[row * cols + c] += g[c];
      }
    }
  });
}

template <typename T>
Var<T> slice(Var<T> x, std::size_t begin, std::size_t count) {
  require_rank(x.shape(), 1, "slice");
  require(count > 0 && begin + count <= x.shape()[0], "slice: range out of bounds");
  const T* src = x.value().data() + begin;
  Tensor<T> out(Shape{count}, std::vector<T>(src, src + count));
  const int ix = x.id();
  return tape_of(x).record("slice", std::move(out), {x}, [ix, begin, count](Tape<T>& t, int self) {
    if (Tensor<T>* gx = t.grad_if(ix)) {
      const Tensor<T>& g = t.grad(self);
      for (std::size_t i = 0; i < count; ++i) {
        (*gx)[begin + i] += g[i];
      }
    }
  });
}

template <typename T>
Var<T> weighted_sum(std::span<const Var<T>> xs, Var<T> weights) {
  require(!xs.empty(), "weighted_sum: no inputs");
  require_rank(weights.shape(), 1, "weighted_sum");
  require(weights.shape()[0] == xs.size(), "weighted_sum: weight count does not match input count");
  const Tensor<T>& w = weights.value();
  Tensor<T> out(xs[0].shape(), T{0});
  for (std::size_t k = 0; k < xs.size(); ++k) {
    require_same_shape(xs[k].shape(), out.shape(), "weighted_sum");
    const Tensor<T>& xv = xs[k].value();
    const T wk = w[k];
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += wk * xv[i];
    }
  }
  std::vector<Var<T>> parents(xs.begin(), xs.end());
  parents.push_back(weights);
  std::vector<int> ids;
  for (const Var<T>& v : parents) {
    ids.push_back(v.id());
  }
  return tape_of(weights).record("weighted_sum", std::move(out), parents, [ids](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const std::size_t n = ids.size() - 1;
    const Tensor<T>& w = t.value(ids[n]);
    Tensor<T>* gw = t.grad_if(ids[n]);
    for (std::size_t k = 0; k < n; ++k) {
      if (Tensor<T>* gx = t.grad_if(ids[k])) {
        const T wk = w[k];
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gx)[i] += wk * g[i];
        }
      }
      if (gw) {
        const Tensor<T>& xv = t.value(ids[k]);
        T dot{0};
        for (std::size_t i = 0; i < g.size(); ++i) {
          dot += g[i] * xv[i];
        }
        (*gw)[k] += dot;
      }
    }
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, const Conv2dSpec& spec, OptVar<T> bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require_rank(xs, 4, "conv2d");
  require_rank(ws, 4, "conv2d weight");
  const long N = static_cast<long>(xs[0]), C = static_cast<long>(xs[1]);
  const long H = static_cast<long>(xs[2]), W = static_cast<long>(xs[3]);
  const long O = static_cast<long>(ws[0]), KH = static_cast<long>(ws[2]), KW = static_cast<long>(ws[3]);
  const long G = spec.groups;
  require(G >= 1 && C % G == 0 && O % G == 0, "conv2d: channels not divisible by groups");
  const long CG = C / G, OG = O / G;
  require(static_cast<long>(ws[1]) == CG,
          "conv2d: weight " + shape_str(ws) + " does not match input " + shape_str(xs));
  if (bias) {
    require(bias->shape() == Shape{static_cast<std::size_t>(O)}, "conv2d: bias shape");
  }
  const long SH = spec.stride[0], SW = spec.stride[1];
  const long PH = spec.padding[0], PW = spec.padding[1];
  const long D = spec.dilation;
  const long HO = static_cast<long>(conv_out_extent(xs[2], static_cast<int>(KH), static_cast<int>(SH),
                                                    static_cast<int>(PH), static_cast<int>(D)));
  const long WO = static_cast<long>(conv_out_extent(xs[3], static_cast<int>(KW), static_cast<int>(SW),
                                                    static_cast<int>(PW), static_cast<int>(D)));

  // Per-kernel-column output ranges are independent of the row, so hoist them.
  auto col_ranges = std::make_shared<std::vector<std::array<long, 2>>>(KW);
  for (long kx = 0; kx < KW; ++kx) {
    valid_range(W, WO, SW, kx * D - PW, (*col_ranges)[kx][0], (*col_ranges)[kx][1]);
  }

  Tensor<T> out(Shape{xs[0], ws[0], static_cast<std::size_t>(HO), static_cast<std::size_t>(WO)});
  const T* in = x.value().data();
  const T* wt = weight.value().data();
  T* o = out.data();
  for (long n = 0; n < N; ++n) {
    for (long g = 0; g < G; ++g) {
      for (long oc = g * OG; oc < (g + 1) * OG; ++oc) {
        T* oplane = o + (n * O + oc) * HO * WO;
        if (bias) {
          std::fill(oplane, oplane + HO * WO, bias->value()[static_cast<std::size_t>(oc)]);
        }
        for (long icl = 0; icl < CG; ++icl) {
          const T* iplane = in + (n * C + g * CG + icl) * H * W;
          const T* wk = wt + (oc * CG + icl) * KH * KW;
          for (long ky = 0; ky < KH; ++ky) {
            for (long kx = 0; kx < KW; ++kx) {
              const T wv = wk[ky * KW + kx];
              const long lo = (*col_ranges)[kx][0], hi = (*col_ranges)[kx][1];
              const long xoff = kx * D - PW;
              for (long oy = 0; oy < HO; ++oy) {
                const long iy = oy * SH - PH + ky * D;
                if (iy < 0 || iy >= H) {
                  continue;
                }
                const T* irow = iplane + iy * W;
                T* orow = oplane + oy * WO;
                if (SW == 1) {
                  for (long ox = lo; ox < hi; ++ox) {
                    orow[ox] += wv * irow[ox + xoff];
                  }
                } else {
                  for (long ox = lo; ox < hi; ++ox) {
                    orow[ox] += wv * irow[ox * SW + xoff];
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias) {
    parents.push_back(*bias);
  }
  const int ix = x.id(), iw = weight.id(), ib = bias ? bias->id() : -1;
  return tape_of(x).record(
      "conv2d", std::move(out), parents,
      [=](Tape<T>& t, int self) {
        const T* gy = t.grad(self).data();
        const T* in = t.value(ix).data();
        const T* wt = t.value(iw).data();
        Tensor<T>* gx = t.grad_if(ix);
        Tensor<T>* gw = t.grad_if(iw);
        Tensor<T>* gb = ib >= 0 ? t.grad_if(ib) : nullptr;
        for (long n = 0; n < N; ++n) {
          for (long g = 0; g < G; ++g) {
            for (long oc = g * OG; oc < (g + 1) * OG; ++oc) {
              const T* gplane = gy + (n * O + oc) * HO * WO;
              if (gb) {
                T acc{0};
                for (long i = 0; i < HO * WO; ++i) {
                  acc += gplane[i];
                }
                (*gb)[static_cast<std::size_t>(oc)] += acc;
              }
              for (long icl = 0; icl < CG; ++icl) {
                const long plane = (n * C + g * CG + icl) * H * W;
                const T* iplane = in + plane;
                const long wbase = (oc * CG + icl) * KH * KW;
                for (long ky = 0; ky < KH; ++ky) {
                  for (long kx = 0; kx < KW; ++kx) {
                    const T wv = wt[wbase + ky * KW + kx];
                    const long lo = (*col_ranges)[kx][0], hi = (*col_ranges)[kx][1];
                    const long xoff = kx * D - PW;
                    T wacc{0};
                    for (long oy = 0; oy < HO; ++oy) {
                      const long iy = oy * SH - PH + ky * D;
                      if (iy < 0 || iy >= H) {
                        continue;
                      }
                      const T* grow = gplane + oy * WO;
                      if (gx) {
                        T* gxrow = gx->data() + plane + iy * W;
                        if (SW == 1) {
                          for (long ox = lo; ox < hi; ++ox) {
                            gxrow[ox + xoff] += wv * grow[ox];
                          }
                        } else {
                          for (long ox = lo; ox < hi; ++ox) {
                            gxrow[ox * SW + xoff] += wv * grow[ox];
                          }
                        }
                      }
                      if (gw) {
                        const T* irow = iplane + iy * W;
                        if (SW == 1) {
                          wacc += lane_dot(grow + lo, irow + lo + xoff, hi - lo);
                        } else {
                          for (long ox = lo; ox < hi; ++ox) {
                            wacc += grow[ox] * irow[ox * SW + xoff];
                          }
                        }
                      }
                    }
                    if (gw) {
                      (*gw)[static_cast<std::size_t>(wbase + ky * KW + kx)] += wacc;
                    }
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> max_pool2d(Var<T> x, const Pool2dSpec& spec) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "max_pool2d");
  const long NC = static_cast<long>(xs[0] * xs[1]), H = static_cast<long>(xs[2]), W = static_cast<long>(xs[3]);
  const long K = spec.kernel, S = spec.stride, P = spec.padding;
  const long HO = static_cast<long>(conv_out_extent(xs[2], spec.kernel, spec.stride, spec.padding, 1));
  const long WO = static_cast<long>(conv_out_extent(xs[3], spec.kernel, spec.stride, spec.padding, 1));
  Tensor<T> out(Shape{xs[0], xs[1], static_cast<std::size_t>(HO), static_cast<std::size_t>(WO)});
  auto argmax = std::make_shared<std::vector<long>>(out.size());
  const T* in = x.value().data();
  for (long p = 0; p < NC; ++p) {
    for (long oy = 0; oy < HO; ++oy) {
      for (long ox = 0; ox < WO; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        long best_idx = -1;
        for (long ky = 0; ky < K; ++ky) {
          const long iy = oy * S - P + ky;
          if (iy < 0 || iy >= H) {
            continue;
          }
          for (long kx = 0; kx < K; ++kx) {
            const long ix = ox * S - P + kx;
            if (ix < 0 || ix >= W) {
              continue;
            }
            const long idx = p * H * W + iy * W + ix;
            if (in[idx] > best) {
              best = in[idx];
              best_idx = idx;
            }
          }
        }
        const long o = (p * HO + oy) * WO + ox;
        out[static_cast<std::size_t>(o)] = best;
        (*argmax)[static_cast<std::size_t>(o)] = best_idx;
      }
    }
  }
  const int ix = x.id();
  return tape_of(x).record("max_pool2d", std::move(out), {x}, [ix, argmax](Tape<T>& t, int self) {
    if (Tensor<T>* gx = t.grad_if(ix)) {
      const Tensor<T>& g = t.grad(self);
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*gx)[static_cast<std::size_t>((*argmax)[i])] += g[i];
      }
    }
  });
}

template <typename T>
Var<T> avg_pool2d(Var<T> x, const Pool2dSpec& spec) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "avg_pool2d");
  const long NC = static_cast<long>(xs[0] * xs[1]), H = static_cast<long>(xs[2]), W = static_cast<long>(xs[3]);
  const long K = spec.kernel, S = spec.stride, P = spec.padding;
  const long HO = static_cast<long>(conv_out_extent(xs[2], spec.kernel, spec.stride, spec.padding, 1));
  const long WO = static_cast<long>(conv_out_extent(xs[3], spec.kernel, spec.stride, spec.padding, 1));
  Tensor<T> out(Shape{xs[0], xs[1], static_cast<std::size_t>(HO), static_cast<std::size_t>(WO)});
  const T* in = x.value().data();
  auto window = [=](long oy, long ox, long& y0, long& y1, long& x0, long& x1) {
    y0 = std::max(0L, oy * S - P);
    y1 = std::min(H, oy * S - P + K);
    x0 = std::max(0L, ox * S - P);
    x1 = std::min(W, ox * S - P + K);
  };
  for (long p = 0; p < NC; ++p) {
    for (long oy = 0; oy < HO; ++oy) {
      for (long ox = 0; ox < WO; ++ox) {
        long y0, y1, x0, x1;
        window(oy, ox, y0, y1, x0, x1);
        T acc{0};
        for (long iy = y0; iy < y1; ++iy) {
          for (long ix = x0; ix < x1; ++ix) {
            acc += in[p * H * W + iy * W + ix];
          }
        }
        out[static_cast<std::size_t>((p * HO + oy) * WO + ox)] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
  const int ixd = x.id();
  return tape_of(x).record("avg_pool2d", std::move(out), {x}, [=](Tape<T>& t, int self) {
    Tensor<T>* gx = t.grad_if(ixd);
    if (!gx) {
      return;
    }
    const Tensor<T>& g = t.grad(self);
    for (long p = 0; p < NC; ++p) {
      for (long oy = 0; oy < HO; ++oy) {
        for (long ox = 0; ox < WO; ++ox) {
          long y0, y1, x0, x1;
          window(oy, ox, y0, y1, x0, x1);
          const T share = g[static_cast<std::size_t>((p * HO + oy) * WO + ox)] / static_cast<T>((y1 - y0) * (x1 - x0));
          for (long iy = y0; iy < y1; ++iy) {
            for (long ix = x0; ix < x1; ++ix) {
              (*gx)[static_cast<std::size_t>(p * H * W + iy * W + ix)] += share;
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "global_avg_pool");
  const std::size_t NC = xs[0] * xs[1], HW = xs[2] * xs[3];
  Tensor<T> out(Shape{xs[0], xs[1]});
  const T* in = x.value().data();
  for (std::size_t p = 0; p < NC; ++p) {
    T acc{0};
    for (std::size_t i = 0; i < HW; ++i) {
      acc += in[p * HW + i];
    }
    out[p] = acc / static_cast<T>(HW);
  }
  const int ix = x.id();
  return tape_of(x).record("global_avg_pool", std::move(out), {x}, [ix, NC, HW](Tape<T>& t, int self) {
    if (Tensor<T>* gx = t.grad_if(ix)) {
      const Tensor<T>& g = t.grad(self);
      for (std::size_t p = 0; p < NC; ++p) {
        const T share = g[p] / static_cast<T>(HW);
        for (std::size_t i = 0; i < HW; ++i) {
          (*gx)[p * HW + i] += share;
        }
      }
    }
  });
}

template <typename T>
Var<T> batch_norm(Var<T> x, OptVar<T> weight, OptVar<T> bias, std::type_identity_t<NormStats<T>>* stats,
                  NormMode mode, T eps, T momentum) {
  const Shape& xs = x.shape();
  require(xs.size() == 2 || xs.size() == 4, "batch_norm: expected [N,C] or [N,C,H,W], got " + shape_str(xs));
  const std::size_t N = xs[0], C = xs[1];
  const std::size_t HW = xs.size() == 4 ? xs[2] * xs[3] : 1;
  const std::size_t M = N * HW;
  if (weight) {
    require(weight->shape() == Shape{C}, "batch_norm: weight shape");
  }
  if (bias) {
    require(bias->shape() == Shape{C}, "batch_norm: bias shape");
  }
  if (mode != NormMode::kTrainFrozen) {
    require(stats != nullptr, "batch_norm: running statistics required in this mode");
  }
  if (stats && stats->running_mean.empty()) {
    stats->running_mean = Tensor<T>(Shape{C}, T{0});
    stats->running_var = Tensor<T>(Shape{C}, T{1});
  }

  const T* in = x.value().data();
  auto xhat = std::make_shared<Tensor<T>>(xs);
  auto inv_std = std::make_shared<std::vector<T>>(C);
  Tensor<T> out(xs);
  for (std::size_t c = 0; c < C; ++c) {
    T mean{0};
    T var{0};
    if (mode == NormMode::kEval) {
      mean = stats->running_mean[c];
      var = stats->running_var[c];
    } else {
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = in + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          mean += p[i];
        }
      }
      mean /= static_cast<T>(M);
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = in + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          const T d = p[i] - mean;
          var += d * d;
        }
      }
      var /= static_cast<T>(M);
      if (mode == NormMode::kTrain) {
        const T unbiased = M > 1 ? var * static_cast<T>(M) / static_cast<T>(M - 1) : var;
        stats->running_mean[c] = (T{1} - momentum) * stats->running_mean[c] + momentum * mean;
        stats->running_var[c] = (T{1} - momentum) * stats->running_var[c] + momentum * unbiased;
      }
    }
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_std)[c] = is;
    const T gamma = weight ? weight->value()[c] : T{1};
    const T beta = bias ? bias->value()[c] : T{0};
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const T h = (in[base + i] - mean) * is;
        (*xhat)[base + i] = h;
        out[base + i] = gamma * h + beta;
      }
    }
  }

  std::vector<Var<T>> parents{x};
  if (weight) {
    parents.push_back(*weight);
  }
  if (bias) {
    parents.push_back(*bias);
  }
  const int ix = x.id(), iw = weight ? weight->id() : -1, ib = bias ? bias->id() : -1;
  const bool batch_stats = mode != NormMode::kEval;
  return tape_of(x).record("batch_norm", std::move(out), parents, [=](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>* gx = t.grad_if(ix);
    Tensor<T>* gw = iw >= 0 ? t.grad_if(iw) : nullptr;
    Tensor<T>* gb = ib >= 0 ? t.grad_if(ib) : nullptr;
    for (std::size_t c = 0; c < C; ++c) {
      const T gamma = iw >= 0 ? t.value(iw)[c] : T{1};
      T sum_g{0};
      T sum_gh{0};
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t base = (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          sum_g += g[base + i];
          sum_gh += g[base + i] * (*xhat)[base + i];
        }
      }
      if (gw) {
        (*gw)[c] += sum_gh;
      }
      if (gb) {
        (*gb)[c] += sum_g;
      }
      if (!gx) {
        continue;
      }
      const T is = (*inv_std)[c];
      if (batch_stats) {
        const T m = static_cast<T>(M);
        const T k = gamma * is / m;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t base = (n * C + c) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            (*gx)[base + i] += k * (m * g[base + i] - sum_g - (*xhat)[base + i] * sum_gh);
          }
        }
      } else {
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t base = (n * C + c) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            (*gx)[base + i] += gamma * is * g[base + i];
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  require_rank(x.shape(), 2, "linear");
  require_rank(weight.shape(), 2, "linear weight");
  const std::size_t N = x.shape()[0], F = x.shape()[1], O = weight.shape()[0];
  require(weight.shape()[1] == F, "linear: weight " + shape_str(weight.shape()) + " vs input " + shape_str(x.shape()));
  require(bias.shape() == Shape{O}, "linear: bias shape");
  Tensor<T> out(Shape{N, O});
  const T* xv = x.value().data();
  const T* wv = weight.value().data();
  const T* bv = bias.value().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      T acc = bv[o];
      for (std::size_t f = 0; f < F; ++f) {
        acc += xv[n * F + f] * wv[o * F + f];
      }
      out[n * O + o] = acc;
    }
  }
  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return tape_of(x).record("linear", std::move(out), {x, weight, bias}, [=](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv = t.value(ix);
    const Tensor<T>& wv = t.value(iw);
    Tensor<T>* gx = t.grad_if(ix);
    Tensor<T>* gw = t.grad_if(iw);
    Tensor<T>* gb = t.grad_if(ib);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t o = 0; o < O; ++o) {
        const T go = g[n * O + o];
        if (gb) {
          (*gb)[o] += go;
        }
        for (std::size_t f = 0; f < F; ++f) {
          if (gx) {
            (*gx)[n * F + f] += go * wv[o * F + f];
          }
          if (gw) {
            (*gw)[o * F + f] += go * xv[n * F + f];
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> xs) {
  require(!xs.empty(), "concat: no inputs");
  const Shape& s0 = xs[0].shape();
  require_rank(s0, 4, "concat");
  std::size_t C = 0;
  std::vector<std::size_t> offsets;
  std::vector<int> ids;
  for (const Var<T>& v : xs) {
    const Shape& s = v.shape();
    require(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
            "concat: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
    offsets.push_back(C);
    ids.push_back(v.id());
    C += s[1];
  }
  const std::size_t N = s0[0], HW = s0[2] * s0[3];
  Tensor<T> out(Shape{N, C, s0[2], s0[3]});
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const std::size_t ck = xs[k].shape()[1];
    const T* src = xs[k].value().data();
    for (std::size_t n = 0; n < N; ++n) {
      std::copy(src + n * ck * HW, src + (n + 1) * ck * HW, out.data() + (n * C + offsets[k]) * HW);
    }
  }
  return tape_of(xs[0]).record("concat", std::move(out), xs, [=](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor<T>* gx = t.grad_if(ids[k]);
      if (!gx) {
        continue;
      }
      const std::size_t ck = gx->shape()[1];
      for (std::size_t n = 0; n < N; ++n) {
        const T* src = g.data() + (n * C + offsets[k]) * HW;
        T* dst = gx->data() + n * ck * HW;
        for (std::size_t i = 0; i < ck * HW; ++i) {
          dst[i] += src[i];
        }
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(Var<T> x, std::size_t begin, std::size_t end) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "slice_channels");
  require(begin < end && end <= xs[1], "slice_channels: range out of bounds");
  const std::size_t N = xs[0], C = xs[1], HW = xs[2] * xs[3], CK = end - begin;
  Tensor<T> out(Shape{N, CK, xs[2], xs[3]});
  const T* src = x.value().data();
  for (std::size_t n = 0; n < N; ++n) {
    std::copy(src + (n * C + begin) * HW, src + (n * C + end) * HW, out.data() + n * CK * HW);
  }
  const int ix = x.id();
  return tape_of(x).record("slice_channels", std::move(out), {x}, [=](Tape<T>& t, int self) {
    if (Tensor<T>* gx = t.grad_if(ix)) {
      const Tensor<T>& g = t.grad(self);
      for (std::size_t n = 0; n < N; ++n) {
        T* dst = gx->data() + (n * C + begin) * HW;
        const T* s = g.data() + n * CK * HW;
        for (std::size_t i = 0; i < CK * HW; ++i) {
          dst[i] += s[i];
        }
      }
    }
  });
}

template <typename T>
Var<T> channel_shuffle(Var<T> x, std::size_t groups) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "channel_shuffle");
  const std::size_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
  require(groups >= 1 && C % groups == 0, "channel_shuffle: channels not divisible by groups");
  const std::size_t per_group = C / groups;
  // out channel j*groups + i <- in channel i*per_group + j
  auto source = std::make_shared<std::vector<std::size_t>>(C);
  for (std::size_t i = 0; i < groups; ++i) {
    for (std::size_t j = 0; j < per_group; ++j) {
      (*source)[j * groups + i] = i * per_group + j;
    }
  }
  Tensor<T> out(xs);
  const T* src = x.value().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* s = src + (n * C + (*source)[c]) * HW;
      std::copy(s, s + HW, out.data() + (n * C + c) * HW);
    }
  }
  const int ix = x.id();
  return tape_of(x).record("channel_shuffle", std::move(out), {x}, [=](Tape<T>& t, int self) {
    if (Tensor<T>* gx = t.grad_if(ix)) {
      const Tensor<T>& g = t.grad(self);
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
          const T* s = g.data() + (n * C + c) * HW;
          T* d = gx->data() + (n * C + (*source)[c]) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            d[i] += s[i];
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> shift2d(Var<T> x, int dy, int dx) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "shift2d");
  const long NC = static_cast<long>(xs[0] * xs[1]), H = static_cast<long>(xs[2]), W = static_cast<long>(xs[3]);
  Tensor<T> out(xs, T{0});
  const T* src = x.value().data();
  const long y0 = std::max(0L, -static_cast<long>(dy)), y1 = std::min(H, H - dy);
  const long x0 = std::max(0L, -static_cast<long>(dx)), x1 = std::min(W, W - dx);
  for (long p = 0; p < NC; ++p) {
    for (long y = y0; y < y1; ++y) {
      for (long xx = x0; xx < x1; ++xx) {
        out[static_cast<std::size_t>(p * H * W + y * W + xx)] = src[p * H * W + (y + dy) * W + xx + dx];
      }
    }
  }
  const int ix = x.id();
  return tape_of(x).record("shift2d", std::move(out), {x}, [=](Tape<T>& t, int self) {
    if (Tensor<T>* gx = t.grad_if(ix)) {
      const Tensor<T>& g = t.grad(self);
      for (long p = 0; p < NC; ++p) {
        for (long y = y0; y < y1; ++y) {
          for (long xx = x0; xx < x1; ++xx) {
            (*gx)[static_cast<std::size_t>(p * H * W + (y + dy) * W + xx + dx)] +=
                g[static_cast<std::size_t>(p * H * W + y * W + xx)];
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> zero_op(Var<T> x, int stride) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "zero");
  require(stride >= 1, "zero: stride must be positive");
  const std::size_t s = static_cast<std::size_t>(stride);
  Tensor<T> out(Shape{xs[0], xs[1], (xs[2] + s - 1) / s, (xs[3] + s - 1) / s}, T{0});
  return tape_of(x).record("zero", std::move(out), {x}, [](Tape<T>&, int) {});
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "cross_entropy");
  const std::size_t N = logits.shape()[0], C = logits.shape()[1];
  require(labels.size() == N, "cross_entropy: label count does not match batch size");
  auto probs = std::make_shared<Tensor<T>>(logits.shape());
  const T* l = logits.value().data();
  T loss{0};
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    require(y >= 0 && static_cast<std::size_t>(y) < C, "cross_entropy: label out of range");
    const T* row = l + n * C;
    const T mx = *std::max_element(row, row + C);
    T z{0};
    for (std::size_t c = 0; c < C; ++c) {
      const T e = std::exp(row[c] - mx);
      (*probs)[n * C + c] = e;
      z += e;
    }
    for (std::size_t c = 0; c < C; ++c) {
      (*probs)[n * C + c] /= z;
    }
    loss += mx + std::log(z) - row[y];
  }
  loss /= static_cast<T>(N);
  std::vector<int> y(labels.begin(), labels.end());
  const int il = logits.id();
  return tape_of(logits).record("cross_entropy", Tensor<T>::scalar(loss), {logits}, [=](Tape<T>& t, int self) {
    if (Tensor<T>* gl = t.grad_if(il)) {
      const T g = t.grad(self)[0] / static_cast<T>(N);
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
          const T target = static_cast<std::size_t>(y[n]) == c ? T{1} : T{0};
          (*gl)[n * C + c] += g * ((*probs)[n * C + c] - target);
        }
      }
    }
  });
}

#define DANAS_INSTANTIATE_OPS(T)                                                                           \
  template Var<T> add<T>(Var<T>, Var<T>);                                                                  \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                                  \
  template Var<T> scale<T>(Var<T>, T);                                                                     \
  template Var<T> sum<T>(Var<T>);                                                                          \
  template Var<T> relu<T>(Var<T>);                                                                         \
  template Var<T> softmax<T>(Var<T>);                                                                      \
  template Var<T> select_row<T>(Var<T>, std::size_t);                                                      \
  template Var<T> slice<T>(Var<T>, std::size_t, std::size_t);                                              \
  template Var<T> weighted_sum<T>(std::span<const Var<T>>, Var<T>);                                        \
  template Var<T> conv2d<T>(Var<T>, Var<T>, const Conv2dSpec&, OptVar<T>);                     \
  template Var<T> max_pool2d<T>(Var<T>, const Pool2dSpec&);                                                \
  template Var<T> avg_pool2d<T>(Var<T>, const Pool2dSpec&);                                                \
  template Var<T> global_avg_pool<T>(Var<T>);                                                              \
  template Var<T> batch_norm<T>(Var<T>, OptVar<T>, OptVar<T>, std::type_identity_t<NormStats<T>>*,       \
                                NormMode, T, T);                                                           \
  template Var<T> linear<T>(Var<T>, Var<T>, Var<T>);                                                       \
  template Var<T> concat_channels<T>(std::span<const Var<T>>);                                             \
  template Var<T> slice_channels<T>(Var<T>, std::size_t, std::size_t);                                     \
  template Var<T> channel_shuffle<T>(Var<T>, std::size_t);                                                 \
  template Var<T> shift2d<T>(Var<T>, int, int);                                                            \
  template Var<T> zero_op<T>(Var<T>, int);                                                                 \
  template Var<T> cross_entropy<T>(Var<T>, std::span<const int>);

DANAS_INSTANTIATE_OPS(float)
DANAS_INSTANTIATE_OPS(double)

}  // namespace danas::diff
