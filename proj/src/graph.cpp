#include "corefd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "corefd/errors.hpp"

namespace corefd::ndgrad {

namespace {

// Output index range [lo, hi) whose sampled input coordinate o*stride + tap - pad
// falls inside [0, n_in).
struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

Range valid_range(std::size_t n_in, std::size_t n_out, int tap, int stride, int pad) {
  const long shift = static_cast<long>(pad) - tap;
  const long lo = shift <= 0 ? 0 : (shift + stride - 1) / stride;
  const long last = static_cast<long>(n_in) - 1 + shift;
  if (last < 0) return {};
  const long hi = std::min<long>(last / stride + 1, static_cast<long>(n_out));
  if (hi <= lo) return {};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Sum of a[p] * b[p] (or of a[p] when b is null) with four interleaved partial
// sums combined in a fixed order.
double lane_dot(const double* a, const double* b, std::size_t n) {
  double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
  std::size_t p = 0;
  if (b != nullptr) {
    for (; p + 4 <= n; p += 4) {
      l0 += a[p] * b[p];
      l1 += a[p + 1] * b[p + 1];
      l2 += a[p + 2] * b[p + 2];
      l3 += a[p + 3] * b[p + 3];
    }
    for (; p < n; ++p) l0 += a[p] * b[p];
  } else {
    for (; p + 4 <= n; p += 4) {
      l0 += a[p];
      l1 += a[p + 1];
      l2 += a[p + 2];
      l3 += a[p + 3];
    }
    for (; p < n; ++p) l0 += a[p];
  }
  return (l0 + l1) + (l2 + l3);
}

struct PlaneGeom {
  std::size_t in_h, in_w, out_h, out_w;
  int stride, pad;
};

// out[oh, ow] += w * in[oh*s + ti - pad, ow*s + tj - pad]
void tap_forward(const double* in, double* out, double w, int ti, int tj, const PlaneGeom& g) {
  const Range rr = valid_range(g.in_h, g.out_h, ti, g.stride, g.pad);
  const Range cr = valid_range(g.in_w, g.out_w, tj, g.stride, g.pad);
  for (std::size_t oh = rr.lo; oh < rr.hi; ++oh) {
    const double* src = in + (oh * g.stride + ti - g.pad) * g.in_w;
    double* dst = out + oh * g.out_w;
    if (g.stride == 1) {
      const double* s = src + tj - g.pad;
      for (std::size_t ow = cr.lo; ow < cr.hi; ++ow) dst[ow] += w * s[ow];
    } else {
      for (std::size_t ow = cr.lo; ow < cr.hi; ++ow) dst[ow] += w * src[ow * g.stride + tj - g.pad];
    }
  }
}

// gin[oh*s + ti - pad, ow*s + tj - pad] += w * gout[oh, ow]
void tap_backward_input(double* gin, const double* gout, double w, int ti, int tj, const PlaneGeom& g) {
  const Range rr = valid_range(g.in_h, g.out_h, ti, g.stride, g.pad);
  const Range cr = valid_range(g.in_w, g.out_w, tj, g.stride, g.pad);
  for (std::size_t oh = rr.lo; oh < rr.hi; ++oh) {
    double* dst = gin + (oh * g.stride + ti - g.pad) * g.in_w;
    const double* src = gout + oh * g.out_w;
    if (g.stride == 1) {
      double* d = dst + tj - g.pad;
      for (std::size_t ow = cr.lo; ow < cr.hi; ++ow) d[ow] += w * src[ow];
    } else {
      for (std::size_t ow = cr.lo; ow < cr.hi; ++ow) dst[ow * g.stride + tj - g.pad] += w * src[ow];
    }
  }
}

// Σ gout[oh, ow] * in[oh*s + ti - pad, ow*s + tj - pad]
double tap_backward_weight(const double* in, const double* gout, int ti, int tj, const PlaneGeom& g) {
  const Range rr = valid_range(g.in_h, g.out_h, ti, g.stride, g.pad);
  const Range cr = valid_range(g.in_w, g.out_w, tj, g.stride, g.pad);
  double acc = 0.0;
  for (std::size_t oh = rr.lo; oh < rr.hi; ++oh) {
    const double* src = in + (oh * g.stride + ti - g.pad) * g.in_w;
    const double* go = gout + oh * g.out_w;
    if (g.stride == 1) {
      const double* s = src + tj - g.pad;
      acc += lane_dot(go + cr.lo, s + cr.lo, cr.hi - cr.lo);
    } else {
      for (std::size_t ow = cr.lo; ow < cr.hi; ++ow) acc += go[ow] * src[ow * g.stride + tj - g.pad];
    }
  }
  return acc;
}

std::size_t conv_out(std::size_t n, std::size_t k, int stride, int pad, const char* what) {
  if (stride < 1 || pad < 0) throw ShapeError(std::string(what) + ": stride must be >= 1 and pad >= 0");
  const std::size_t padded = n + 2 * static_cast<std::size_t>(pad);
  if (k > padded || k == 0) {
    throw ShapeError(std::string(what) + ": kernel extent " + std::to_string(k) +
                     " exceeds padded input extent " + std::to_string(padded));
  }
  return (padded - k) / static_cast<std::size_t>(stride) + 1;
}

void require_same_dims(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(what) + ": dims " + dims_to_string(a.dims()) + " vs " +
                     dims_to_string(b.dims()));
  }
}

// out[b,o,:] = bias[o] + sum_c w[o,c] x[b,c,:], four output channels at a time.
void pointwise_forward(const double* x, const double* w, const double* bias, double* out, std::size_t B,
                       std::size_t C, std::size_t O, std::size_t P) {
  for (std::size_t bi = 0; bi < B; ++bi) {
    const double* xb = x + bi * C * P;
    double* ob = out + bi * O * P;
    std::size_t o = 0;
    for (; o + 4 <= O; o += 4) {
      double* __restrict d0 = ob + o * P;
      double* __restrict d1 = d0 + P;
      double* __restrict d2 = d1 + P;
      double* __restrict d3 = d2 + P;
      std::fill(d0, d0 + P, bias[o]);
      std::fill(d1, d1 + P, bias[o + 1]);
      std::fill(d2, d2 + P, bias[o + 2]);
      std::fill(d3, d3 + P, bias[o + 3]);
      for (std::size_t c = 0; c < C; ++c) {
        const double* __restrict s = xb + c * P;
        const double w0 = w[o * C + c], w1 = w[(o + 1) * C + c], w2 = w[(o + 2) * C + c], w3 = w[(o + 3) * C + c];
        for (std::size_t p = 0; p < P; ++p) {
          const double v = s[p];
          d0[p] += w0 * v;
          d1[p] += w1 * v;
          d2[p] += w2 * v;
          d3[p] += w3 * v;
        }
      }
    }
    for (; o < O; ++o) {
      double* __restrict d = ob + o * P;
      std::fill(d, d + P, bias[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const double* __restrict s = xb + c * P;
        const double wv = w[o * C + c];
        for (std::size_t p = 0; p < P; ++p) d[p] += wv * s[p];
      }
    }
  }
}

// gw[o,c] += sum_p go[o,p] x[c,p] for one batch element.
void pointwise_weight_grad(const double* go, const double* x, double* gw, std::size_t C, std::size_t O,
                           std::size_t P) {
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t c = 0; c < C; ++c) gw[o * C + c] += lane_dot(go + o * P, x + c * P, P);
  }
}

// gin[c,p] += sum_o w[o,c] go[o,p] for one batch element, four input channels at a time.
void pointwise_input_grad(const double* go, const double* w, double* gin, std::size_t C, std::size_t O,
                          std::size_t P) {
  std::size_t c = 0;
  for (; c + 4 <= C; c += 4) {
    double* __restrict d0 = gin + c * P;
    double* __restrict d1 = d0 + P;
    double* __restrict d2 = d1 + P;
    double* __restrict d3 = d2 + P;
    for (std::size_t o = 0; o < O; ++o) {
      const double* __restrict s = go + o * P;
      const double w0 = w[o * C + c], w1 = w[o * C + c + 1], w2 = w[o * C + c + 2], w3 = w[o * C + c + 3];
      for (std::size_t p = 0; p < P; ++p) {
        const double v = s[p];
        d0[p] += w0 * v;
        d1[p] += w1 * v;
        d2[p] += w2 * v;
        d3[p] += w3 * v;
      }
    }
  }
  for (; c < C; ++c) {
    double* __restrict d = gin + c * P;
    for (std::size_t o = 0; o < O; ++o) {
      const double* __restrict s = go + o * P;
      const double wv = w[o * C + c];
      for (std::size_t p = 0; p < P; ++p) d[p] += wv * s[p];
    }
  }
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Parameter: return "parameter";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::DepthwiseConv2d: return "depthwise_conv2d";
    case OpKind::PointwiseConv2d: return "pointwise_conv2d";
    case OpKind::Dense: return "dense";
    case OpKind::Relu: return "relu";
    case OpKind::AvgPool2: return "avg_pool2";
    case OpKind::GlobalAvgPool: return "global_avg_pool";
    case OpKind::InstanceNorm: return "instance_norm";
    case OpKind::Softmax: return "softmax";
    case OpKind::L2Normalize: return "l2_normalize";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Affine: return "affine";
    case OpKind::Sum: return "sum";
    case OpKind::Square: return "square";
    case OpKind::Abs: return "abs";
    case OpKind::RowDot: return "row_dot";
    case OpKind::Column: return "column";
    case OpKind::Rows: return "rows";
    case OpKind::WeightedBce: return "weighted_bce";
  }
  return "unknown";
}

NodeId Graph::push(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn fn) {
  Node n;
  n.kind = kind;
  n.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](NodeId id) { return needs_grad(id); });
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return NodeId{nodes_.size() - 1};
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw ContractError("node id " + std::to_string(id.index) + " is not part of this graph");
  }
  return nodes_[id.index];
}

std::span<double> Graph::grad_buffer(NodeId id) {
  Node& n = nodes_[id.index];
  if (!n.needs_grad) return {};
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }
std::span<const double> Graph::grad(NodeId id) const { return node(id).grad; }
OpKind Graph::kind(NodeId id) const { return node(id).kind; }
std::span<const NodeId> Graph::inputs(NodeId id) const { return node(id).inputs; }

NodeId Graph::constant(Tensor value) {
  return push(OpKind::Constant, {}, std::move(value), nullptr);
}

NodeId Graph::parameter(Tensor& param) {
  Node n;
  n.kind = OpKind::Parameter;
  n.value = param;
  n.value.clear_grad();
  n.needs_grad = true;
  n.param = &param;
  nodes_.push_back(std::move(n));
  return NodeId{nodes_.size() - 1};
}

// ---------------------------------------------------------------------------
// Convolutions

NodeId Graph::conv2d(NodeId input, NodeId kernel, NodeId bias, int stride, int pad) {
  const Tensor& x = node(input).value;
  const Tensor& k = node(kernel).value;
  const Tensor& b = node(bias).value;
  expect_rank(x, 4, "conv2d input");
  expect_rank(k, 4, "conv2d kernel");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != C) {
    throw ShapeError("conv2d: input has " + std::to_string(C) + " channels, kernel expects " +
                     std::to_string(k.dim(1)));
  }
  expect_dims(b, {O}, "conv2d bias");
  const std::size_t OH = conv_out(H, kh, stride, pad, "conv2d");
  const std::size_t OW = conv_out(W, kw, stride, pad, "conv2d");
  const PlaneGeom geom{H, W, OH, OW, stride, pad};

  Tensor out({B, O, OH, OW});
  const double* xd = x.data().data();
  const double* kd = k.data().data();
  double* od = out.data().data();
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t o = 0; o < O; ++o) {
      double* plane = od + (bi * O + o) * OH * OW;
      std::fill(plane, plane + OH * OW, b[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const double* in = xd + (bi * C + c) * H * W;
        for (std::size_t i = 0; i < kh; ++i) {
          for (std::size_t j = 0; j < kw; ++j) {
            tap_forward(in, plane, kd[((o * C + c) * kh + i) * kw + j], static_cast<int>(i),
                        static_cast<int>(j), geom);
          }
        }
      }
    }
  }

  return push(OpKind::Conv2d, {input, kernel, bias}, std::move(out),
              [geom, B, C, O, kh, kw](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                const NodeId in_id = n.inputs[0], k_id = n.inputs[1], b_id = n.inputs[2];
                const double* xd = g.nodes_[in_id.index].value.data().data();
                const double* kd = g.nodes_[k_id.index].value.data().data();
                const double* gout = n.grad.data();
                const std::span<double> gin = g.grad_buffer(in_id);
                const std::span<double> gk = g.grad_buffer(k_id);
                const std::span<double> gb = g.grad_buffer(b_id);
                const std::size_t in_plane = geom.in_h * geom.in_w;
                const std::size_t out_plane = geom.out_h * geom.out_w;
                for (std::size_t bi = 0; bi < B; ++bi) {
                  for (std::size_t o = 0; o < O; ++o) {
                    const double* go = gout + (bi * O + o) * out_plane;
                    if (!gb.empty()) {
                      double acc = 0.0;
                      for (std::size_t p = 0; p < out_plane; ++p) acc += go[p];
                      gb[o] += acc;
                    }
                    for (std::size_t c = 0; c < C; ++c) {
                      const double* in = xd + (bi * C + c) * in_plane;
                      for (std::size_t i = 0; i < kh; ++i) {
                        for (std::size_t j = 0; j < kw; ++j) {
                          const std::size_t widx = ((o * C + c) * kh + i) * kw + j;
                          if (!gk.empty()) {
                            gk[widx] += tap_backward_weight(in, go, static_cast<int>(i),
                                                            static_cast<int>(j), geom);
                          }
                          if (!gin.empty()) {
                            tap_backward_input(gin.data() + (bi * C + c) * in_plane, go, kd[widx],
                                               static_cast<int>(i), static_cast<int>(j), geom);
                          }
                        }
                      }
                    }
                  }
                }
              });
}

NodeId Graph::depthwise_conv2d(NodeId input, NodeId kernel, int pad) {
  const Tensor& x = node(input).value;
  const Tensor& k = node(kernel).value;
  expect_rank(x, 4, "depthwise_conv2d input");
  expect_rank(k, 3, "depthwise_conv2d kernel");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t kh = k.dim(1), kw = k.dim(2);
  if (k.dim(0) != C) {
    throw ShapeError("depthwise_conv2d: input has " + std::to_string(C) +
                     " channels, kernel has " + std::to_string(k.dim(0)));
  }
  const std::size_t OH = conv_out(H, kh, 1, pad, "depthwise_conv2d");
  const std::size_t OW = conv_out(W, kw, 1, pad, "depthwise_conv2d");
  const PlaneGeom geom{H, W, OH, OW, 1, pad};

  Tensor out({B, C, OH, OW});
  const double* xd = x.data().data();
  const double* kd = k.data().data();
  double* od = out.data().data();
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* in = xd + (bi * C + c) * H * W;
      double* plane = od + (bi * C + c) * OH * OW;
      for (std::size_t i = 0; i < kh; ++i) {
        for (std::size_t j = 0; j < kw; ++j) {
          tap_forward(in, plane, kd[(c * kh + i) * kw + j], static_cast<int>(i), static_cast<int>(j),
                      geom);
        }
      }
    }
  }

  return push(OpKind::DepthwiseConv2d, {input, kernel}, std::move(out),
              [geom, B, C, kh, kw](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                const NodeId in_id = n.inputs[0], k_id = n.inputs[1];
                const double* xd = g.nodes_[in_id.index].value.data().data();
                const double* kd = g.nodes_[k_id.index].value.data().data();
                const std::span<double> gin = g.grad_buffer(in_id);
                const std::span<double> gk = g.grad_buffer(k_id);
                const std::size_t in_plane = geom.in_h * geom.in_w;
                const std::size_t out_plane = geom.out_h * geom.out_w;
                for (std::size_t bi = 0; bi < B; ++bi) {
                  for (std::size_t c = 0; c < C; ++c) {
                    const double* in = xd + (bi * C + c) * in_plane;
                    const double* go = n.grad.data() + (bi * C + c) * out_plane;
                    for (std::size_t i = 0; i < kh; ++i) {
                      for (std::size_t j = 0; j < kw; ++j) {
                        const std::size_t widx = (c * kh + i) * kw + j;
                        if (!gk.empty()) {
                          gk[widx] += tap_backward_weight(in, go, static_cast<int>(i),
                                                          static_cast<int>(j), geom);
                        }
                        if (!gin.empty()) {
                          tap_backward_input(gin.data() + (bi * C + c) * in_plane, go, kd[widx],
                                             static_cast<int>(i), static_cast<int>(j), geom);
                        }
                      }
                    }
                  }
                }
              });
}

NodeId Graph::pointwise_conv2d(NodeId input, NodeId weight, NodeId bias) {
  const Tensor& x = node(input).value;
  const Tensor& w = node(weight).value;
  const Tensor& b = node(bias).value;
  expect_rank(x, 4, "pointwise_conv2d input");
  expect_rank(w, 2, "pointwise_conv2d weight");
  const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  const std::size_t O = w.dim(0);
  if (w.dim(1) != C) {
    throw ShapeError("pointwise_conv2d: input has " + std::to_string(C) +
                     " channels, weight expects " + std::to_string(w.dim(1)));
  }
  expect_dims(b, {O}, "pointwise_conv2d bias");

  Tensor out({B, O, x.dim(2), x.dim(3)});
  pointwise_forward(x.data().data(), w.data().data(), b.data().data(), out.data().data(), B, C, O, P);

  return push(OpKind::PointwiseConv2d, {input, weight, bias}, std::move(out),
              [B, C, O, P](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                const NodeId in_id = n.inputs[0], w_id = n.inputs[1], b_id = n.inputs[2];
                const double* xd = g.nodes_[in_id.index].value.data().data();
                const double* wd = g.nodes_[w_id.index].value.data().data();
                const std::span<double> gin = g.grad_buffer(in_id);
                const std::span<double> gw = g.grad_buffer(w_id);
                const std::span<double> gb = g.grad_buffer(b_id);
                for (std::size_t bi = 0; bi < B; ++bi) {
                  const double* go = n.grad.data() + bi * O * P;
                  if (!gb.empty()) {
                    for (std::size_t o = 0; o < O; ++o) gb[o] += lane_dot(go + o * P, nullptr, P);
                  }
                  if (!gw.empty()) pointwise_weight_grad(go, xd + bi * C * P, gw.data(), C, O, P);
                  if (!gin.empty()) pointwise_input_grad(go, wd, gin.data() + bi * C * P, C, O, P);
                }
              });
}

NodeId Graph::separable_conv2d(NodeId input, NodeId depthwise, NodeId pointwise, NodeId bias) {
  const Tensor& dw = node(depthwise).value;
  expect_rank(dw, 3, "separable_conv2d depthwise kernel");
  if (dw.dim(1) != dw.dim(2) || dw.dim(1) % 2 == 0) {
    throw ShapeError("separable_conv2d: depthwise kernel must be square with odd extent, got " +
                     dims_to_string(dw.dims()));
  }
  const NodeId spatial = depthwise_conv2d(input, depthwise, static_cast<int>(dw.dim(1) / 2));
  return pointwise_conv2d(spatial, pointwise, bias);
}

NodeId Graph::dense(NodeId input, NodeId weight, NodeId bias) {
  const Tensor& x = node(input).value;
  const Tensor& w = node(weight).value;
  const Tensor& b = node(bias).value;
  expect_rank(x, 2, "dense input");
  expect_rank(w, 2, "dense weight");
  const std::size_t B = x.dim(0), n_in = x.dim(1), m = w.dim(0);
  if (w.dim(1) != n_in) {
    throw ShapeError("dense: input width " + std::to_string(n_in) + " vs weight " +
                     dims_to_string(w.dims()));
  }
  expect_dims(b, {m}, "dense bias");
  Tensor out({B, m});
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n_in; ++j) acc += w[i * n_in + j] * x[bi * n_in + j];
      out[bi * m + i] = acc + b[i];
    }
  }
  return push(OpKind::Dense, {input, weight, bias}, std::move(out),
              [B, n_in, m](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                const NodeId in_id = n.inputs[0], w_id = n.inputs[1], b_id = n.inputs[2];
                const Tensor& x = g.nodes_[in_id.index].value;
                const Tensor& w = g.nodes_[w_id.index].value;
                const std::span<double> gin = g.grad_buffer(in_id);
                const std::span<double> gw = g.grad_buffer(w_id);
                const std::span<double> gb = g.grad_buffer(b_id);
                for (std::size_t bi = 0; bi < B; ++bi) {
                  for (std::size_t i = 0; i < m; ++i) {
                    const double go = n.grad[bi * m + i];
                    if (!gb.empty()) gb[i] += go;
                    for (std::size_t j = 0; j < n_in; ++j) {
                      if (!gw.empty()) gw[i * n_in + j] += go * x[bi * n_in + j];
                      if (!gin.empty()) gin[bi * n_in + j] += go * w[i * n_in + j];
                    }
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// Activations, pooling, normalization

NodeId Graph::relu(NodeId x) {
  const Tensor& v = node(x).value;
  Tensor out(v.dims());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return push(OpKind::Relu, {x}, std::move(out), [](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const std::span<double> gin = g.grad_buffer(n.inputs[0]);
    if (gin.empty()) return;
    const Tensor& in = g.nodes_[n.inputs[0].index].value;
    for (std::size_t i = 0; i < gin.size(); ++i) {
      if (in[i] > 0.0) gin[i] += n.grad[i];
    }
  });
}

NodeId Graph::avg_pool2(NodeId x) {
  const Tensor& v = node(x).value;
  expect_rank(v, 4, "avg_pool2 input");
  const std::size_t B = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("avg_pool2: spatial size " + std::to_string(H) + "x" + std::to_string(W) +
                     " is not even");
  }
  const std::size_t OH = H / 2, OW = W / 2;
  Tensor out({B, C, OH, OW});
  for (std::size_t plane = 0; plane < B * C; ++plane) {
    const double* src = v.data().data() + plane * H * W;
    double* dst = out.data().data() + plane * OH * OW;
    for (std::size_t r = 0; r < OH; ++r) {
      for (std::size_t c = 0; c < OW; ++c) {
        const double* a = src + 2 * r * W + 2 * c;
        dst[r * OW + c] = 0.25 * (a[0] + a[1] + a[W] + a[W + 1]);
      }
    }
  }
  return push(OpKind::AvgPool2, {x}, std::move(out), [B, C, H, W](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const std::span<double> gin = g.grad_buffer(n.inputs[0]);
    if (gin.empty()) return;
    const std::size_t OH = H / 2, OW = W / 2;
    for (std::size_t plane = 0; plane < B * C; ++plane) {
      const double* go = n.grad.data() + plane * OH * OW;
      double* dst = gin.data() + plane * H * W;
      for (std::size_t r = 0; r < OH; ++r) {
        for (std::size_t c = 0; c < OW; ++c) {
          const double q = 0.25 * go[r * OW + c];
          double* a = dst + 2 * r * W + 2 * c;
          a[0] += q;
          a[1] += q;
          a[W] += q;
          a[W + 1] += q;
        }
      }
    }
  });
}

NodeId Graph::instance_norm(NodeId x, double eps) {
  const Tensor& v = node(x).value;
  expect_rank(v, 4, "instance_norm input");
  if (!(eps > 0.0)) throw ContractError("instance_norm: eps must be > 0");
  const std::size_t planes = v.dim(0) * v.dim(1), P = v.dim(2) * v.dim(3);
  if (P == 0) throw ShapeError("instance_norm: empty spatial extent");
  Tensor out(v.dims());
  std::vector<double> inv_std(planes);
  for (std::size_t plane = 0; plane < planes; ++plane) {
    const double* src = v.data().data() + plane * P;
    double* dst = out.data().data() + plane * P;
    const double mean = lane_dot(src, nullptr, P) / static_cast<double>(P);
    double var = 0.0;
    for (std::size_t p = 0; p < P; ++p) var += (src[p] - mean) * (src[p] - mean);
    var /= static_cast<double>(P);
    const double is = 1.0 / std::sqrt(var + eps);
    for (std::size_t p = 0; p < P; ++p) dst[p] = (src[p] - mean) * is;
    inv_std[plane] = is;
  }
  return push(OpKind::InstanceNorm, {x}, std::move(out),
              [planes, P, inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                const std::span<double> gin = g.grad_buffer(n.inputs[0]);
                if (gin.empty()) return;
                const double inv_p = 1.0 / static_cast<double>(P);
                for (std::size_t plane = 0; plane < planes; ++plane) {
                  const double* go = n.grad.data() + plane * P;
                  const double* y = n.value.data().data() + plane * P;
                  const double g_mean = lane_dot(go, nullptr, P) * inv_p;
                  const double gy_mean = lane_dot(go, y, P) * inv_p;
                  double* dst = gin.data() + plane * P;
                  for (std::size_t p = 0; p < P; ++p) dst[p] += inv_std[plane] * (go[p] - g_mean - y[p] * gy_mean);
                }
              });
}

NodeId Graph::global_avg_pool(NodeId x) {
  const Tensor& v = node(x).value;
  expect_rank(v, 4, "global_avg_pool input");
  const std::size_t B = v.dim(0), C = v.dim(1), P = v.dim(2) * v.dim(3);
  if (P == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  Tensor out({B, C});
  for (std::size_t plane = 0; plane < B * C; ++plane) {
    const double* src = v.data().data() + plane * P;
    double acc = 0.0;
    for (std::size_t p = 0; p < P; ++p) acc += src[p];
    out[plane] = acc / static_cast<double>(P);
  }
  return push(OpKind::GlobalAvgPool, {x}, std::move(out), [B, C, P](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const std::span<double> gin = g.grad_buffer(n.inputs[0]);
    if (gin.empty()) return;
    const double inv = 1.0 / static_cast<double>(P);
    for (std::size_t plane = 0; plane < B * C; ++plane) {
      const double q = n.grad[plane] * inv;
      double* dst = gin.data() + plane * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] += q;
    }
  });
}

NodeId Graph::softmax(NodeId x) {
  const Tensor& v = node(x).value;
  expect_rank(v, 2, "softmax input");
  const std::size_t B = v.dim(0), k = v.dim(1);
  Tensor out(v.dims());
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = v.data().data() + b * k;
    double* dst = out.data().data() + b * k;
    const double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      dst[j] = std::exp(row[j] - mx);
      total += dst[j];
    }
    for (std::size_t j = 0; j < k; ++j) dst[j] /= total;
  }
  return push(OpKind::Softmax, {x}, std::move(out), [B, k](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const std::span<double> gin = g.grad_buffer(n.inputs[0]);
    if (gin.empty()) return;
    for (std::size_t b = 0; b < B; ++b) {
      const double* y = n.value.data().data() + b * k;
      const double* go = n.grad.data() + b * k;
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += go[j] * y[j];
      for (std::size_t j = 0; j < k; ++j) gin[b * k + j] += y[j] * (go[j] - dot);
    }
  });
}

NodeId Graph::l2_normalize(NodeId x, double eps_norm) {
  const Tensor& v = node(x).value;
  expect_rank(v, 2, "l2_normalize input");
  const std::size_t B = v.dim(0), d = v.dim(1);
  Tensor out(v.dims());
  std::vector<double> norms(B);
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = v.data().data() + b * d;
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += row[j] * row[j];
    const double norm = std::sqrt(sq);
    if (!(norm > eps_norm)) {
      throw DegenerateVectorError("l2_normalize: row " + std::to_string(b) + " has norm " +
                                  std::to_string(norm) + " (<= " + std::to_string(eps_norm) + ")");
    }
    norms[b] = norm;
    for (std::size_t j = 0; j < d; ++j) out[b * d + j] = row[j] / norm;
  }
  return push(OpKind::L2Normalize, {x}, std::move(out),
              [B, d, norms = std::move(norms)](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                const std::span<double> gin = g.grad_buffer(n.inputs[0]);
                if (gin.empty()) return;
                // d(x/|x|) = (g - y (y.g)) / |x|
                for (std::size_t b = 0; b < B; ++b) {
                  const double* y = n.value.data().data() + b * d;
                  const double* go = n.grad.data() + b * d;
                  double dot = 0.0;
                  for (std::size_t j = 0; j < d; ++j) dot += y[j] * go[j];
                  for (std::size_t j = 0; j < d; ++j) gin[b * d + j] += (go[j] - y[j] * dot) / norms[b];
                }
              });
}

// ---------------------------------------------------------------------------
// Elementwise and reductions

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  require_same_dims(x, y, "add");
  Tensor out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return push(OpKind::Add, {a, b}, std::move(out), [](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    for (const NodeId in : n.inputs) {
      const std::span<double> gi = g.grad_buffer(in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += n.grad[i];
    }
  });
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  require_same_dims(x, y, "sub");
  Tensor out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return push(OpKind::Sub, {a, b}, std::move(out), [](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const std::span<double> ga = g.grad_buffer(n.inputs[0]);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
    const std::span<double> gb = g.grad_buffer(n.inputs[1]);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= n.grad[i];
  });
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  require_same_dims(x, y, "mul");
  Tensor out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return push(OpKind::Mul, {a, b}, std::move(out), [](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const Tensor& x = g.nodes_[n.inputs[0].index].value;
    const Tensor& y = g.nodes_[n.inputs[1].index].value;
    const std::span<double> ga = g.grad_buffer(n.inputs[0]);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * y[i];
    const std::span<double> gb = g.grad_buffer(n.inputs[1]);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[i] * x[i];
  });
}

NodeId Graph::affine(NodeId x, double factor, double shift) {
  const Tensor& v = node(x).value;
  Tensor out(v.dims());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = factor * v[i] + shift;
  return push(OpKind::Affine, {x}, std::move(out), [factor](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const std::span<double> gi = g.grad_buffer(n.inputs[0]);
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += factor * n.grad[i];
  });
}

NodeId Graph::sum(NodeId x) {
  const Tensor& v = node(x).value;
  double acc = 0.0;
  for (const double e : v.data()) acc += e;
  return push(OpKind::Sum, {x}, Tensor::scalar(acc), [](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const std::span<double> gi = g.grad_buffer(n.inputs[0]);
    for (double& e : gi) e += n.grad[0];
  });
}

NodeId Graph::square(NodeId x) {
  const Tensor& v = node(x).value;
  Tensor out(v.dims());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * v[i];
  return push(OpKind::Square, {x}, std::move(out), [](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const Tensor& v = g.nodes_[n.inputs[0].index].value;
    const std::span<double> gi = g.grad_buffer(n.inputs[0]);
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += 2.0 * v[i] * n.grad[i];
  });
}

NodeId Graph::abs(NodeId x) {
  const Tensor& v = node(x).value;
  Tensor out(v.dims());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::abs(v[i]);
  return push(OpKind::Abs, {x}, std::move(out), [](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const Tensor& v = g.nodes_[n.inputs[0].index].value;
    const std::span<double> gi = g.grad_buffer(n.inputs[0]);
    for (std::size_t i = 0; i < gi.size(); ++i) {
      if (v[i] > 0.0) gi[i] += n.grad[i];
      else if (v[i] < 0.0) gi[i] -= n.grad[i];
    }
  });
}

NodeId Graph::row_dot(NodeId a, NodeId b) {
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  expect_rank(x, 2, "row_dot lhs");
  require_same_dims(x, y, "row_dot");
  const std::size_t N = x.dim(0), d = x.dim(1);
  Tensor out({N});
  for (std::size_t r = 0; r < N; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += x[r * d + j] * y[r * d + j];
    out[r] = acc;
  }
  return push(OpKind::RowDot, {a, b}, std::move(out), [N, d](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const Tensor& x = g.nodes_[n.inputs[0].index].value;
    const Tensor& y = g.nodes_[n.inputs[1].index].value;
    const std::span<double> ga = g.grad_buffer(n.inputs[0]);
    const std::span<double> gb = g.grad_buffer(n.inputs[1]);
    for (std::size_t r = 0; r < N; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        if (!ga.empty()) ga[r * d + j] += n.grad[r] * y[r * d + j];
        if (!gb.empty()) gb[r * d + j] += n.grad[r] * x[r * d + j];
      }
    }
  });
}

NodeId Graph::column(NodeId x, std::size_t j) {
  const Tensor& v = node(x).value;
  expect_rank(v, 2, "column input");
  const std::size_t B = v.dim(0), k = v.dim(1);
  if (j >= k) throw ShapeError("column: index " + std::to_string(j) + " out of " + std::to_string(k));
  Tensor out({B});
  for (std::size_t b = 0; b < B; ++b) out[b] = v[b * k + j];
  return push(OpKind::Column, {x}, std::move(out), [B, k, j](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const std::span<double> gi = g.grad_buffer(n.inputs[0]);
    if (gi.empty()) return;
    for (std::size_t b = 0; b < B; ++b) gi[b * k + j] += n.grad[b];
  });
}

NodeId Graph::rows(NodeId x, std::size_t begin, std::size_t count) {
  const Tensor& v = node(x).value;
  if (v.rank() == 0 || begin + count > v.dim(0)) {
    throw ShapeError("rows: slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + dims_to_string(v.dims()));
  }
  const std::size_t stride = v.dim(0) == 0 ? 0 : v.size() / v.dim(0);
  Dims dims = v.dims();
  dims[0] = count;
  std::vector<double> data(v.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                           v.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * stride));
  return push(OpKind::Rows, {x}, Tensor(std::move(dims), std::move(data)),
              [offset = begin * stride](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                const std::span<double> gi = g.grad_buffer(n.inputs[0]);
                if (gi.empty()) return;
                for (std::size_t i = 0; i < n.grad.size(); ++i) gi[offset + i] += n.grad[i];
              });
}

NodeId Graph::weighted_bce(NodeId probs, std::span<const int> labels, double w_real, double w_fake) {
  const Tensor& p = node(probs).value;
  expect_rank(p, 1, "weighted_bce probabilities");
  if (labels.size() != p.size()) {
    throw ShapeError("weighted_bce: " + std::to_string(p.size()) + " probabilities vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::vector<int> ys(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (ys[i] != 0 && ys[i] != 1) throw ContractError("weighted_bce: label must be 0 or 1");
    const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    total += ys[i] == 1 ? -w_fake * std::log(q) : -w_real * std::log(1.0 - q);
  }
  return push(OpKind::WeightedBce, {probs}, Tensor::scalar(total),
              [ys = std::move(ys), w_real, w_fake](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                const std::span<double> gi = g.grad_buffer(n.inputs[0]);
                if (gi.empty()) return;
                const Tensor& p = g.nodes_[n.inputs[0].index].value;
                for (std::size_t i = 0; i < gi.size(); ++i) {
                  if (p[i] < kProbClamp || p[i] > 1.0 - kProbClamp) continue;
                  const double d = ys[i] == 1 ? -w_fake / p[i] : w_real / (1.0 - p[i]);
                  gi[i] += n.grad[0] * d;
                }
              });
}

// ---------------------------------------------------------------------------

void Graph::backward(NodeId loss) {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got dims " + dims_to_string(root.value.dims()));
  }
  for (Node& n : nodes_) n.grad.clear();
  visited_ = 0;
  if (root.needs_grad) {
    grad_buffer(loss)[0] = 1.0;
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      ++visited_;
      if (n.backward) n.backward(*this, i);
    }
  }
  // Parameters the loss does not reach still get a (zero) gradient buffer.
  for (Node& n : nodes_) {
    if (n.kind != OpKind::Parameter) continue;
    std::span<double> dst = n.param->grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
  }
}

}  // namespace corefd::ndgrad
