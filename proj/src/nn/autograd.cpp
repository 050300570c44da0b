#include "semstego/nn/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "semstego/core/error.hpp"

namespace semstego::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

thread_local bool g_grad_enabled = true;

bool needs_graph(std::initializer_list<const Var*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Var* v : inputs) {
    if (v->defined() && v->requires_grad()) return true;
  }
  return false;
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  Var out(std::move(value), true);
  Node& node = *out.node();
  for (const Var& p : parents) node.parents.push_back(p.node());
  node.backward = std::move(backward);
  return out;
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " input, got " + shape_to_string(v.shape()));
  }
}

struct ConvGeometry {
  std::size_t batch, channels, height, width, kernel, stride, pad, out_h, out_w;
  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return batch * out_h * out_w; }
};

ConvGeometry conv_geometry(const Shape& in, std::size_t kernel, int stride, int pad) {
  if (stride < 1 || pad < 0) throw DimensionError("conv: invalid stride or padding");
  const long h = static_cast<long>(in[2]) + 2 * pad - static_cast<long>(kernel);
  const long w = static_cast<long>(in[3]) + 2 * pad - static_cast<long>(kernel);
  if (h < 0 || w < 0) throw DimensionError("conv: kernel larger than padded input");
  return ConvGeometry{in[0], in[1], in[2], in[3], kernel, static_cast<std::size_t>(stride),
                      static_cast<std::size_t>(pad), static_cast<std::size_t>(h / stride + 1),
                      static_cast<std::size_t>(w / stride + 1)};
}

// col[(c*k + ki)*k + kj][b*P + oy*Wo + ox] = x[b][c][oy*s - p + ki][ox*s - p + kj]
void im2col(const double* x, const ConvGeometry& g, double* col) {
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = col + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const double* xin = x + (b * g.channels + c) * g.height * g.width;
          double* dst = row + b * plane;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
            double* d = dst + oy * g.out_w;
            if (iy < 0 || iy >= static_cast<long>(g.height)) {
              std::fill(d, d + g.out_w, 0.0);
              continue;
            }
            const double* src = xin + iy * g.width;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
              d[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0 : src[ix];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back, accumulating into x.
void col2im(const double* col, const ConvGeometry& g, double* x) {
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = col + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        for (std::size_t b = 0; b < g.batch; ++b) {
          double* xout = x + (b * g.channels + c) * g.height * g.width;
          const double* src = row + b * plane;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
            double* dst = xout + iy * g.width;
            const double* s = src + oy * g.out_w;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
              if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

// `derivative(in, out)` gives d out / d in elementwise.
template <typename F, typename D>
Var unary(const Var& x, F&& forward_fn, D derivative) {
  Tensor out = x.value();
  for (double& v : out.values()) v = forward_fn(v);
  if (!needs_graph({&x})) return Var(std::move(out));
  return make_result(std::move(out), {x}, [derivative](Node& self) {
    Node& in = parent(self, 0);
    if (!in.requires_grad) return;
    Tensor g(in.value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = self.grad[i] * derivative(in.value[i], self.value[i]);
    }
    in.accumulate(g);
  });
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  if (grad.empty() && !value.empty()) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (!node_->grad.empty()) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

void Var::zero_grad() const { node_->grad = Tensor(); }

void Var::backward() {
  if (node_->value.size() != 1) throw DimensionError("backward: root must be a scalar");
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(Tensor(node_->value.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d weight");
  const Shape& ws = weight.shape();
  if (ws[1] != x.shape()[1] || ws[2] != ws[3]) {
    throw DimensionError("conv2d: weight " + shape_to_string(ws) + " incompatible with input " +
                         shape_to_string(x.shape()));
  }
  const std::size_t cout = ws[0];
  const std::size_t batch = x.shape()[0];
  // Per-item geometry keeps the column buffer cache resident.
  ConvGeometry g = conv_geometry(x.shape(), ws[2], stride, pad);
  g.batch = 1;
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t in_item = g.channels * g.height * g.width;

  Tensor out({batch, cout, g.out_h, g.out_w});
  RowMat col(g.col_rows(), plane);
  const ConstMapMat wmat(weight.value().data(), cout, g.col_rows());
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.value().data() + b * in_item, g, col.data());
    MapMat y(out.data() + b * cout * plane, cout, plane);
    y.noalias() = wmat * col;
    if (bias.defined()) y.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data(), cout);
  }

  if (!needs_graph({&x, &weight, &bias})) return Var(std::move(out));
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), parents, [g, cout, plane, batch, in_item](Node& self) {
    Node& xin = parent(self, 0);
    Node& w = parent(self, 1);
    const bool want_b = self.parents.size() > 2 && parent(self, 2).requires_grad;
    const ConstMapMat wmat(w.value.data(), cout, g.col_rows());
    RowMat col(g.col_rows(), plane);
    RowMat dcol(g.col_rows(), plane);
    RowMat dw = RowMat::Zero(cout, g.col_rows());
    Eigen::VectorXd db = Eigen::VectorXd::Zero(cout);
    Tensor dx;
    if (xin.requires_grad) dx = Tensor(xin.value.shape(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const ConstMapMat dy(self.grad.data() + b * cout * plane, cout, plane);
      if (w.requires_grad) {
        im2col(xin.value.data() + b * in_item, g, col.data());
        dw.noalias() += dy * col.transpose();
      }
      if (want_b) db += dy.rowwise().sum();
      if (xin.requires_grad) {
        dcol.noalias() = wmat.transpose() * dy;
        col2im(dcol.data(), g, dx.data() + b * in_item);
      }
    }
    if (w.requires_grad) w.accumulate(Tensor(w.value.shape(), std::vector<double>(dw.data(), dw.data() + dw.size())));
    if (want_b) parent(self, 2).accumulate(Tensor({cout}, std::vector<double>(db.data(), db.data() + cout)));
    if (xin.requires_grad) xin.accumulate(dx);
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank(x, 4, "conv_transpose2d");
  require_rank(weight, 4, "conv_transpose2d weight");
  const Shape& ws = weight.shape();
  const Shape& xs = x.shape();
  if (ws[0] != xs[1] || ws[2] != ws[3]) {
    throw DimensionError("conv_transpose2d: weight " + shape_to_string(ws) +
                         " incompatible with input " + shape_to_string(xs));
  }
  const std::size_t cin = ws[0], cout = ws[1], k = ws[2];
  const std::size_t batch = xs[0];
  const long oh = (static_cast<long>(xs[2]) - 1) * stride - 2 * pad + static_cast<long>(k);
  const long ow = (static_cast<long>(xs[3]) - 1) * stride - 2 * pad + static_cast<long>(k);
  if (oh <= 0 || ow <= 0) throw DimensionError("conv_transpose2d: empty output");
  // Geometry of the adjoint convolution from one output item back to x.
  const ConvGeometry g = conv_geometry({1, cout, static_cast<std::size_t>(oh),
                                        static_cast<std::size_t>(ow)},
                                       k, stride, pad);
  if (g.out_h != xs[2] || g.out_w != xs[3]) {
    throw DimensionError("conv_transpose2d: stride/padding do not invert cleanly");
  }
  const std::size_t plane = xs[2] * xs[3];
  const std::size_t oplane = g.height * g.width;

  Tensor out({batch, cout, g.height, g.width});
  const ConstMapMat wmat(weight.value().data(), cin, cout * k * k);
  RowMat dcol(cout * k * k, plane);
  for (std::size_t b = 0; b < batch; ++b) {
    dcol.noalias() = wmat.transpose() * ConstMapMat(x.value().data() + b * cin * plane, cin, plane);
    double* ob = out.data() + b * cout * oplane;
    col2im(dcol.data(), g, ob);
    if (bias.defined()) {
      for (std::size_t c = 0; c < cout; ++c) {
        const double bc = bias.value()[c];
        for (std::size_t i = 0; i < oplane; ++i) ob[c * oplane + i] += bc;
      }
    }
  }

  if (!needs_graph({&x, &weight, &bias})) return Var(std::move(out));
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), parents, [g, cin, cout, k, plane, oplane, batch](Node& self) {
    Node& xin = parent(self, 0);
    Node& w = parent(self, 1);
    const bool want_b = self.parents.size() > 2 && parent(self, 2).requires_grad;
    const ConstMapMat wmat(w.value.data(), cin, cout * k * k);
    RowMat colg(cout * k * k, plane);
    RowMat dw = RowMat::Zero(cin, cout * k * k);
    Tensor db({cout}, 0.0);
    Tensor dx;
    if (xin.requires_grad) dx = Tensor(xin.value.shape(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* gb = self.grad.data() + b * cout * oplane;
      if (want_b) {
        for (std::size_t c = 0; c < cout; ++c) {
          double s = 0.0;
          for (std::size_t i = 0; i < oplane; ++i) s += gb[c * oplane + i];
          db[c] += s;
        }
      }
      if (!w.requires_grad && !xin.requires_grad) continue;
      im2col(gb, g, colg.data());
      if (w.requires_grad) {
        dw.noalias() += ConstMapMat(xin.value.data() + b * cin * plane, cin, plane) * colg.transpose();
      }
      if (xin.requires_grad) {
        MapMat(dx.data() + b * cin * plane, cin, plane).noalias() = wmat * colg;
      }
    }
    if (w.requires_grad) w.accumulate(Tensor(w.value.shape(), std::vector<double>(dw.data(), dw.data() + dw.size())));
    if (want_b) parent(self, 2).accumulate(db);
    if (xin.requires_grad) xin.accumulate(dx);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear weight");
  const std::size_t b = x.shape()[0], din = x.shape()[1], dout = weight.shape()[1];
  if (weight.shape()[0] != din) throw DimensionError("linear: weight rows must equal input width");
  Tensor out({b, dout});
  MapMat(out.data(), b, dout).noalias() =
      ConstMapMat(x.value().data(), b, din) * ConstMapMat(weight.value().data(), din, dout);
  if (bias.defined()) {
    MapMat(out.data(), b, dout).rowwise() +=
        Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), dout);
  }
  if (!needs_graph({&x, &weight, &bias})) return Var(std::move(out));
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), parents, [b, din, dout](Node& self) {
    ConstMapMat dy(self.grad.data(), b, dout);
    Node& xin = parent(self, 0);
    Node& w = parent(self, 1);
    if (w.requires_grad) {
      Tensor dw({din, dout});
      MapMat(dw.data(), din, dout).noalias() =
          ConstMapMat(xin.value.data(), b, din).transpose() * dy;
      w.accumulate(dw);
    }
    if (self.parents.size() > 2 && parent(self, 2).requires_grad) {
      Tensor db({dout});
      Eigen::Map<Eigen::RowVectorXd>(db.data(), dout) = dy.colwise().sum();
      parent(self, 2).accumulate(db);
    }
    if (xin.requires_grad) {
      Tensor dx({b, din});
      MapMat(dx.data(), b, din).noalias() =
          dy * ConstMapMat(w.value.data(), din, dout).transpose();
      xin.accumulate(dx);
    }
  });
}

Var add(const Var& a, const Var& b) {
  Tensor out = a.value() + b.value();
  if (!needs_graph({&a, &b})) return Var(std::move(out));
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).accumulate(self.grad);
    if (parent(self, 1).requires_grad) parent(self, 1).accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  Tensor out = a.value() - b.value();
  if (!needs_graph({&a, &b})) return Var(std::move(out));
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).accumulate(self.grad);
    if (parent(self, 1).requires_grad) parent(self, 1).accumulate(-1.0 * self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  if (!needs_graph({&a, &b})) return Var(std::move(out));
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= pb.value[i];
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= pa.value[i];
      pb.accumulate(g);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = s * a.value();
  if (!needs_graph({&a})) return Var(std::move(out));
  return make_result(std::move(out), {a}, [s](Node& self) {
    parent(self, 0).accumulate(s * self.grad);
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v += s;
  if (!needs_graph({&a})) return Var(std::move(out));
  return make_result(std::move(out), {a}, [](Node& self) { parent(self, 0).accumulate(self.grad); });
}

Var add_channel_vector(const Var& x, const Var& v) {
  require_rank(x, 4, "add_channel_vector");
  require_rank(v, 2, "add_channel_vector vector");
  const Shape& s = x.shape();
  if (v.shape()[0] != s[0] || v.shape()[1] != s[1]) {
    throw DimensionError("add_channel_vector: vector shape " + shape_to_string(v.shape()) +
                         " incompatible with " + shape_to_string(s));
  }
  const std::size_t plane = s[2] * s[3];
  Tensor out = x.value();
  for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc) {
    double* p = out.data() + bc * plane;
    const double add_v = v.value()[bc];
    for (std::size_t i = 0; i < plane; ++i) p[i] += add_v;
  }
  if (!needs_graph({&x, &v})) return Var(std::move(out));
  return make_result(std::move(out), {x, v}, [plane](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).accumulate(self.grad);
    Node& pv = parent(self, 1);
    if (pv.requires_grad) {
      Tensor g(pv.value.shape());
      for (std::size_t bc = 0; bc < g.size(); ++bc) {
        const double* p = self.grad.data() + bc * plane;
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
        g[bc] = s;
      }
      pv.accumulate(g);
    }
  });
}

Var silu(const Var& x) {
  return unary(
      x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double in, double) {
        const double s = 1.0 / (1.0 + std::exp(-in));
        return s * (1.0 + in * (1.0 - s));
      });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double out) { return out * (1.0 - out); });
}

Var exp(const Var& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double out) { return out; });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double in, double) { return (in >= lo && in <= hi) ? 1.0 : 0.0; });
}

Var concat_channels(const Var& a, const Var& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw DimensionError("concat_channels: incompatible shapes");
  }
  const std::size_t plane = sa[2] * sa[3], ca = sa[1], cb = sb[1];
  Tensor out({sa[0], ca + cb, sa[2], sa[3]});
  for (std::size_t n = 0; n < sa[0]; ++n) {
    std::copy_n(a.value().data() + n * ca * plane, ca * plane, out.data() + n * (ca + cb) * plane);
    std::copy_n(b.value().data() + n * cb * plane, cb * plane,
                out.data() + (n * (ca + cb) + ca) * plane);
  }
  if (!needs_graph({&a, &b})) return Var(std::move(out));
  return make_result(std::move(out), {a, b}, [plane, ca, cb](Node& self) {
    const std::size_t batch = self.value.dim(0);
    for (int which = 0; which < 2; ++which) {
      Node& p = parent(self, which);
      if (!p.requires_grad) continue;
      const std::size_t c = which == 0 ? ca : cb;
      const std::size_t offset = which == 0 ? 0 : ca;
      Tensor g(p.value.shape());
      for (std::size_t n = 0; n < batch; ++n) {
        std::copy_n(self.grad.data() + (n * (ca + cb) + offset) * plane, c * plane,
                    g.data() + n * c * plane);
      }
      p.accumulate(g);
    }
  });
}

Var slice_channels(const Var& x, std::size_t begin, std::size_t end) {
  require_rank(x, 4, "slice_channels");
  const Shape& s = x.shape();
  if (begin >= end || end > s[1]) throw DimensionError("slice_channels: bad range");
  const std::size_t plane = s[2] * s[3], c = end - begin;
  Tensor out({s[0], c, s[2], s[3]});
  for (std::size_t n = 0; n < s[0]; ++n) {
    std::copy_n(x.value().data() + (n * s[1] + begin) * plane, c * plane,
                out.data() + n * c * plane);
  }
  if (!needs_graph({&x})) return Var(std::move(out));
  return make_result(std::move(out), {x}, [plane, c, begin](Node& self) {
    Node& p = parent(self, 0);
    const std::size_t batch = p.value.dim(0), channels = p.value.dim(1);
    Tensor g(p.value.shape(), 0.0);
    for (std::size_t n = 0; n < batch; ++n) {
      std::copy_n(self.grad.data() + n * c * plane, c * plane,
                  g.data() + (n * channels + begin) * plane);
    }
    p.accumulate(g);
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  if (!needs_graph({&x})) return Var(std::move(out));
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& p = parent(self, 0);
    p.accumulate(self.grad.reshaped(p.value.shape()));
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  if (!needs_graph({&x})) return Var(Tensor({1}, s));
  return make_result(Tensor({1}, s), {x}, [](Node& self) {
    Node& p = parent(self, 0);
    p.accumulate(Tensor(p.value.shape(), self.grad[0]));
  });
}

Var mean(const Var& x) {
  if (x.value().empty()) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var mse_loss(const Var& prediction, const Tensor& target) {
  require_same_shape(prediction.value(), target, "mse_loss");
  const std::size_t n = target.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = prediction.value()[i] - target[i];
    s += d * d;
  }
  Tensor out({1}, s / static_cast<double>(n));
  if (!needs_graph({&prediction})) return Var(std::move(out));
  return make_result(std::move(out), {prediction}, [target, n](Node& self) {
    Node& p = parent(self, 0);
    Tensor g(p.value.shape());
    const double k = 2.0 * self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = k * (p.value[i] - target[i]);
    p.accumulate(g);
  });
}

Var power_normalize(const Var& x) {
  if (x.value().rank() < 2) throw DimensionError("power_normalize: expected batch tensor");
  const std::size_t batch = x.shape()[0];
  const std::size_t n = x.value().size() / batch;
  Tensor out = x.value();
  std::vector<double> inv_rms(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    double* p = out.data() + b * n;
    double power = 0.0;
    for (std::size_t i = 0; i < n; ++i) power += p[i] * p[i];
    power /= static_cast<double>(n);
    inv_rms[b] = power > 0.0 ? 1.0 / std::sqrt(power) : 0.0;
    for (std::size_t i = 0; i < n; ++i) p[i] *= inv_rms[b];
  }
  if (!needs_graph({&x})) return Var(std::move(out));
  Tensor y = out;
  return make_result(std::move(out), {x}, [batch, n, inv_rms, y](Node& self) {
    Node& p = parent(self, 0);
    Tensor g(p.value.shape());
    for (std::size_t b = 0; b < batch; ++b) {
      const double* gy = self.grad.data() + b * n;
      const double* yb = y.data() + b * n;
      double gy_dot_y = 0.0;
      for (std::size_t i = 0; i < n; ++i) gy_dot_y += gy[i] * yb[i];
      const double c = gy_dot_y / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) g[b * n + i] = inv_rms[b] * (gy[i] - c * yb[i]);
    }
    p.accumulate(g);
  });
}

Var cross_attention(const Var& x, const std::vector<const Tensor*>& embeddings, const Var& wq,
                    const Var& wk, const Var& wv) {
  require_rank(x, 4, "cross_attention");
  require_rank(wq, 2, "cross_attention Wq");
  require_rank(wk, 2, "cross_attention Wk");
  require_rank(wv, 2, "cross_attention Wv");
  const Shape& xs = x.shape();
  const std::size_t batch = xs[0], cq = xs[1], positions = xs[2] * xs[3];
  const std::size_t d = wq.shape()[1], de = wk.shape()[0], dv = wv.shape()[1];
  if (wq.shape()[0] != cq || wk.shape()[1] != d || wv.shape()[0] != de) {
    throw DimensionError("cross_attention: projection shapes are inconsistent");
  }
  if (embeddings.size() != batch) {
    throw DimensionError("cross_attention: one embedding per batch item required");
  }
  auto saved = std::make_shared<std::vector<Tensor>>();
  for (const Tensor* e : embeddings) {
    if (e->rank() != 2 || e->dim(1) != de || e->dim(0) == 0) {
      throw DimensionError("cross_attention: embedding must have shape (T, " +
                           std::to_string(de) + ")");
    }
    saved->push_back(*e);
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  ConstMapMat Wq(wq.value().data(), cq, d), Wk(wk.value().data(), de, d),
      Wv(wv.value().data(), de, dv);

  Tensor out({batch, dv, xs[2], xs[3]});
  auto probs = std::make_shared<std::vector<RowMat>>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor& e = (*saved)[b];
    ConstMapMat E(e.data(), e.dim(0), de);
    RowMat X = ConstMapMat(x.value().data() + b * cq * positions, cq, positions).transpose();
    RowMat Q = X * Wq;
    RowMat K = E * Wk;
    RowMat V = E * Wv;
    RowMat S = (Q * K.transpose()) * inv_sqrt_d;
    for (Eigen::Index r = 0; r < S.rows(); ++r) {
      const double m = S.row(r).maxCoeff();
      S.row(r) = (S.row(r).array() - m).exp();
      S.row(r) /= S.row(r).sum();
    }
    MapMat(out.data() + b * dv * positions, dv, positions) = (S * V).transpose();
    (*probs)[b] = std::move(S);
  }

  if (!needs_graph({&x, &wq, &wk, &wv})) return Var(std::move(out));
  return make_result(std::move(out), {x, wq, wk, wv},
                     [saved, probs, batch, cq, positions, d, de, dv, inv_sqrt_d](Node& self) {
    Node& px = parent(self, 0);
    Node& pq = parent(self, 1);
    Node& pk = parent(self, 2);
    Node& pv = parent(self, 3);
    ConstMapMat Wq(pq.value.data(), cq, d), Wk(pk.value.data(), de, d), Wv(pv.value.data(), de, dv);
    RowMat dWq = RowMat::Zero(cq, d), dWk = RowMat::Zero(de, d), dWv = RowMat::Zero(de, dv);
    Tensor dx(px.value.shape(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const Tensor& e = (*saved)[b];
      ConstMapMat E(e.data(), e.dim(0), de);
      const RowMat& P = (*probs)[b];
      RowMat X = ConstMapMat(px.value.data() + b * cq * positions, cq, positions).transpose();
      RowMat Q = X * Wq;
      RowMat K = E * Wk;
      RowMat V = E * Wv;
      RowMat G = ConstMapMat(self.grad.data() + b * dv * positions, dv, positions).transpose();
      RowMat dP = G * V.transpose();
      RowMat dV = P.transpose() * G;
      Eigen::VectorXd row_dot = (dP.array() * P.array()).rowwise().sum();
      RowMat dS = P.array() * (dP.colwise() - row_dot).array();
      RowMat dQ = dS * K * inv_sqrt_d;
      RowMat dK = dS.transpose() * Q * inv_sqrt_d;
      dWq.noalias() += X.transpose() * dQ;
      dWk.noalias() += E.transpose() * dK;
      dWv.noalias() += E.transpose() * dV;
      MapMat(dx.data() + b * cq * positions, cq, positions) = (dQ * Wq.transpose()).transpose();
    }
    if (px.requires_grad) px.accumulate(dx);
    if (pq.requires_grad) pq.accumulate(Tensor(pq.value.shape(), std::vector<double>(dWq.data(), dWq.data() + dWq.size())));
    if (pk.requires_grad) pk.accumulate(Tensor(pk.value.shape(), std::vector<double>(dWk.data(), dWk.data() + dWk.size())));
    if (pv.requires_grad) pv.accumulate(Tensor(pv.value.shape(), std::vector<double>(dWv.data(), dWv.data() + dWv.size())));
  });
}

}  // namespace semstego::nn
