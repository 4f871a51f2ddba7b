#include "wavec2r/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

#include "wavec2r/errors.hpp"
#include "wavec2r/wavelet.hpp"

namespace wavec2r::ag {

namespace {

thread_local bool t_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ValidationError(std::string(what) + ": expected rank " + std::to_string(rank) +
                          ", got shape " + to_string(t.shape()));
  }
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

double Var::item() const {
  if (node_->value.size() != 1) throw ValidationError("item() on a non-scalar Var");
  return node_->value[0];
}

void Var::backward() const {
  if (node_->value.size() != 1) throw ValidationError("backward() requires a scalar output");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->inputs.size()) {
      Node* child = n->inputs[i++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (t_grad_enabled) {
    bool any = false;
    for (const Var& v : inputs) any = any || v.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const Var& v : inputs) node->inputs.push_back(v.node());
      node->backward = std::move(fn);
    }
  }
  return Var(std::move(node));
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) in->grad_buffer() += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->grad_buffer() += self.grad;
    if (self.inputs[1]->requires_grad) self.inputs[1]->grad_buffer() -= self.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) {
      Tensor& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      Tensor& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v += s;
  return make_op(std::move(out), {a},
                 [](Node& self) { self.inputs[0]->grad_buffer() += self.grad; });
}

Var gelu(const Var& x) {
  Tensor out(x.shape());
  const Tensor& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * std::numbers::sqrt2 / 2.0));
  }
  return make_op(std::move(out), {x}, [](Node& self) {
    Node& xn = *self.inputs[0];
    Tensor& g = xn.grad_buffer();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xn.value[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

// ----------------------------------------------------------------- reductions

Var sum(const Var& x) {
  return make_op(Tensor({1}, x.value().sum()), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const double s = self.grad[0];
    for (double& v : g.values()) v += s;
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var mse(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mse");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const double n = static_cast<double>(av.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  return make_op(Tensor({1}, acc / n), {a, b}, [n](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    const double k = 2.0 * self.grad[0] / n;
    if (x.requires_grad) {
      Tensor& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (x.value[i] - y.value[i]);
    }
    if (y.requires_grad) {
      Tensor& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * (x.value[i] - y.value[i]);
    }
  });
}

// ---------------------------------------------------------------- convolution

namespace {

struct ConvGeometry {
  int n, cin, h, w, cout, k, stride, pad, groups, oh, ow;
  int cin_g() const { return cin / groups; }
  int cout_g() const { return cout / groups; }
  int patch() const { return cin_g() * k * k; }
  int pixels() const { return oh * ow; }
};

// col: (cin_g * k * k, oh * ow) for one sample and group.
void im2col(const ConvGeometry& g, const double* x, double* col) {
  for (int c = 0; c < g.cin_g(); ++c) {
    const double* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = col + (static_cast<std::size_t>((c * g.k + ky) * g.k + kx)) * g.pixels();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + static_cast<std::size_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix < 0 || ix >= g.w) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* col, double* dx) {
  for (int c = 0; c < g.cin_g(); ++c) {
    double* plane = dx + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row =
            col + (static_cast<std::size_t>((c * g.k + ky) * g.k + kx)) * g.pixels();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.ow;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Depthwise 3x3-style kernel (cin_g == cout_g == 1) handled directly; the
// generic GEMM path degenerates badly for one-row weight matrices.
void depthwise_forward(const ConvGeometry& g, const double* x, const double* w, double* out) {
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.cin; ++c) {
      const double* plane = x + (static_cast<std::size_t>(n) * g.cin + c) * g.h * g.w;
      const double* kern = w + static_cast<std::size_t>(c) * g.k * g.k;
      double* o = out + (static_cast<std::size_t>(n) * g.cout + c) * g.pixels();
      for (int oy = 0; oy < g.oh; ++oy) {
        for (int ox = 0; ox < g.ow; ++ox) {
          double acc = 0.0;
          for (int ky = 0; ky < g.k; ++ky) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            for (int kx = 0; kx < g.k; ++kx) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix < 0 || ix >= g.w) continue;
              acc += kern[ky * g.k + kx] * plane[iy * g.w + ix];
            }
          }
          o[oy * g.ow + ox] += acc;
        }
      }
    }
  }
}

void depthwise_backward(const ConvGeometry& g, const double* x, const double* w, const double* gout,
                        double* gx, double* gw) {
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.cin; ++c) {
      const std::size_t in_off = (static_cast<std::size_t>(n) * g.cin + c) * g.h * g.w;
      const double* kern = w + static_cast<std::size_t>(c) * g.k * g.k;
      double* gk = gw ? gw + static_cast<std::size_t>(c) * g.k * g.k : nullptr;
      const double* go = gout + (static_cast<std::size_t>(n) * g.cout + c) * g.pixels();
      for (int oy = 0; oy < g.oh; ++oy) {
        for (int ox = 0; ox < g.ow; ++ox) {
          const double d = go[oy * g.ow + ox];
          for (int ky = 0; ky < g.k; ++ky) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            for (int kx = 0; kx < g.k; ++kx) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix < 0 || ix >= g.w) continue;
              const std::size_t idx = in_off + static_cast<std::size_t>(iy) * g.w + ix;
              if (gx) gx[idx] += d * kern[ky * g.k + kx];
              if (gk) gk[ky * g.k + kx] += d * x[idx];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dOptions opts) {
  require_rank(x.value(), 4, "conv2d input");
  require_rank(weight.value(), 4, "conv2d weight");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = opts.stride;
  g.pad = opts.padding;
  g.groups = opts.groups;
  if (g.groups <= 0 || g.cin % g.groups || g.cout % g.groups || weight.dim(1) != g.cin_g() ||
      weight.dim(3) != g.k) {
    throw ValidationError("conv2d: weight " + to_string(weight.shape()) +
                          " incompatible with input " + to_string(x.shape()));
  }
  g.oh = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  if (g.oh <= 0 || g.ow <= 0) throw ValidationError("conv2d: output would be empty");
  if (bias.defined() && (bias.value().size() != static_cast<std::size_t>(g.cout))) {
    throw ValidationError("conv2d: bias size mismatch");
  }

  Tensor out({g.n, g.cout, g.oh, g.ow});
  const bool depthwise = g.cin_g() == 1 && g.cout_g() == 1;
  if (depthwise) {
    depthwise_forward(g, x.value().data(), weight.value().data(), out.data());
  } else {
    std::vector<double> col(static_cast<std::size_t>(g.patch()) * g.pixels());
    for (int n = 0; n < g.n; ++n) {
      for (int grp = 0; grp < g.groups; ++grp) {
        const double* xin =
            x.value().data() + (static_cast<std::size_t>(n) * g.cin + grp * g.cin_g()) * g.h * g.w;
        im2col(g, xin, col.data());
        ConstMapMat wm(weight.value().data() + static_cast<std::size_t>(grp) * g.cout_g() * g.patch(),
                       g.cout_g(), g.patch());
        ConstMapMat cm(col.data(), g.patch(), g.pixels());
        MapMat om(out.data() + (static_cast<std::size_t>(n) * g.cout + grp * g.cout_g()) * g.pixels(),
                  g.cout_g(), g.pixels());
        om.noalias() = wm * cm;
      }
    }
  }
  if (bias.defined()) {
    for (int n = 0; n < g.n; ++n)
      for (int c = 0; c < g.cout; ++c) {
        double* o = out.data() + (static_cast<std::size_t>(n) * g.cout + c) * g.pixels();
        const double b = bias.value()[c];
        for (int i = 0; i < g.pixels(); ++i) o[i] += b;
      }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(std::move(out), std::move(inputs), [g, depthwise](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    const double* gout = self.grad.data();
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Tensor& gb = self.inputs[2]->grad_buffer();
      for (int n = 0; n < g.n; ++n)
        for (int c = 0; c < g.cout; ++c) {
          const double* go = gout + (static_cast<std::size_t>(n) * g.cout + c) * g.pixels();
          double s = 0.0;
          for (int i = 0; i < g.pixels(); ++i) s += go[i];
          gb[c] += s;
        }
    }
    double* gx = xn.requires_grad ? xn.grad_buffer().data() : nullptr;
    double* gw = wn.requires_grad ? wn.grad_buffer().data() : nullptr;
    if (!gx && !gw) return;
    if (depthwise) {
      depthwise_backward(g, xn.value.data(), wn.value.data(), gout, gx, gw);
      return;
    }
    std::vector<double> col(static_cast<std::size_t>(g.patch()) * g.pixels());
    RowMat dcol(g.patch(), g.pixels());
    for (int n = 0; n < g.n; ++n) {
      for (int grp = 0; grp < g.groups; ++grp) {
        const std::size_t in_off =
            (static_cast<std::size_t>(n) * g.cin + grp * g.cin_g()) * g.h * g.w;
        ConstMapMat gom(gout + (static_cast<std::size_t>(n) * g.cout + grp * g.cout_g()) * g.pixels(),
                        g.cout_g(), g.pixels());
        if (gw) {
          im2col(g, xn.value.data() + in_off, col.data());
          ConstMapMat cm(col.data(), g.patch(), g.pixels());
          MapMat gwm(gw + static_cast<std::size_t>(grp) * g.cout_g() * g.patch(), g.cout_g(),
                     g.patch());
          gwm.noalias() += gom * cm.transpose();
        }
        if (gx) {
          ConstMapMat wm(wn.value.data() + static_cast<std::size_t>(grp) * g.cout_g() * g.patch(),
                         g.cout_g(), g.patch());
          dcol.noalias() = wm.transpose() * gom;
          col2im(g, dcol.data(), gx + in_off);
        }
      }
    }
  });
}

// -------------------------------------------------------------- normalization

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
  require_rank(x.value(), 4, "group_norm");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (groups <= 0 || c % groups) throw ValidationError("group_norm: channels not divisible by groups");
  if (gamma.value().size() != static_cast<std::size_t>(c) ||
      beta.value().size() != static_cast<std::size_t>(c)) {
    throw ValidationError("group_norm: affine parameter size mismatch");
  }
  const int cg = c / groups;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t m = static_cast<std::size_t>(cg) * plane;

  Tensor xhat(x.shape());
  Tensor rstd({n, groups});
  Tensor out(x.shape());
  for (int in = 0; in < n; ++in) {
    for (int gi = 0; gi < groups; ++gi) {
      const std::size_t off = (static_cast<std::size_t>(in) * c + gi * cg) * plane;
      const double* xp = x.value().data() + off;
      double mu = 0.0;
      for (std::size_t i = 0; i < m; ++i) mu += xp[i];
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) var += (xp[i] - mu) * (xp[i] - mu);
      var /= static_cast<double>(m);
      const double r = 1.0 / std::sqrt(var + eps);
      rstd[static_cast<std::size_t>(in) * groups + gi] = r;
      for (int cc = 0; cc < cg; ++cc) {
        const int ch = gi * cg + cc;
        const double ga = gamma.value()[ch], be = beta.value()[ch];
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t idx = off + cc * plane + i;
          const double xh = (x.value()[idx] - mu) * r;
          xhat[idx] = xh;
          out[idx] = xh * ga + be;
        }
      }
    }
  }

  return make_op(std::move(out), {x, gamma, beta},
                 [xhat = std::move(xhat), rstd = std::move(rstd), n, c, groups, cg, plane,
                  m](Node& self) {
    Node& xn = *self.inputs[0];
    Node& gn = *self.inputs[1];
    Node& bn = *self.inputs[2];
    if (gn.requires_grad || bn.requires_grad) {
      for (int in = 0; in < n; ++in)
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t off = (static_cast<std::size_t>(in) * c + ch) * plane;
          double sg = 0.0, sb = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            sg += self.grad[off + i] * xhat[off + i];
            sb += self.grad[off + i];
          }
          if (gn.requires_grad) gn.grad_buffer()[ch] += sg;
          if (bn.requires_grad) bn.grad_buffer()[ch] += sb;
        }
    }
    if (!xn.requires_grad) return;
    Tensor& gx = xn.grad_buffer();
    const double md = static_cast<double>(m);
    for (int in = 0; in < n; ++in) {
      for (int gi = 0; gi < groups; ++gi) {
        const std::size_t off = (static_cast<std::size_t>(in) * c + gi * cg) * plane;
        double s1 = 0.0, s2 = 0.0;
        for (int cc = 0; cc < cg; ++cc) {
          const double ga = gn.value[gi * cg + cc];
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t idx = off + cc * plane + i;
            const double dxh = self.grad[idx] * ga;
            s1 += dxh;
            s2 += dxh * xhat[idx];
          }
        }
        const double r = rstd[static_cast<std::size_t>(in) * groups + gi];
        for (int cc = 0; cc < cg; ++cc) {
          const double ga = gn.value[gi * cg + cc];
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t idx = off + cc * plane + i;
            const double dxh = self.grad[idx] * ga;
            gx[idx] += r / md * (md * dxh - s1 - xhat[idx] * s2);
          }
        }
      }
    }
  });
}

Var add_channel_embedding(const Var& x, const Var& e) {
  require_rank(x.value(), 4, "add_channel_embedding");
  const int n = x.dim(0), c = x.dim(1);
  if (e.value().size() != static_cast<std::size_t>(n) * c) {
    throw ValidationError("add_channel_embedding: embedding " + to_string(e.shape()) +
                          " does not match " + to_string(x.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out = x.value();
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(n) * c; ++nc)
    for (std::size_t i = 0; i < plane; ++i) out[nc * plane + i] += e.value()[nc];
  return make_op(std::move(out), {x, e}, [n, c, plane](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->grad_buffer() += self.grad;
    if (self.inputs[1]->requires_grad) {
      Tensor& ge = self.inputs[1]->grad_buffer();
      for (std::size_t nc = 0; nc < static_cast<std::size_t>(n) * c; ++nc) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += self.grad[nc * plane + i];
        ge[nc] += s;
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(weight.value(), 2, "linear weight");
  const int din = weight.dim(0), dout = weight.dim(1);
  if (x.value().rank() < 1 || x.shape().back() != din) {
    throw ValidationError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                          to_string(weight.shape()));
  }
  const int rows = static_cast<int>(x.value().size() / din);
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor out(out_shape);
  MapMat om(out.data(), rows, dout);
  om.noalias() = ConstMapMat(x.value().data(), rows, din) * ConstMapMat(weight.value().data(), din, dout);
  if (bias.defined()) {
    if (bias.value().size() != static_cast<std::size_t>(dout)) throw ValidationError("linear: bias size");
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < dout; ++j) om(r, j) += bias.value()[j];
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(std::move(out), std::move(inputs), [rows, din, dout](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    ConstMapMat go(self.grad.data(), rows, dout);
    if (xn.requires_grad) {
      MapMat gx(xn.grad_buffer().data(), rows, din);
      gx.noalias() += go * ConstMapMat(wn.value.data(), din, dout).transpose();
    }
    if (wn.requires_grad) {
      MapMat gw(wn.grad_buffer().data(), din, dout);
      gw.noalias() += ConstMapMat(xn.value.data(), rows, din).transpose() * go;
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Tensor& gb = self.inputs[2]->grad_buffer();
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < dout; ++j) gb[j] += go(r, j);
    }
  });
}

// ------------------------------------------------------------ shape plumbing

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_channels: no inputs");
  const Tensor& first = parts[0].value();
  require_rank(first, 4, "concat_channels");
  const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
  int total = 0;
  std::vector<int> widths;
  for (const Var& p : parts) {
    require_rank(p.value(), 4, "concat_channels");
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w) {
      throw ValidationError("concat_channels: incompatible shapes " + to_string(first.shape()) +
                            " and " + to_string(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({n, total, h, w});
  for (int in = 0; in < n; ++in) {
    int offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const double* src = parts[k].value().data() + static_cast<std::size_t>(in) * widths[k] * plane;
      std::copy(src, src + widths[k] * plane,
                out.data() + (static_cast<std::size_t>(in) * total + offset) * plane);
      offset += widths[k];
    }
  }
  return make_op(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                 [n, total, plane, widths](Node& self) {
    for (int in = 0; in < n; ++in) {
      int offset = 0;
      for (std::size_t k = 0; k < self.inputs.size(); ++k) {
        if (self.inputs[k]->requires_grad) {
          double* dst = self.inputs[k]->grad_buffer().data() +
                        static_cast<std::size_t>(in) * widths[k] * plane;
          const double* src = self.grad.data() + (static_cast<std::size_t>(in) * total + offset) * plane;
          for (std::size_t i = 0; i < widths[k] * plane; ++i) dst[i] += src[i];
        }
        offset += widths[k];
      }
    }
  });
}

Var slice_channels(const Var& x, int begin, int count) {
  require_rank(x.value(), 4, "slice_channels");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (begin < 0 || count <= 0 || begin + count > c) {
    throw ValidationError("slice_channels: range out of bounds for " + to_string(x.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({n, count, h, w});
  for (int in = 0; in < n; ++in) {
    const double* src = x.value().data() + (static_cast<std::size_t>(in) * c + begin) * plane;
    std::copy(src, src + count * plane, out.data() + static_cast<std::size_t>(in) * count * plane);
  }
  return make_op(std::move(out), {x}, [n, c, begin, count, plane](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int in = 0; in < n; ++in) {
      double* dst = g.data() + (static_cast<std::size_t>(in) * c + begin) * plane;
      const double* src = self.grad.data() + static_cast<std::size_t>(in) * count * plane;
      for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  require_rank(x.value(), 4, "upsample_nearest2x");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  for (int p = 0; p < n * c; ++p) {
    const double* src = x.value().data() + static_cast<std::size_t>(p) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(p) * 4 * h * w;
    for (int r = 0; r < 2 * h; ++r)
      for (int q = 0; q < 2 * w; ++q) dst[r * 2 * w + q] = src[(r / 2) * w + q / 2];
  }
  return make_op(std::move(out), {x}, [n, c, h, w](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int p = 0; p < n * c; ++p) {
      double* dst = g.data() + static_cast<std::size_t>(p) * h * w;
      const double* src = self.grad.data() + static_cast<std::size_t>(p) * 4 * h * w;
      for (int r = 0; r < 2 * h; ++r)
        for (int q = 0; q < 2 * w; ++q) dst[(r / 2) * w + q / 2] += src[r * 2 * w + q];
    }
  });
}

// -------------------------------------------------------------------- wavelet

namespace {

// Band-major packing: out channel (b * C + c) holds band b of input channel c.
void dwt_planes(const double* in, double* out, int n, int c, int h, int w) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t half = plane / 4;
  for (int in_n = 0; in_n < n; ++in_n) {
    for (int ch = 0; ch < c; ++ch) {
      const double* src = in + (static_cast<std::size_t>(in_n) * c + ch) * plane;
      double* base = out + static_cast<std::size_t>(in_n) * 4 * c * half;
      auto band = [&](int b) { return std::span<double>(base + (static_cast<std::size_t>(b) * c + ch) * half, half); };
      wavelet::haar_forward<double>(std::span<const double>(src, plane), h, w, band(0), band(1),
                                    band(2), band(3));
    }
  }
}

void idwt_planes(const double* in, double* out, int n, int c, int h, int w) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t half = plane / 4;
  for (int in_n = 0; in_n < n; ++in_n) {
    for (int ch = 0; ch < c; ++ch) {
      const double* base = in + static_cast<std::size_t>(in_n) * 4 * c * half;
      auto band = [&](int b) {
        return std::span<const double>(base + (static_cast<std::size_t>(b) * c + ch) * half, half);
      };
      double* dst = out + (static_cast<std::size_t>(in_n) * c + ch) * plane;
      wavelet::haar_inverse<double>(band(0), band(1), band(2), band(3), h, w,
                                    std::span<double>(dst, plane));
    }
  }
}

}  // namespace

Var dwt2(const Var& x) {
  require_rank(x.value(), 4, "dwt2");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) {
    throw ValidationError("dwt2: spatial dimensions must be even, got " + to_string(x.shape()));
  }
  Tensor out({n, 4 * c, h / 2, w / 2});
  dwt_planes(x.value().data(), out.data(), n, c, h, w);
  // Orthonormal: the adjoint is the inverse.
  return make_op(std::move(out), {x}, [n, c, h, w](Node& self) {
    Tensor back({n, c, h, w});
    idwt_planes(self.grad.data(), back.data(), n, c, h, w);
    self.inputs[0]->grad_buffer() += back;
  });
}

Var idwt2(const Var& bands) {
  require_rank(bands.value(), 4, "idwt2");
  if (bands.dim(1) % 4) throw ValidationError("idwt2: channel count must be a multiple of 4");
  const int n = bands.dim(0), c = bands.dim(1) / 4, h = 2 * bands.dim(2), w = 2 * bands.dim(3);
  Tensor out({n, c, h, w});
  idwt_planes(bands.value().data(), out.data(), n, c, h, w);
  return make_op(std::move(out), {bands}, [n, c, h, w](Node& self) {
    Tensor back({n, 4 * c, h / 2, w / 2});
    dwt_planes(self.grad.data(), back.data(), n, c, h, w);
    self.inputs[0]->grad_buffer() += back;
  });
}

// ------------------------------------------------------------------ attention

namespace {

// Visits every (nchw index, token index) pair of a window partition.
template <typename F>
void for_each_window_element(int n, int c, int h, int w, int wh, int ww, F&& f) {
  const int nwy = h / wh, nwx = w / ww;
  const int tokens = wh * ww;
  for (int in = 0; in < n; ++in)
    for (int wy = 0; wy < nwy; ++wy)
      for (int wx = 0; wx < nwx; ++wx) {
        const std::size_t b = (static_cast<std::size_t>(in) * nwy + wy) * nwx + wx;
        for (int ty = 0; ty < wh; ++ty)
          for (int tx = 0; tx < ww; ++tx) {
            const int t = ty * ww + tx;
            const int y = wy * wh + ty, xx = wx * ww + tx;
            for (int ch = 0; ch < c; ++ch) {
              const std::size_t src = ((static_cast<std::size_t>(in) * c + ch) * h + y) * w + xx;
              const std::size_t dst = (b * tokens + t) * c + ch;
              f(src, dst);
            }
          }
      }
}

}  // namespace

Var window_partition(const Var& x, int wh, int ww) {
  require_rank(x.value(), 4, "window_partition");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (wh <= 0 || ww <= 0 || h % wh || w % ww) {
    throw ValidationError("window_partition: " + std::to_string(h) + "x" + std::to_string(w) +
                          " not divisible by window " + std::to_string(wh) + "x" +
                          std::to_string(ww));
  }
  Tensor out({n * (h / wh) * (w / ww), wh * ww, c});
  for_each_window_element(n, c, h, w, wh, ww,
                          [&](std::size_t s, std::size_t d) { out[d] = x.value()[s]; });
  return make_op(std::move(out), {x}, [n, c, h, w, wh, ww](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for_each_window_element(n, c, h, w, wh, ww,
                            [&](std::size_t s, std::size_t d) { g[s] += self.grad[d]; });
  });
}

Var window_merge(const Var& tokens, const Shape& nchw, int wh, int ww) {
  if (nchw.size() != 4) throw ValidationError("window_merge: target shape must be NCHW");
  const int n = nchw[0], c = nchw[1], h = nchw[2], w = nchw[3];
  if (wh <= 0 || ww <= 0 || h % wh || w % ww) throw ValidationError("window_merge: bad window");
  const Shape expected{n * (h / wh) * (w / ww), wh * ww, c};
  if (tokens.shape() != expected) {
    throw ValidationError("window_merge: tokens " + to_string(tokens.shape()) + " expected " +
                          to_string(expected));
  }
  Tensor out(nchw);
  for_each_window_element(n, c, h, w, wh, ww,
                          [&](std::size_t s, std::size_t d) { out[s] = tokens.value()[d]; });
  return make_op(std::move(out), {tokens}, [n, c, h, w, wh, ww](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for_each_window_element(n, c, h, w, wh, ww,
                            [&](std::size_t s, std::size_t d) { g[d] += self.grad[s]; });
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, AttentionProbe* probe) {
  require_rank(q.value(), 3, "attention query");
  require_rank(k.value(), 3, "attention key");
  require_rank(v.value(), 3, "attention value");
  const int b = q.dim(0), t = q.dim(1), c = q.dim(2), s = k.dim(1);
  if (k.dim(0) != b || v.dim(0) != b || k.dim(2) != c || v.shape() != k.shape()) {
    throw ValidationError("attention: incompatible q/k/v shapes");
  }
  if (heads <= 0 || c % heads) throw ValidationError("attention: channels not divisible by heads");
  const int d = c / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  using Stride = Eigen::Stride<Eigen::Dynamic, 1>;
  using StridedMap = Eigen::Map<RowMat, 0, Stride>;
  using ConstStridedMap = Eigen::Map<const RowMat, 0, Stride>;

  Tensor out({b, t, c});
  Tensor weights({b, heads, t, s});
  for (int ib = 0; ib < b; ++ib) {
    for (int hd = 0; hd < heads; ++hd) {
      ConstStridedMap qm(q.value().data() + static_cast<std::size_t>(ib) * t * c + hd * d, t, d, Stride(c, 1));
      ConstStridedMap km(k.value().data() + static_cast<std::size_t>(ib) * s * c + hd * d, s, d, Stride(c, 1));
      ConstStridedMap vm(v.value().data() + static_cast<std::size_t>(ib) * s * c + hd * d, s, d, Stride(c, 1));
      MapMat pm(weights.data() + (static_cast<std::size_t>(ib) * heads + hd) * t * s, t, s);
      pm.noalias() = (qm * km.transpose()) * inv_sqrt_d;
      for (int r = 0; r < t; ++r) {
        const double mx = pm.row(r).maxCoeff();
        pm.row(r) = (pm.row(r).array() - mx).exp();
        pm.row(r) /= pm.row(r).sum();
      }
      StridedMap om(out.data() + static_cast<std::size_t>(ib) * t * c + hd * d, t, d, Stride(c, 1));
      om.noalias() = pm * vm;
    }
  }
  if (probe) probe->weights = weights;

  return make_op(std::move(out), {q, k, v},
                 [weights = std::move(weights), b, t, s, c, heads, d, inv_sqrt_d](Node& self) {
    Node& qn = *self.inputs[0];
    Node& kn = *self.inputs[1];
    Node& vn = *self.inputs[2];
    double* gq = qn.requires_grad ? qn.grad_buffer().data() : nullptr;
    double* gk = kn.requires_grad ? kn.grad_buffer().data() : nullptr;
    double* gv = vn.requires_grad ? vn.grad_buffer().data() : nullptr;
    RowMat dp(t, s);
    for (int ib = 0; ib < b; ++ib) {
      for (int hd = 0; hd < heads; ++hd) {
        const std::size_t qoff = static_cast<std::size_t>(ib) * t * c + hd * d;
        const std::size_t koff = static_cast<std::size_t>(ib) * s * c + hd * d;
        ConstStridedMap go(self.grad.data() + qoff, t, d, Stride(c, 1));
        ConstStridedMap qm(qn.value.data() + qoff, t, d, Stride(c, 1));
        ConstStridedMap km(kn.value.data() + koff, s, d, Stride(c, 1));
        ConstStridedMap vm(vn.value.data() + koff, s, d, Stride(c, 1));
        ConstMapMat pm(weights.data() + (static_cast<std::size_t>(ib) * heads + hd) * t * s, t, s);
        if (gv) {
          StridedMap gvm(gv + koff, s, d, Stride(c, 1));
          gvm.noalias() += pm.transpose() * go;
        }
        if (!gq && !gk) continue;
        dp.noalias() = go * vm.transpose();
        for (int r = 0; r < t; ++r) {
          const double dot = dp.row(r).dot(pm.row(r));
          dp.row(r) = pm.row(r).array() * (dp.row(r).array() - dot);
        }
        if (gq) {
          StridedMap gqm(gq + qoff, t, d, Stride(c, 1));
          gqm.noalias() += (dp * km) * inv_sqrt_d;
        }
        if (gk) {
          StridedMap gkm(gk + koff, s, d, Stride(c, 1));
          gkm.noalias() += (dp.transpose() * qm) * inv_sqrt_d;
        }
      }
    }
  });
}

}  // namespace wavec2r::ag
