#include "relict/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "relict/core/error.hpp"

namespace relict::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require(bool ok, const char* what) {
  if (!ok) throw Error(what);
}

struct ConvGeometry {
  int n, cin, h, w;
  int cout, kh, kw;
  int stride, pad;
  int ho, wo;
  int rows() const { return cin * kh * kw; }
  long cols() const { return static_cast<long>(n) * ho * wo; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const long L = g.cols();
  const int hw_out = g.ho * g.wo;
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        double* row = cols + static_cast<long>((ci * g.kh + ki) * g.kw + kj) * L;
        for (int n = 0; n < g.n; ++n) {
          const double* plane = x + (static_cast<long>(n) * g.cin + ci) * g.h * g.w;
          double* out = row + static_cast<long>(n) * hw_out;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ki;
            double* orow = out + oy * g.wo;
            if (iy < 0 || iy >= g.h) {
              std::fill(orow, orow + g.wo, 0.0);
              continue;
            }
            const double* irow = plane + iy * g.w;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kj;
              orow[ox] = (ix >= 0 && ix < g.w) ? irow[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* dx) {
  const long L = g.cols();
  const int hw_out = g.ho * g.wo;
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + static_cast<long>((ci * g.kh + ki) * g.kw + kj) * L;
        for (int n = 0; n < g.n; ++n) {
          double* plane = dx + (static_cast<long>(n) * g.cin + ci) * g.h * g.w;
          const double* in = row + static_cast<long>(n) * hw_out;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ki;
            if (iy < 0 || iy >= g.h) continue;
            const double* grow = in + oy * g.wo;
            double* drow = plane + iy * g.w;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kj;
              if (ix >= 0 && ix < g.w) drow[ix] += grow[ox];
            }
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  require(xs.c == ws.c, "conv2d: input channels do not match weight");
  require(stride >= 1 && pad >= 0, "conv2d: invalid stride/pad");
  ConvGeometry g{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, ws.w, stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
  require(g.ho >= 1 && g.wo >= 1, "conv2d: kernel larger than padded input");
  if (bias) require(bias->value.numel() == static_cast<std::size_t>(g.cout), "conv2d: bias size");

  const long L = g.cols();
  const int K = g.rows();
  const int hw_out = g.ho * g.wo;
  const int hw_in = g.h * g.w;

  std::vector<double> cols(static_cast<std::size_t>(K) * L);
  if (is_pointwise(g)) {
    for (int ci = 0; ci < g.cin; ++ci)
      for (int n = 0; n < g.n; ++n)
        std::memcpy(cols.data() + static_cast<long>(ci) * L + static_cast<long>(n) * hw_in,
                    x->value.data() + (static_cast<long>(n) * g.cin + ci) * hw_in,
                    sizeof(double) * hw_in);
  } else {
    im2col(x->value.data(), g, cols.data());
  }

  RowMat out_mat = ConstMatMap(weight->value.data(), g.cout, K) * ConstMatMap(cols.data(), K, L);
  Tensor out(Shape{g.n, g.cout, g.ho, g.wo});
  for (int co = 0; co < g.cout; ++co) {
    const double b = bias ? bias->value.data()[co] : 0.0;
    for (int n = 0; n < g.n; ++n) {
      const double* src = out_mat.data() + static_cast<long>(co) * L + static_cast<long>(n) * hw_out;
      double* dst = out.data() + (static_cast<long>(n) * g.cout + co) * hw_out;
      for (int p = 0; p < hw_out; ++p) dst[p] = src[p] + b;
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs),
                     [g, cols = std::move(cols), has_bias = bool(bias)](Node& self) {
    const long L = g.cols();
    const int K = g.rows();
    const int hw_out = g.ho * g.wo;
    RowMat dout(g.cout, L);
    for (int co = 0; co < g.cout; ++co)
      for (int n = 0; n < g.n; ++n)
        std::memcpy(dout.data() + static_cast<long>(co) * L + static_cast<long>(n) * hw_out,
                    self.grad.data() + (static_cast<long>(n) * g.cout + co) * hw_out,
                    sizeof(double) * hw_out);

    Node& xin = *self.inputs[0];
    Node& win = *self.inputs[1];
    if (win.requires_grad) {
      MatMap dw(win.grad_buffer().data(), g.cout, K);
      dw.noalias() += dout * ConstMatMap(cols.data(), K, L).transpose();
    }
    if (has_bias && self.inputs[2]->requires_grad) {
      double* db = self.inputs[2]->grad_buffer().data();
      for (int co = 0; co < g.cout; ++co) db[co] += dout.row(co).sum();
    }
    if (xin.requires_grad) {
      RowMat dcols = ConstMatMap(win.value.data(), g.cout, K).transpose() * dout;
      double* dx = xin.grad_buffer().data();
      if (is_pointwise(g)) {
        const int hw_in = g.h * g.w;
        for (int ci = 0; ci < g.cin; ++ci)
          for (int n = 0; n < g.n; ++n) {
            const double* src = dcols.data() + static_cast<long>(ci) * L + static_cast<long>(n) * hw_in;
            double* dst = dx + (static_cast<long>(n) * g.cin + ci) * hw_in;
            for (int p = 0; p < hw_in; ++p) dst[p] += src[p];
          }
      } else {
        col2im(dcols.data(), g, dx);
      }
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool training, double momentum, double eps) {
  const Shape s = x->value.shape();
  const int C = s.c;
  require(gamma->value.numel() == static_cast<std::size_t>(C) &&
              beta->value.numel() == static_cast<std::size_t>(C) &&
              running_mean.numel() == static_cast<std::size_t>(C) &&
              running_var.numel() == static_cast<std::size_t>(C),
          "batch_norm: parameter size does not match channels");
  const long hw = static_cast<long>(s.plane());
  const long M = hw * s.n;
  const double* xv = x->value.data();

  std::vector<double> mean(C), invstd(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double sum = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = xv + (static_cast<long>(n) * C + c) * hw;
        for (long i = 0; i < hw; ++i) sum += p[i];
      }
      const double mu = sum / M;
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = xv + (static_cast<long>(n) * C + c) * hw;
        for (long i = 0; i < hw; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / M;
      mean[c] = mu;
      invstd[c] = 1.0 / std::sqrt(var + eps);
      const double unbiased = M > 1 ? sq / (M - 1) : var;
      running_mean.data()[c] = (1.0 - momentum) * running_mean.data()[c] + momentum * mu;
      running_var.data()[c] = (1.0 - momentum) * running_var.data()[c] + momentum * unbiased;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean.data()[c];
      invstd[c] = 1.0 / std::sqrt(running_var.data()[c] + eps);
    }
  }

  Tensor xhat(s);
  Tensor out(s);
  const double* g = gamma->value.data();
  const double* b = beta->value.data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < C; ++c) {
      const long off = (static_cast<long>(n) * C + c) * hw;
      for (long i = 0; i < hw; ++i) {
        const double xh = (xv[off + i] - mean[c]) * invstd[c];
        xhat.data()[off + i] = xh;
        out.data()[off + i] = g[c] * xh + b[c];
      }
    }

  return make_result(std::move(out), {x, gamma, beta},
                     [s, training, invstd = std::move(invstd), xhat = std::move(xhat)](Node& self) {
    const int C = s.c;
    const long hw = static_cast<long>(s.plane());
    const long M = hw * s.n;
    const double* dy = self.grad.data();
    const double* xh = xhat.data();
    std::vector<double> sum_dy(C, 0.0), sum_dy_xh(C, 0.0);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < C; ++c) {
        const long off = (static_cast<long>(n) * C + c) * hw;
        for (long i = 0; i < hw; ++i) {
          sum_dy[c] += dy[off + i];
          sum_dy_xh[c] += dy[off + i] * xh[off + i];
        }
      }
    Node& xin = *self.inputs[0];
    Node& gin = *self.inputs[1];
    Node& bin = *self.inputs[2];
    if (gin.requires_grad)
      for (int c = 0; c < C; ++c) gin.grad_buffer().data()[c] += sum_dy_xh[c];
    if (bin.requires_grad)
      for (int c = 0; c < C; ++c) bin.grad_buffer().data()[c] += sum_dy[c];
    if (!xin.requires_grad) return;
    const double* g = gin.value.data();
    double* dx = xin.grad_buffer().data();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < C; ++c) {
        const long off = (static_cast<long>(n) * C + c) * hw;
        const double k = g[c] * invstd[c];
        if (training) {
          const double mdy = sum_dy[c] / M;
          const double mdyx = sum_dy_xh[c] / M;
          for (long i = 0; i < hw; ++i) dx[off + i] += k * (dy[off + i] - mdy - xh[off + i] * mdyx);
        } else {
          for (long i = 0; i < hw; ++i) dx[off + i] += k * dy[off + i];
        }
      }
  });
}

Var relu(const Var& x) {
  Tensor out(x->value.shape());
  const double* xv = x->value.data();
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& xin = *self.inputs[0];
    const double* xv = xin.value.data();
    double* dx = xin.grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i)
      if (xv[i] > 0.0) dx[i] += self.grad.data()[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double z = x.data()[i];
    if (z >= 0) {
      out.data()[i] = 1.0 / (1.0 + std::exp(-z));
    } else {
      const double e = std::exp(z);
      out.data()[i] = e / (1.0 + e);
    }
  }
  return out;
}

Var sigmoid(const Var& x) {
  Tensor out = sigmoid(x->value);
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& xin = *self.inputs[0];
    double* dx = xin.grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      const double y = self.value.data()[i];
      dx[i] += self.grad.data()[i] * y * (1.0 - y);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(a->value.shape() == b->value.shape(), "add: shape mismatch");
  Tensor out = a->value;
  out.add_(b->value);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) in->grad_buffer().add_(self.grad);
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_channels: no inputs");
  Shape s = xs[0]->value.shape();
  int total = 0;
  for (const auto& v : xs) {
    const Shape& vs = v->value.shape();
    require(vs.n == s.n && vs.h == s.h && vs.w == s.w, "concat_channels: spatial/batch mismatch");
    total += vs.c;
  }
  const long hw = static_cast<long>(s.plane());
  Tensor out(Shape{s.n, total, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    int offset = 0;
    for (const auto& v : xs) {
      const int c = v->value.shape().c;
      std::memcpy(out.data() + (static_cast<long>(n) * total + offset) * hw,
                  v->value.data() + static_cast<long>(n) * c * hw, sizeof(double) * c * hw);
      offset += c;
    }
  }
  return make_result(std::move(out), xs, [total](Node& self) {
    const Shape s = self.value.shape();
    const long hw = static_cast<long>(s.plane());
    int offset = 0;
    for (auto& in : self.inputs) {
      const int c = in->value.shape().c;
      if (in->requires_grad) {
        double* dx = in->grad_buffer().data();
        for (int n = 0; n < s.n; ++n) {
          const double* src = self.grad.data() + (static_cast<long>(n) * total + offset) * hw;
          double* dst = dx + static_cast<long>(n) * c * hw;
          for (long i = 0; i < c * hw; ++i) dst[i] += src[i];
        }
      }
      offset += c;
    }
  });
}

Var max_pool2d(const Var& x, int kernel, int stride, int pad) {
  const Shape s = x->value.shape();
  const int ho = (s.h + 2 * pad - kernel) / stride + 1;
  const int wo = (s.w + 2 * pad - kernel) / stride + 1;
  require(ho >= 1 && wo >= 1, "max_pool2d: output would be empty");
  Tensor out(Shape{s.n, s.c, ho, wo});
  std::vector<long> argmax(out.numel());
  const double* xv = x->value.data();
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const long in_off = static_cast<long>(nc) * s.h * s.w;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        long best_idx = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= s.h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= s.w) continue;
            const long idx = in_off + iy * s.w + ix;
            if (xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
            }
          }
        }
        const long o = (static_cast<long>(nc) * ho + oy) * wo + ox;
        out.data()[o] = best;
        argmax[o] = best_idx;
      }
  }
  return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    double* dx = self.inputs[0]->grad_buffer().data();
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += self.grad.data()[o];
  });
}

Var avg_pool2d(const Var& x, int kernel) {
  const Shape s = x->value.shape();
  const int ho = s.h / kernel;
  const int wo = s.w / kernel;
  require(ho >= 1 && wo >= 1, "avg_pool2d: output would be empty");
  Tensor out(Shape{s.n, s.c, ho, wo});
  const double scale = 1.0 / (kernel * kernel);
  const double* xv = x->value.data();
  for (int nc = 0; nc < s.n * s.c; ++nc)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double sum = 0.0;
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx)
            sum += xv[(static_cast<long>(nc) * s.h + oy * kernel + ky) * s.w + ox * kernel + kx];
        out.data()[(static_cast<long>(nc) * ho + oy) * wo + ox] = sum * scale;
      }
  return make_result(std::move(out), {x}, [kernel, scale](Node& self) {
    const Shape s = self.inputs[0]->value.shape();
    const Shape o = self.value.shape();
    double* dx = self.inputs[0]->grad_buffer().data();
    for (int nc = 0; nc < o.n * o.c; ++nc)
      for (int oy = 0; oy < o.h; ++oy)
        for (int ox = 0; ox < o.w; ++ox) {
          const double g = self.grad.data()[(static_cast<long>(nc) * o.h + oy) * o.w + ox] * scale;
          for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx)
              dx[(static_cast<long>(nc) * s.h + oy * kernel + ky) * s.w + ox * kernel + kx] += g;
        }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x->value.shape();
  const long hw = static_cast<long>(s.plane());
  Tensor out(Shape{s.n, s.c, 1, 1});
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    double sum = 0.0;
    for (long i = 0; i < hw; ++i) sum += x->value.data()[nc * hw + i];
    out.data()[nc] = sum / hw;
  }
  return make_result(std::move(out), {x}, [hw](Node& self) {
    double* dx = self.inputs[0]->grad_buffer().data();
    for (std::size_t nc = 0; nc < self.grad.numel(); ++nc) {
      const double g = self.grad.data()[nc] / hw;
      for (long i = 0; i < hw; ++i) dx[nc * hw + i] += g;
    }
  });
}

Var upsample_nearest(const Var& x, int factor) {
  const Shape s = x->value.shape();
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};
  Tensor out(os);
  for (int nc = 0; nc < s.n * s.c; ++nc)
    for (int y = 0; y < os.h; ++y)
      for (int xo = 0; xo < os.w; ++xo)
        out.data()[(static_cast<long>(nc) * os.h + y) * os.w + xo] =
            x->value.data()[(static_cast<long>(nc) * s.h + y / factor) * s.w + xo / factor];
  return make_result(std::move(out), {x}, [factor](Node& self) {
    const Shape s = self.inputs[0]->value.shape();
    const Shape os = self.value.shape();
    double* dx = self.inputs[0]->grad_buffer().data();
    for (int nc = 0; nc < s.n * s.c; ++nc)
      for (int y = 0; y < os.h; ++y)
        for (int xo = 0; xo < os.w; ++xo)
          dx[(static_cast<long>(nc) * s.h + y / factor) * s.w + xo / factor] +=
              self.grad.data()[(static_cast<long>(nc) * os.h + y) * os.w + xo];
  });
}

namespace {

struct LerpTap {
  int i0, i1;
  double w1;
};

std::vector<LerpTap> lerp_taps(int in, int factor) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(in) * factor);
  for (int o = 0; o < in * factor; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

Var upsample_bilinear(const Var& x, int factor) {
  const Shape s = x->value.shape();
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};
  auto ty = lerp_taps(s.h, factor);
  auto tx = lerp_taps(s.w, factor);
  Tensor out(os);
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* p = x->value.data() + static_cast<long>(nc) * s.h * s.w;
    for (int y = 0; y < os.h; ++y) {
      const auto& a = ty[y];
      for (int xo = 0; xo < os.w; ++xo) {
        const auto& b = tx[xo];
        const double top = p[a.i0 * s.w + b.i0] * (1 - b.w1) + p[a.i0 * s.w + b.i1] * b.w1;
        const double bot = p[a.i1 * s.w + b.i0] * (1 - b.w1) + p[a.i1 * s.w + b.i1] * b.w1;
        out.data()[(static_cast<long>(nc) * os.h + y) * os.w + xo] = top * (1 - a.w1) + bot * a.w1;
      }
    }
  }
  return make_result(std::move(out), {x}, [ty = std::move(ty), tx = std::move(tx)](Node& self) {
    const Shape s = self.inputs[0]->value.shape();
    const Shape os = self.value.shape();
    double* dx = self.inputs[0]->grad_buffer().data();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      double* p = dx + static_cast<long>(nc) * s.h * s.w;
      for (int y = 0; y < os.h; ++y) {
        const auto& a = ty[y];
        for (int xo = 0; xo < os.w; ++xo) {
          const auto& b = tx[xo];
          const double g = self.grad.data()[(static_cast<long>(nc) * os.h + y) * os.w + xo];
          p[a.i0 * s.w + b.i0] += g * (1 - a.w1) * (1 - b.w1);
          p[a.i0 * s.w + b.i1] += g * (1 - a.w1) * b.w1;
          p[a.i1 * s.w + b.i0] += g * a.w1 * (1 - b.w1);
          p[a.i1 * s.w + b.i1] += g * a.w1 * b.w1;
        }
      }
    }
  });
}

Var bce_with_logits(const Var& logits, const Tensor& targets, const Tensor& weights) {
  require(targets.shape() == logits->value.shape(), "bce_with_logits: target shape mismatch");
  require(weights.empty() || weights.shape() == targets.shape(),
          "bce_with_logits: weight shape mismatch");
  const std::size_t count = targets.numel();
  double wsum = 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double w = weights.empty() ? 1.0 : weights.data()[i];
    if (w == 0.0) continue;
    const double z = logits->value.data()[i];
    const double t = targets.data()[i];
    loss += w * (std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z))));
    wsum += w;
  }
  const double norm = wsum > 0 ? 1.0 / wsum : 0.0;
  Tensor out(Shape{1, 1, 1, 1}, loss * norm);
  return make_result(std::move(out), {logits}, [targets, weights, norm](Node& self) {
    const double g = self.grad.data()[0] * norm;
    Node& zin = *self.inputs[0];
    const Tensor p = sigmoid(zin.value);
    double* dz = zin.grad_buffer().data();
    for (std::size_t i = 0; i < targets.numel(); ++i) {
      const double w = weights.empty() ? 1.0 : weights.data()[i];
      dz[i] += g * w * (p.data()[i] - targets.data()[i]);
    }
  });
}

Tensor softmax(const Tensor& logits) {
  const Shape s = logits.shape();
  const int K = s.c * s.h * s.w;
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    const double* z = logits.data() + static_cast<long>(n) * K;
    double* p = out.data() + static_cast<long>(n) * K;
    const double zmax = *std::max_element(z, z + K);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += (p[k] = std::exp(z[k] - zmax));
    for (int k = 0; k < K; ++k) p[k] /= sum;
  }
  return out;
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const Shape s = logits->value.shape();
  const int K = s.c * s.h * s.w;
  require(labels.size() == static_cast<std::size_t>(s.n), "softmax_cross_entropy: label count");
  Tensor probs = softmax(logits->value);
  double loss = 0.0;
  for (int n = 0; n < s.n; ++n) {
    require(labels[n] >= 0 && labels[n] < K, "softmax_cross_entropy: label out of range");
    const double* z = logits->value.data() + static_cast<long>(n) * K;
    const double zmax = *std::max_element(z, z + K);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += std::exp(z[k] - zmax);
    loss += -(z[labels[n]] - zmax - std::log(sum));
  }
  Tensor out(Shape{1, 1, 1, 1}, loss / s.n);
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result(std::move(out), {logits},
                     [probs = std::move(probs), lab = std::move(lab), K](Node& self) {
    const double g = self.grad.data()[0] / static_cast<double>(lab.size());
    double* dz = self.inputs[0]->grad_buffer().data();
    for (std::size_t n = 0; n < lab.size(); ++n)
      for (int k = 0; k < K; ++k) {
        const double onehot = (k == lab[n]) ? 1.0 : 0.0;
        dz[n * K + k] += g * (probs.data()[n * K + k] - onehot);
      }
  });
}

}  // namespace relict::nn
