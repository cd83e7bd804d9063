#include "metaseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace metaseg {
namespace ops {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  std::ostringstream os;
  os << op << ": " << detail;
  throw ShapeError(os.str());
}

void require_matrix(const char* op, const Tensor& w, int rows) {
  if (w.n != 1 || w.c != 1) shape_fail(op, "weight must be a {1,1,r,c} matrix, got " + w.shape_str());
  if (w.rows() != rows) {
    std::ostringstream os;
    os << "weight input dim " << w.rows() << " does not match channel dim " << rows;
    shape_fail(op, os.str());
  }
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b) {
  require_matrix("linear", w, x.c);
  const int d = w.cols();
  if (b != nullptr && (b->n != 1 || b->c != 1 || b->h != 1 || b->w != d)) {
    shape_fail("linear", "bias must be {1,1,1," + std::to_string(d) + "}, got " + b->shape_str());
  }
  Tensor out(x.n, d, x.h, x.w);
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  for (int in = 0; in < x.n; ++in) {
    double* ob = &out.at(in, 0, 0, 0);
    if (b != nullptr) {
      for (int od = 0; od < d; ++od) {
        std::fill(ob + od * plane, ob + (od + 1) * plane, b->data[od]);
      }
    }
    const double* xb = &x.at(in, 0, 0, 0);
    for (int ic = 0; ic < x.c; ++ic) {
      const double* xp = xb + ic * plane;
      for (int od = 0; od < d; ++od) {
        const double wv = w.m(ic, od);
        if (wv == 0.0) continue;
        double* op = ob + od * plane;
        for (std::size_t p = 0; p < plane; ++p) op[p] += xp[p] * wv;
      }
    }
  }
  return out;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx,
                     Tensor* dw, Tensor* db) {
  const int d = w.cols();
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  for (int in = 0; in < x.n; ++in) {
    const double* xb = &x.at(in, 0, 0, 0);
    const double* gb = &dy.at(in, 0, 0, 0);
    if (db != nullptr) {
      for (int od = 0; od < d; ++od) {
        const double* gp = gb + od * plane;
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += gp[p];
        db->data[od] += acc;
      }
    }
    for (int ic = 0; ic < x.c; ++ic) {
      const double* xp = xb + ic * plane;
      double* dxp = dx != nullptr ? &dx->at(in, ic, 0, 0) : nullptr;
      for (int od = 0; od < d; ++od) {
        const double* gp = gb + od * plane;
        const double wv = w.m(ic, od);
        double wacc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
          wacc += xp[p] * gp[p];
          if (dxp != nullptr) dxp[p] += gp[p] * wv;
        }
        if (dw != nullptr) dw->m(ic, od) += wacc;
      }
    }
  }
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad,
              int groups) {
  if (stride < 1 || pad < 0 || groups < 1) shape_fail("conv2d", "invalid stride/pad/groups");
  if (w.h != w.w) shape_fail("conv2d", "kernel must be square, got " + w.shape_str());
  const int k = w.h;
  if (x.c % groups != 0 || w.n % groups != 0) {
    shape_fail("conv2d", "channels not divisible by groups");
  }
  const int icg = x.c / groups;
  if (w.c != icg) {
    shape_fail("conv2d", "weight " + w.shape_str() + " expects " + std::to_string(w.c * groups) +
                             " input channels, input has " + std::to_string(x.c));
  }
  const int oc = w.n;
  const int ocg = oc / groups;
  const int oh = (x.h + 2 * pad - k) / stride + 1;
  const int ow = (x.w + 2 * pad - k) / stride + 1;
  if (x.h + 2 * pad < k || x.w + 2 * pad < k || oh < 1 || ow < 1) {
    shape_fail("conv2d", "kernel " + std::to_string(k) + " does not fit input " + x.shape_str());
  }
  if (b != nullptr && (b->n != 1 || b->c != 1 || b->h != 1 || b->w != oc)) {
    shape_fail("conv2d", "bias must be {1,1,1," + std::to_string(oc) + "}");
  }
  Tensor out(x.n, oc, oh, ow);
  for (int in = 0; in < x.n; ++in) {
    for (int g = 0; g < groups; ++g) {
      for (int ocr = 0; ocr < ocg; ++ocr) {
        const int o = g * ocg + ocr;
        const double bias = b != nullptr ? b->data[o] : 0.0;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            double acc = bias;
            for (int icr = 0; icr < icg; ++icr) {
              const int ic = g * icg + icr;
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= x.h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= x.w) continue;
                  acc += x.at(in, ic, iy, ix) * w.at(o, icr, ky, kx);
                }
              }
            }
            out.at(in, o, oy, ox) = acc;
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, int stride, int pad,
                     int groups, Tensor* dx, Tensor* dw, Tensor* db) {
  const int k = w.h;
  const int icg = x.c / groups;
  const int ocg = w.n / groups;
  for (int in = 0; in < x.n; ++in) {
    for (int g = 0; g < groups; ++g) {
      for (int ocr = 0; ocr < ocg; ++ocr) {
        const int o = g * ocg + ocr;
        for (int oy = 0; oy < dy.h; ++oy) {
          for (int ox = 0; ox < dy.w; ++ox) {
            const double gv = dy.at(in, o, oy, ox);
            if (db != nullptr) db->data[o] += gv;
            if (gv == 0.0) continue;
            for (int icr = 0; icr < icg; ++icr) {
              const int ic = g * icg + icr;
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= x.h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= x.w) continue;
                  if (dx != nullptr) dx->at(in, ic, iy, ix) += gv * w.at(o, icr, ky, kx);
                  if (dw != nullptr) dw->at(o, icr, ky, kx) += gv * x.at(in, ic, iy, ix);
                }
              }
            }
          }
        }
      }
    }
  }
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps <= 0.0) throw ShapeError("layer_norm: eps must be > 0");
  if (gamma.size() != static_cast<std::size_t>(x.c) || beta.size() != static_cast<std::size_t>(x.c)) {
    shape_fail("layer_norm", "gamma/beta length must equal channel count " + std::to_string(x.c));
  }
  Tensor out(x.n, x.c, x.h, x.w);
  const double inv_c = 1.0 / x.c;
  for (int in = 0; in < x.n; ++in) {
    for (int iy = 0; iy < x.h; ++iy) {
      for (int ix = 0; ix < x.w; ++ix) {
        double mean = 0.0;
        for (int ic = 0; ic < x.c; ++ic) mean += x.at(in, ic, iy, ix);
        mean *= inv_c;
        double var = 0.0;
        for (int ic = 0; ic < x.c; ++ic) {
          const double d = x.at(in, ic, iy, ix) - mean;
          var += d * d;
        }
        var *= inv_c;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        for (int ic = 0; ic < x.c; ++ic) {
          const double xhat = (x.at(in, ic, iy, ix) - mean) * inv_std;
          out.at(in, ic, iy, ix) = xhat * gamma.data[ic] + beta.data[ic];
        }
      }
    }
  }
  return out;
}

void layer_norm_backward(const Tensor& x, const Tensor& gamma, double eps, const Tensor& dy,
                         Tensor* dx, Tensor* dgamma, Tensor* dbeta) {
  const double inv_c = 1.0 / x.c;
  std::vector<double> xhat(x.c);
  for (int in = 0; in < x.n; ++in) {
    for (int iy = 0; iy < x.h; ++iy) {
      for (int ix = 0; ix < x.w; ++ix) {
        double mean = 0.0;
        for (int ic = 0; ic < x.c; ++ic) mean += x.at(in, ic, iy, ix);
        mean *= inv_c;
        double var = 0.0;
        for (int ic = 0; ic < x.c; ++ic) {
          const double d = x.at(in, ic, iy, ix) - mean;
          var += d * d;
        }
        var *= inv_c;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        double g_mean = 0.0;
        double gx_mean = 0.0;
        for (int ic = 0; ic < x.c; ++ic) {
          xhat[ic] = (x.at(in, ic, iy, ix) - mean) * inv_std;
          const double g = dy.at(in, ic, iy, ix) * gamma.data[ic];
          g_mean += g;
          gx_mean += g * xhat[ic];
        }
        g_mean *= inv_c;
        gx_mean *= inv_c;
        for (int ic = 0; ic < x.c; ++ic) {
          const double g = dy.at(in, ic, iy, ix) * gamma.data[ic];
          if (dx != nullptr) {
            dx->at(in, ic, iy, ix) += inv_std * (g - g_mean - xhat[ic] * gx_mean);
          }
          if (dgamma != nullptr) dgamma->data[ic] += dy.at(in, ic, iy, ix) * xhat[ic];
          if (dbeta != nullptr) dbeta->data[ic] += dy.at(in, ic, iy, ix);
        }
      }
    }
  }
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data[i];
    out.data[i] = v * 0.5 * (1.0 + std::erf(v * kInvSqrt2));
  }
  return out;
}

void gelu_backward(const Tensor& x, const Tensor& dy, Tensor* dx) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    dx->data[i] += dy.data[i] * (cdf + v * pdf);
  }
}

Tensor softmax_lastdim(const Tensor& x) {
  Tensor out(x.n, x.c, x.h, x.w);
  const int rows = x.n * x.c * x.h;
  const int cols = x.w;
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.data.data() + static_cast<std::size_t>(r) * cols;
    double* yr = out.data.data() + static_cast<std::size_t>(r) * cols;
    double mx = xr[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < cols; ++j) yr[j] *= inv;
  }
  return out;
}

void softmax_lastdim_backward(const Tensor& y, const Tensor& dy, Tensor* dx) {
  const int rows = y.n * y.c * y.h;
  const int cols = y.w;
  for (int r = 0; r < rows; ++r) {
    const double* yr = y.data.data() + static_cast<std::size_t>(r) * cols;
    const double* gr = dy.data.data() + static_cast<std::size_t>(r) * cols;
    double* dr = dx->data.data() + static_cast<std::size_t>(r) * cols;
    double dot = 0.0;
    for (int j = 0; j < cols; ++j) dot += gr[j] * yr[j];
    for (int j = 0; j < cols; ++j) dr[j] += yr[j] * (gr[j] - dot);
  }
}

Tensor avg_pool(const Tensor& x, int r) {
  if (r < 1) shape_fail("avg_pool", "ratio must be >= 1");
  if (x.h % r != 0 || x.w % r != 0) {
    std::ostringstream os;
    os << "spatial dims " << x.h << "x" << x.w << " not divisible by ratio " << r;
    shape_fail("avg_pool", os.str());
  }
  const int oh = x.h / r;
  const int ow = x.w / r;
  Tensor out(x.n, x.c, oh, ow);
  const double inv = 1.0 / (static_cast<double>(r) * r);
  for (int in = 0; in < x.n; ++in) {
    for (int ic = 0; ic < x.c; ++ic) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int dy2 = 0; dy2 < r; ++dy2) {
            for (int dx2 = 0; dx2 < r; ++dx2) {
              acc += x.at(in, ic, oy * r + dy2, ox * r + dx2);
            }
          }
          out.at(in, ic, oy, ox) = acc * inv;
        }
      }
    }
  }
  return out;
}

void avg_pool_backward(const Tensor& dy, int r, Tensor* dx) {
  const double inv = 1.0 / (static_cast<double>(r) * r);
  for (int in = 0; in < dy.n; ++in) {
    for (int ic = 0; ic < dy.c; ++ic) {
      for (int oy = 0; oy < dy.h; ++oy) {
        for (int ox = 0; ox < dy.w; ++ox) {
          const double g = dy.at(in, ic, oy, ox) * inv;
          for (int dy2 = 0; dy2 < r; ++dy2) {
            for (int dx2 = 0; dx2 < r; ++dx2) {
              dx->at(in, ic, oy * r + dy2, ox * r + dx2) += g;
            }
          }
        }
      }
    }
  }
}

Tensor smooth3x3(const Tensor& x) {
  Tensor out(x.n, x.c, x.h, x.w);
  for (int in = 0; in < x.n; ++in) {
    for (int ic = 0; ic < x.c; ++ic) {
      for (int iy = 0; iy < x.h; ++iy) {
        for (int ix = 0; ix < x.w; ++ix) {
          double acc = 0.0;
          int cnt = 0;
          for (int dy2 = -1; dy2 <= 1; ++dy2) {
            const int yy = iy + dy2;
            if (yy < 0 || yy >= x.h) continue;
            for (int dx2 = -1; dx2 <= 1; ++dx2) {
              const int xx = ix + dx2;
              if (xx < 0 || xx >= x.w) continue;
              acc += x.at(in, ic, yy, xx);
              ++cnt;
            }
          }
          out.at(in, ic, iy, ix) = acc / cnt;
        }
      }
    }
  }
  return out;
}

void smooth3x3_backward(const Tensor& dy, Tensor* dx) {
  for (int in = 0; in < dy.n; ++in) {
    for (int ic = 0; ic < dy.c; ++ic) {
      for (int iy = 0; iy < dy.h; ++iy) {
        for (int ix = 0; ix < dy.w; ++ix) {
          int cnt = 0;
          for (int dy2 = -1; dy2 <= 1; ++dy2) {
            const int yy = iy + dy2;
            if (yy < 0 || yy >= dy.h) continue;
            for (int dx2 = -1; dx2 <= 1; ++dx2) {
              const int xx = ix + dx2;
              if (xx < 0 || xx >= dy.w) continue;
              ++cnt;
            }
          }
          const double g = dy.at(in, ic, iy, ix) / cnt;
          for (int dy2 = -1; dy2 <= 1; ++dy2) {
            const int yy = iy + dy2;
            if (yy < 0 || yy >= dy.h) continue;
            for (int dx2 = -1; dx2 <= 1; ++dx2) {
              const int xx = ix + dx2;
              if (xx < 0 || xx >= dy.w) continue;
              dx->at(in, ic, yy, xx) += g;
            }
          }
        }
      }
    }
  }
}

namespace {

struct LerpIndex {
  int lo, hi;
  double frac;
};

// align_corners=false source coordinate, clamped into the input range.
LerpIndex lerp_index(int dst, int in_dim, int out_dim) {
  const double scale = static_cast<double>(in_dim) / out_dim;
  double src = (dst + 0.5) * scale - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in_dim - 1));
  LerpIndex li;
  li.lo = static_cast<int>(src);
  li.hi = std::min(li.lo + 1, in_dim - 1);
  li.frac = src - li.lo;
  return li;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
  if (out_h < x.h || out_w < x.w) {
    shape_fail("upsample_bilinear", "output dims must be >= input dims");
  }
  Tensor out(x.n, x.c, out_h, out_w);
  std::vector<LerpIndex> ys(out_h), xs(out_w);
  for (int oy = 0; oy < out_h; ++oy) ys[oy] = lerp_index(oy, x.h, out_h);
  for (int ox = 0; ox < out_w; ++ox) xs[ox] = lerp_index(ox, x.w, out_w);
  for (int in = 0; in < x.n; ++in) {
    for (int ic = 0; ic < x.c; ++ic) {
      for (int oy = 0; oy < out_h; ++oy) {
        const LerpIndex& ly = ys[oy];
        for (int ox = 0; ox < out_w; ++ox) {
          const LerpIndex& lx = xs[ox];
          const double v00 = x.at(in, ic, ly.lo, lx.lo);
          const double v01 = x.at(in, ic, ly.lo, lx.hi);
          const double v10 = x.at(in, ic, ly.hi, lx.lo);
          const double v11 = x.at(in, ic, ly.hi, lx.hi);
          // lerp form keeps constants and the identity case exact
          const double r0 = v00 + lx.frac * (v01 - v00);
          const double r1 = v10 + lx.frac * (v11 - v10);
          out.at(in, ic, oy, ox) = r0 + ly.frac * (r1 - r0);
        }
      }
    }
  }
  return out;
}

void upsample_bilinear_backward(const Tensor& dy, int in_h, int in_w, Tensor* dx) {
  std::vector<LerpIndex> ys(dy.h), xs(dy.w);
  for (int oy = 0; oy < dy.h; ++oy) ys[oy] = lerp_index(oy, in_h, dy.h);
  for (int ox = 0; ox < dy.w; ++ox) xs[ox] = lerp_index(ox, in_w, dy.w);
  for (int in = 0; in < dy.n; ++in) {
    for (int ic = 0; ic < dy.c; ++ic) {
      for (int oy = 0; oy < dy.h; ++oy) {
        const LerpIndex& ly = ys[oy];
        for (int ox = 0; ox < dy.w; ++ox) {
          const LerpIndex& lx = xs[ox];
          const double g = dy.at(in, ic, oy, ox);
          dx->at(in, ic, ly.lo, lx.lo) += g * (1.0 - ly.frac) * (1.0 - lx.frac);
          dx->at(in, ic, ly.lo, lx.hi) += g * (1.0 - ly.frac) * lx.frac;
          dx->at(in, ic, ly.hi, lx.lo) += g * ly.frac * (1.0 - lx.frac);
          dx->at(in, ic, ly.hi, lx.hi) += g * ly.frac * lx.frac;
        }
      }
    }
  }
}

Tensor concat_channels(const std::vector<const Tensor*>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor& first = *xs.front();
  int total_c = 0;
  for (const Tensor* t : xs) {
    if (t->n != first.n || t->h != first.h || t->w != first.w) {
      shape_fail("concat_channels",
                 "spatial/batch mismatch " + first.shape_str() + " vs " + t->shape_str());
    }
    total_c += t->c;
  }
  Tensor out(first.n, total_c, first.h, first.w);
  const std::size_t plane = static_cast<std::size_t>(first.h) * first.w;
  for (int in = 0; in < first.n; ++in) {
    int co = 0;
    for (const Tensor* t : xs) {
      std::copy_n(&t->at(in, 0, 0, 0), static_cast<std::size_t>(t->c) * plane,
                  &out.at(in, co, 0, 0));
      co += t->c;
    }
  }
  return out;
}

void concat_channels_backward(const Tensor& dy, const std::vector<Tensor*>& dxs) {
  const std::size_t plane = static_cast<std::size_t>(dy.h) * dy.w;
  for (int in = 0; in < dy.n; ++in) {
    int co = 0;
    for (Tensor* d : dxs) {
      const double* src = &dy.at(in, co, 0, 0);
      double* dst = &d->at(in, 0, 0, 0);
      const std::size_t cnt = static_cast<std::size_t>(d->c) * plane;
      for (std::size_t i = 0; i < cnt; ++i) dst[i] += src[i];
      co += d->c;
    }
  }
}

Tensor to_tokens(const Tensor& x) {
  Tensor out(x.n, 1, x.h * x.w, x.c);
  for (int in = 0; in < x.n; ++in) {
    for (int ic = 0; ic < x.c; ++ic) {
      for (int iy = 0; iy < x.h; ++iy) {
        for (int ix = 0; ix < x.w; ++ix) {
          out.at(in, 0, iy * x.w + ix, ic) = x.at(in, ic, iy, ix);
        }
      }
    }
  }
  return out;
}

Tensor from_tokens(const Tensor& t, int c, int h, int w) {
  if (t.c != 1 || t.h != h * w || t.w != c) {
    shape_fail("from_tokens", "token matrix " + t.shape_str() + " does not match " +
                                  std::to_string(c) + " channels at " + std::to_string(h) + "x" +
                                  std::to_string(w));
  }
  Tensor out(t.n, c, h, w);
  for (int in = 0; in < t.n; ++in) {
    for (int ic = 0; ic < c; ++ic) {
      for (int iy = 0; iy < h; ++iy) {
        for (int ix = 0; ix < w; ++ix) {
          out.at(in, ic, iy, ix) = t.at(in, 0, iy * w + ix, ic);
        }
      }
    }
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.c != 1 || b.c != 1) shape_fail("matmul", "operands must be {n,1,p,q} matrices");
  if (b.n != a.n && b.n != 1) shape_fail("matmul", "batch mismatch");
  if (a.w != b.h) {
    shape_fail("matmul", "inner dims " + a.shape_str() + " x " + b.shape_str());
  }
  Tensor out(a.n, 1, a.h, b.w);
  const std::size_t a_plane = static_cast<std::size_t>(a.h) * a.w;
  const std::size_t b_plane = static_cast<std::size_t>(b.h) * b.w;
  const std::size_t o_plane = static_cast<std::size_t>(a.h) * b.w;
  for (int in = 0; in < a.n; ++in) {
    const double* ap = a.data.data() + a_plane * in;
    const double* bp = b.data.data() + (b.n == 1 ? 0 : b_plane * in);
    double* op = out.data.data() + o_plane * in;
    for (int i = 0; i < a.h; ++i) {
      for (int kk = 0; kk < a.w; ++kk) {
        const double av = ap[static_cast<std::size_t>(i) * a.w + kk];
        if (av == 0.0) continue;
        const double* br = bp + static_cast<std::size_t>(kk) * b.w;
        double* orow = op + static_cast<std::size_t>(i) * b.w;
        for (int j = 0; j < b.w; ++j) orow[j] += av * br[j];
      }
    }
  }
  return out;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dy, Tensor* da,
                     Tensor* db) {
  const std::size_t a_plane = static_cast<std::size_t>(a.h) * a.w;
  const std::size_t b_plane = static_cast<std::size_t>(b.h) * b.w;
  const std::size_t o_plane = static_cast<std::size_t>(a.h) * b.w;
  for (int in = 0; in < a.n; ++in) {
    const double* ap = a.data.data() + a_plane * in;
    const double* bp = b.data.data() + (b.n == 1 ? 0 : b_plane * in);
    const double* gp = dy.data.data() + o_plane * in;
    double* dap = da != nullptr ? da->data.data() + a_plane * in : nullptr;
    double* dbp = db != nullptr ? db->data.data() + (b.n == 1 ? 0 : b_plane * in) : nullptr;
    for (int i = 0; i < a.h; ++i) {
      const double* grow = gp + static_cast<std::size_t>(i) * b.w;
      for (int kk = 0; kk < a.w; ++kk) {
        const double* brow = bp + static_cast<std::size_t>(kk) * b.w;
        const double av = ap[static_cast<std::size_t>(i) * a.w + kk];
        double acc = 0.0;
        for (int j = 0; j < b.w; ++j) {
          acc += grow[j] * brow[j];
          if (dbp != nullptr) dbp[static_cast<std::size_t>(kk) * b.w + j] += av * grow[j];
        }
        if (dap != nullptr) dap[static_cast<std::size_t>(i) * a.w + kk] += acc;
      }
    }
  }
}

Tensor transpose_last2(const Tensor& x) {
  if (x.c != 1) shape_fail("transpose_last2", "expects {n,1,p,q}, got " + x.shape_str());
  Tensor out(x.n, 1, x.w, x.h);
  for (int in = 0; in < x.n; ++in) {
    for (int i = 0; i < x.h; ++i) {
      for (int j = 0; j < x.w; ++j) {
        out.at(in, 0, j, i) = x.at(in, 0, i, j);
      }
    }
  }
  return out;
}

Tensor slice_lastdim(const Tensor& x, int offset, int len) {
  if (offset < 0 || len < 1 || offset + len > x.w) {
    shape_fail("slice_lastdim", "range [" + std::to_string(offset) + ", " +
                                    std::to_string(offset + len) + ") out of " +
                                    std::to_string(x.w));
  }
  Tensor out(x.n, x.c, x.h, len);
  for (int in = 0; in < x.n; ++in) {
    for (int ic = 0; ic < x.c; ++ic) {
      for (int iy = 0; iy < x.h; ++iy) {
        for (int j = 0; j < len; ++j) {
          out.at(in, ic, iy, j) = x.at(in, ic, iy, offset + j);
        }
      }
    }
  }
  return out;
}

void slice_lastdim_backward(const Tensor& dy, int offset, Tensor* dx) {
  for (int in = 0; in < dy.n; ++in) {
    for (int ic = 0; ic < dy.c; ++ic) {
      for (int iy = 0; iy < dy.h; ++iy) {
        for (int j = 0; j < dy.w; ++j) {
          dx->at(in, ic, iy, offset + j) += dy.at(in, ic, iy, j);
        }
      }
    }
  }
}

Tensor concat_lastdim(const std::vector<const Tensor*>& xs) {
  if (xs.empty()) throw ShapeError("concat_lastdim: no inputs");
  const Tensor& first = *xs.front();
  int total_w = 0;
  for (const Tensor* t : xs) {
    if (t->n != first.n || t->c != first.c || t->h != first.h) {
      shape_fail("concat_lastdim", "mismatch " + first.shape_str() + " vs " + t->shape_str());
    }
    total_w += t->w;
  }
  Tensor out(first.n, first.c, first.h, total_w);
  for (int in = 0; in < first.n; ++in) {
    for (int ic = 0; ic < first.c; ++ic) {
      for (int iy = 0; iy < first.h; ++iy) {
        int wo = 0;
        for (const Tensor* t : xs) {
          for (int j = 0; j < t->w; ++j) {
            out.at(in, ic, iy, wo + j) = t->at(in, ic, iy, j);
          }
          wo += t->w;
        }
      }
    }
  }
  return out;
}

void concat_lastdim_backward(const Tensor& dy, const std::vector<Tensor*>& dxs) {
  for (int in = 0; in < dy.n; ++in) {
    for (int ic = 0; ic < dy.c; ++ic) {
      for (int iy = 0; iy < dy.h; ++iy) {
        int wo = 0;
        for (Tensor* d : dxs) {
          for (int j = 0; j < d->w; ++j) {
            d->at(in, ic, iy, j) += dy.at(in, ic, iy, wo + j);
          }
          wo += d->w;
        }
      }
    }
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(a.n, a.c, a.h, a.w);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out(a.n, a.c, a.h, a.w);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

Tensor scale(const Tensor& x, double s) {
  Tensor out(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] * s;
  return out;
}

double sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data) acc += v;
  return acc;
}

double cross_entropy_mean(const Tensor& logits, const LabelMap& labels) {
  if (labels.n != logits.n || labels.h != logits.h || labels.w != logits.w) {
    throw ShapeError("cross_entropy: labels " + std::to_string(labels.n) + "x" +
                     std::to_string(labels.h) + "x" + std::to_string(labels.w) +
                     " do not match logits " + logits.shape_str());
  }
  const int k = logits.c;
  double total = 0.0;
  for (int in = 0; in < logits.n; ++in) {
    for (int iy = 0; iy < logits.h; ++iy) {
      for (int ix = 0; ix < logits.w; ++ix) {
        const int label = labels.at(in, iy, ix);
        if (label < 0 || label >= k) {
          throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range");
        }
        double mx = logits.at(in, 0, iy, ix);
        for (int ic = 1; ic < k; ++ic) mx = std::max(mx, logits.at(in, ic, iy, ix));
        double sum = 0.0;
        for (int ic = 0; ic < k; ++ic) sum += std::exp(logits.at(in, ic, iy, ix) - mx);
        const double lse = mx + std::log(sum);
        total += lse - logits.at(in, label, iy, ix);
      }
    }
  }
  return total / (static_cast<double>(logits.n) * logits.h * logits.w);
}

void cross_entropy_mean_backward(const Tensor& logits, const LabelMap& labels, double dloss,
                                 Tensor* dlogits) {
  const int k = logits.c;
  const double inv_count = 1.0 / (static_cast<double>(logits.n) * logits.h * logits.w);
  for (int in = 0; in < logits.n; ++in) {
    for (int iy = 0; iy < logits.h; ++iy) {
      for (int ix = 0; ix < logits.w; ++ix) {
        const int label = labels.at(in, iy, ix);
        double mx = logits.at(in, 0, iy, ix);
        for (int ic = 1; ic < k; ++ic) mx = std::max(mx, logits.at(in, ic, iy, ix));
        double sum = 0.0;
        for (int ic = 0; ic < k; ++ic) sum += std::exp(logits.at(in, ic, iy, ix) - mx);
        for (int ic = 0; ic < k; ++ic) {
          const double p = std::exp(logits.at(in, ic, iy, ix) - mx) / sum;
          const double onehot = ic == label ? 1.0 : 0.0;
          dlogits->at(in, ic, iy, ix) += dloss * inv_count * (p - onehot);
        }
      }
    }
  }
}

}  // namespace ops
}  // namespace metaseg
