#include "fsw/core/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace fsw::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline void bilinear_coeffs(int o, int in_size, int out_size, int& i0, int& i1, double& w1) {
  // half-pixel centers, clamped at the borders
  double src = (o + 0.5) * static_cast<double>(in_size) / out_size - 0.5;
  if (src < 0.0) src = 0.0;
  double f = std::floor(src);
  i0 = static_cast<int>(f);
  if (i0 > in_size - 1) i0 = in_size - 1;
  i1 = std::min(i0 + 1, in_size - 1);
  w1 = src - f;
  if (i0 == i1) w1 = 0.0;
}
}  // namespace

void set_parallel(bool on) { g_parallel.store(on); }
bool parallel_enabled() { return g_parallel.load(); }

// ---------------------------------------------------------------------------
// serial reference kernels
// ---------------------------------------------------------------------------

namespace serial {

void conv2d_forward(const double* x, const double* w, const double* b, double* y, const ConvDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
  for (int n = 0; n < d.n; ++n)
    for (int co = 0; co < d.cout; ++co)
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) {
          double acc = b ? b[co] : 0.0;
          for (int ci = 0; ci < d.cin; ++ci)
            for (int kh = 0; kh < d.kh; ++kh) {
              const int ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.h) continue;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.w) continue;
                acc += x[((static_cast<int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] *
                       w[((static_cast<int64_t>(co) * d.cin + ci) * d.kh + kh) * d.kw + kw];
              }
            }
          y[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow] = acc;
        }
}

void conv2d_grad_input(const double* gy, const double* w, double* gx, const ConvDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
  for (int n = 0; n < d.n; ++n)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int ih = 0; ih < d.h; ++ih)
        for (int iw = 0; iw < d.w; ++iw) {
          double acc = 0.0;
          for (int co = 0; co < d.cout; ++co)
            for (int kh = 0; kh < d.kh; ++kh) {
              const int oh_num = ih + d.pad - kh;
              if (oh_num < 0 || oh_num % d.stride) continue;
              const int oh = oh_num / d.stride;
              if (oh >= oh_n) continue;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int ow_num = iw + d.pad - kw;
                if (ow_num < 0 || ow_num % d.stride) continue;
                const int ow = ow_num / d.stride;
                if (ow >= ow_n) continue;
                acc += gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow] *
                       w[((static_cast<int64_t>(co) * d.cin + ci) * d.kh + kh) * d.kw + kw];
              }
            }
          gx[((static_cast<int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] += acc;
        }
}

void conv2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
  for (int co = 0; co < d.cout; ++co) {
    for (int ci = 0; ci < d.cin; ++ci)
      for (int kh = 0; kh < d.kh; ++kh)
        for (int kw = 0; kw < d.kw; ++kw) {
          double acc = 0.0;
          for (int n = 0; n < d.n; ++n)
            for (int oh = 0; oh < oh_n; ++oh) {
              const int ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.h) continue;
              for (int ow = 0; ow < ow_n; ++ow) {
                const int iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.w) continue;
                acc += gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow] *
                       x[((static_cast<int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw];
              }
            }
          gw[((static_cast<int64_t>(co) * d.cin + ci) * d.kh + kh) * d.kw + kw] += acc;
        }
    if (gb) {
      double acc = 0.0;
      for (int n = 0; n < d.n; ++n)
        for (int oh = 0; oh < oh_n; ++oh)
          for (int ow = 0; ow < ow_n; ++ow)
            acc += gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow];
      gb[co] += acc;
    }
  }
}

void conv_transpose2d_forward(const double* x, const double* w, const double* b, double* y, const ConvTDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
  for (int n = 0; n < d.n; ++n)
    for (int co = 0; co < d.cout; ++co)
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) {
          double acc = b ? b[co] : 0.0;
          for (int ci = 0; ci < d.cin; ++ci)
            for (int kh = 0; kh < d.kh; ++kh) {
              const int ih_num = oh + d.pad - kh;
              if (ih_num < 0 || ih_num % d.stride) continue;
              const int ih = ih_num / d.stride;
              if (ih >= d.h) continue;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int iw_num = ow + d.pad - kw;
                if (iw_num < 0 || iw_num % d.stride) continue;
                const int iw = iw_num / d.stride;
                if (iw >= d.w) continue;
                acc += x[((static_cast<int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] *
                       w[((static_cast<int64_t>(ci) * d.cout + co) * d.kh + kh) * d.kw + kw];
              }
            }
          y[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow] = acc;
        }
}

void conv_transpose2d_grad_input(const double* gy, const double* w, double* gx, const ConvTDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
  for (int n = 0; n < d.n; ++n)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int ih = 0; ih < d.h; ++ih)
        for (int iw = 0; iw < d.w; ++iw) {
          double acc = 0.0;
          for (int co = 0; co < d.cout; ++co)
            for (int kh = 0; kh < d.kh; ++kh) {
              const int oh = ih * d.stride - d.pad + kh;
              if (oh < 0 || oh >= oh_n) continue;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int ow = iw * d.stride - d.pad + kw;
                if (ow < 0 || ow >= ow_n) continue;
                acc += gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow] *
                       w[((static_cast<int64_t>(ci) * d.cout + co) * d.kh + kh) * d.kw + kw];
              }
            }
          gx[((static_cast<int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] += acc;
        }
}

void conv_transpose2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvTDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
  for (int ci = 0; ci < d.cin; ++ci)
    for (int co = 0; co < d.cout; ++co)
      for (int kh = 0; kh < d.kh; ++kh)
        for (int kw = 0; kw < d.kw; ++kw) {
          double acc = 0.0;
          for (int n = 0; n < d.n; ++n)
            for (int ih = 0; ih < d.h; ++ih) {
              const int oh = ih * d.stride - d.pad + kh;
              if (oh < 0 || oh >= oh_n) continue;
              for (int iw = 0; iw < d.w; ++iw) {
                const int ow = iw * d.stride - d.pad + kw;
                if (ow < 0 || ow >= ow_n) continue;
                acc += x[((static_cast<int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] *
                       gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow];
              }
            }
          gw[((static_cast<int64_t>(ci) * d.cout + co) * d.kh + kh) * d.kw + kw] += acc;
        }
  if (gb) {
    for (int co = 0; co < d.cout; ++co) {
      double acc = 0.0;
      for (int n = 0; n < d.n; ++n)
        for (int oh = 0; oh < oh_n; ++oh)
          for (int ow = 0; ow < ow_n; ++ow)
            acc += gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow];
      gb[co] += acc;
    }
  }
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool ta, bool tb, bool acc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = acc ? c[static_cast<int64_t>(i) * n + j] : 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = ta ? a[static_cast<int64_t>(p) * m + i] : a[static_cast<int64_t>(i) * k + p];
        const double bv = tb ? b[static_cast<int64_t>(j) * k + p] : b[static_cast<int64_t>(p) * n + j];
        s += av * bv;
      }
      c[static_cast<int64_t>(i) * n + j] = s;
    }
}

void resize_bilinear(const double* x, double* y, int planes, int h, int w, int oh, int ow) {
  for (int p = 0; p < planes; ++p) {
    const double* src = x + static_cast<int64_t>(p) * h * w;
    double* dst = y + static_cast<int64_t>(p) * oh * ow;
    for (int i = 0; i < oh; ++i) {
      int y0, y1;
      double fy;
      bilinear_coeffs(i, h, oh, y0, y1, fy);
      for (int j = 0; j < ow; ++j) {
        int x0, x1;
        double fx;
        bilinear_coeffs(j, w, ow, x0, x1, fx);
        const double v00 = src[y0 * w + x0], v01 = src[y0 * w + x1];
        const double v10 = src[y1 * w + x0], v11 = src[y1 * w + x1];
        dst[i * ow + j] = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
      }
    }
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP kernels; each parallel loop owns disjoint output elements and the
// per-element arithmetic order matches the serial reference exactly.
// ---------------------------------------------------------------------------

namespace par {

void conv2d_forward(const double* x, const double* w, const double* b, double* y, const ConvDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n)
    for (int co = 0; co < d.cout; ++co) {
      const double* xn = x + static_cast<int64_t>(n) * d.cin * d.h * d.w;
      const double* wc = w + static_cast<int64_t>(co) * d.cin * d.kh * d.kw;
      double* yc = y + (static_cast<int64_t>(n) * d.cout + co) * oh_n * ow_n;
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) {
          double acc = b ? b[co] : 0.0;
          for (int ci = 0; ci < d.cin; ++ci)
            for (int kh = 0; kh < d.kh; ++kh) {
              const int ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.h) continue;
              const double* xrow = xn + (static_cast<int64_t>(ci) * d.h + ih) * d.w;
              const double* wrow = wc + (static_cast<int64_t>(ci) * d.kh + kh) * d.kw;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.w) continue;
                acc += xrow[iw] * wrow[kw];
              }
            }
          yc[static_cast<int64_t>(oh) * ow_n + ow] = acc;
        }
    }
}

void conv2d_grad_input(const double* gy, const double* w, double* gx, const ConvDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int ih = 0; ih < d.h; ++ih)
        for (int iw = 0; iw < d.w; ++iw) {
          double acc = 0.0;
          for (int co = 0; co < d.cout; ++co)
            for (int kh = 0; kh < d.kh; ++kh) {
              const int oh_num = ih + d.pad - kh;
              if (oh_num < 0 || oh_num % d.stride) continue;
              const int oh = oh_num / d.stride;
              if (oh >= oh_n) continue;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int ow_num = iw + d.pad - kw;
                if (ow_num < 0 || ow_num % d.stride) continue;
                const int ow = ow_num / d.stride;
                if (ow >= ow_n) continue;
                acc += gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow] *
                       w[((static_cast<int64_t>(co) * d.cin + ci) * d.kh + kh) * d.kw + kw];
              }
            }
          gx[((static_cast<int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] += acc;
        }
}

void conv2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < d.cout; ++co)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int kh = 0; kh < d.kh; ++kh)
        for (int kw = 0; kw < d.kw; ++kw) {
          double acc = 0.0;
          for (int n = 0; n < d.n; ++n)
            for (int oh = 0; oh < oh_n; ++oh) {
              const int ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.h) continue;
              for (int ow = 0; ow < ow_n; ++ow) {
                const int iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.w) continue;
                acc += gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow] *
                       x[((static_cast<int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw];
              }
            }
          gw[((static_cast<int64_t>(co) * d.cin + ci) * d.kh + kh) * d.kw + kw] += acc;
        }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < d.cout; ++co) {
      double acc = 0.0;
      for (int n = 0; n < d.n; ++n)
        for (int oh = 0; oh < oh_n; ++oh)
          for (int ow = 0; ow < ow_n; ++ow)
            acc += gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow];
      gb[co] += acc;
    }
  }
}

void conv_transpose2d_forward(const double* x, const double* w, const double* b, double* y, const ConvTDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n)
    for (int co = 0; co < d.cout; ++co)
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) {
          double acc = b ? b[co] : 0.0;
          for (int ci = 0; ci < d.cin; ++ci)
            for (int kh = 0; kh < d.kh; ++kh) {
              const int ih_num = oh + d.pad - kh;
              if (ih_num < 0 || ih_num % d.stride) continue;
              const int ih = ih_num / d.stride;
              if (ih >= d.h) continue;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int iw_num = ow + d.pad - kw;
                if (iw_num < 0 || iw_num % d.stride) continue;
                const int iw = iw_num / d.stride;
                if (iw >= d.w) continue;
                acc += x[((static_cast<int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] *
                       w[((static_cast<int64_t>(ci) * d.cout + co) * d.kh + kh) * d.kw + kw];
              }
            }
          y[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow] = acc;
        }
}

void conv_transpose2d_grad_input(const double* gy, const double* w, double* gx, const ConvTDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int ih = 0; ih < d.h; ++ih)
        for (int iw = 0; iw < d.w; ++iw) {
          double acc = 0.0;
          for (int co = 0; co < d.cout; ++co)
            for (int kh = 0; kh < d.kh; ++kh) {
              const int oh = ih * d.stride - d.pad + kh;
              if (oh < 0 || oh >= oh_n) continue;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int ow = iw * d.stride - d.pad + kw;
                if (ow < 0 || ow >= ow_n) continue;
                acc += gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow] *
                       w[((static_cast<int64_t>(ci) * d.cout + co) * d.kh + kh) * d.kw + kw];
              }
            }
          gx[((static_cast<int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] += acc;
        }
}

void conv_transpose2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvTDims& d) {
  const int oh_n = d.out_h(), ow_n = d.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int ci = 0; ci < d.cin; ++ci)
    for (int co = 0; co < d.cout; ++co)
      for (int kh = 0; kh < d.kh; ++kh)
        for (int kw = 0; kw < d.kw; ++kw) {
          double acc = 0.0;
          for (int n = 0; n < d.n; ++n)
            for (int ih = 0; ih < d.h; ++ih) {
              const int oh = ih * d.stride - d.pad + kh;
              if (oh < 0 || oh >= oh_n) continue;
              for (int iw = 0; iw < d.w; ++iw) {
                const int ow = iw * d.stride - d.pad + kw;
                if (ow < 0 || ow >= ow_n) continue;
                acc += x[((static_cast<int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] *
                       gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow];
              }
            }
          gw[((static_cast<int64_t>(ci) * d.cout + co) * d.kh + kh) * d.kw + kw] += acc;
        }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < d.cout; ++co) {
      double acc = 0.0;
      for (int n = 0; n < d.n; ++n)
        for (int oh = 0; oh < oh_n; ++oh)
          for (int ow = 0; ow < ow_n; ++ow)
            acc += gy[((static_cast<int64_t>(n) * d.cout + co) * oh_n + oh) * ow_n + ow];
      gb[co] += acc;
    }
  }
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool ta, bool tb, bool acc) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = acc ? c[static_cast<int64_t>(i) * n + j] : 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = ta ? a[static_cast<int64_t>(p) * m + i] : a[static_cast<int64_t>(i) * k + p];
        const double bv = tb ? b[static_cast<int64_t>(j) * k + p] : b[static_cast<int64_t>(p) * n + j];
        s += av * bv;
      }
      c[static_cast<int64_t>(i) * n + j] = s;
    }
}

void resize_bilinear(const double* x, double* y, int planes, int h, int w, int oh, int ow) {
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    serial::resize_bilinear(x + static_cast<int64_t>(p) * h * w, y + static_cast<int64_t>(p) * oh * ow, 1, h, w, oh, ow);
}

}  // namespace par

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

void conv2d_forward(const double* x, const double* w, const double* b, double* y, const ConvDims& d) {
  parallel_enabled() ? par::conv2d_forward(x, w, b, y, d) : serial::conv2d_forward(x, w, b, y, d);
}
void conv2d_grad_input(const double* gy, const double* w, double* gx, const ConvDims& d) {
  parallel_enabled() ? par::conv2d_grad_input(gy, w, gx, d) : serial::conv2d_grad_input(gy, w, gx, d);
}
void conv2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvDims& d) {
  parallel_enabled() ? par::conv2d_grad_weight(x, gy, gw, gb, d) : serial::conv2d_grad_weight(x, gy, gw, gb, d);
}
void conv_transpose2d_forward(const double* x, const double* w, const double* b, double* y, const ConvTDims& d) {
  parallel_enabled() ? par::conv_transpose2d_forward(x, w, b, y, d) : serial::conv_transpose2d_forward(x, w, b, y, d);
}
void conv_transpose2d_grad_input(const double* gy, const double* w, double* gx, const ConvTDims& d) {
  parallel_enabled() ? par::conv_transpose2d_grad_input(gy, w, gx, d)
                     : serial::conv_transpose2d_grad_input(gy, w, gx, d);
}
void conv_transpose2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvTDims& d) {
  parallel_enabled() ? par::conv_transpose2d_grad_weight(x, gy, gw, gb, d)
                     : serial::conv_transpose2d_grad_weight(x, gy, gw, gb, d);
}
void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool ta, bool tb, bool acc) {
  parallel_enabled() ? par::matmul(a, b, c, m, k, n, ta, tb, acc) : serial::matmul(a, b, c, m, k, n, ta, tb, acc);
}
void resize_bilinear(const double* x, double* y, int planes, int h, int w, int oh, int ow) {
  parallel_enabled() ? par::resize_bilinear(x, y, planes, h, w, oh, ow)
                     : serial::resize_bilinear(x, y, planes, h, w, oh, ow);
}

void resize_bilinear_grad(const double* gy, double* gx, int planes, int h, int w, int oh, int ow) {
  for (int p = 0; p < planes; ++p) {
    const double* g = gy + static_cast<int64_t>(p) * oh * ow;
    double* dst = gx + static_cast<int64_t>(p) * h * w;
    for (int i = 0; i < oh; ++i) {
      int y0, y1;
      double fy;
      bilinear_coeffs(i, h, oh, y0, y1, fy);
      for (int j = 0; j < ow; ++j) {
        int x0, x1;
        double fx;
        bilinear_coeffs(j, w, ow, x0, x1, fx);
        const double v = g[i * ow + j];
        dst[y0 * w + x0] += (1 - fy) * (1 - fx) * v;
        dst[y0 * w + x1] += (1 - fy) * fx * v;
        dst[y1 * w + x0] += fy * (1 - fx) * v;
        dst[y1 * w + x1] += fy * fx * v;
      }
    }
  }
}

}  // namespace fsw::kernels
