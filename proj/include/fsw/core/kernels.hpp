#pragma once

#include <cstdint>

namespace fsw::kernels {

/// Runtime switch between the OpenMP kernels and the serial reference
/// implementations. Both produce bit-identical results because parallel
/// loops only ever split independent output elements, never a reduction.
void set_parallel(bool on);
bool parallel_enabled();

struct ConvDims {
  int n = 1, cin = 1, h = 1, w = 1;  // input  [n, cin, h, w]
  int cout = 1, kh = 1, kw = 1;      // weight [cout, cin, kh, kw]
  int stride = 1, pad = 0;
  int out_h() const { return (h + 2 * pad - kh) / stride + 1; }
  int out_w() const { return (w + 2 * pad - kw) / stride + 1; }
};

struct ConvTDims {
  int n = 1, cin = 1, h = 1, w = 1;  // input  [n, cin, h, w]
  int cout = 1, kh = 1, kw = 1;      // weight [cin, cout, kh, kw]
  int stride = 1, pad = 0;
  int out_h() const { return (h - 1) * stride - 2 * pad + kh; }
  int out_w() const { return (w - 1) * stride - 2 * pad + kw; }
};

// Forward kernels overwrite their output buffer; gradient kernels accumulate
// (+=) so autograd can sum contributions from multiple uses.

namespace serial {

void conv2d_forward(const double* x, const double* w, const double* b, double* y, const ConvDims& d);
void conv2d_grad_input(const double* gy, const double* w, double* gx, const ConvDims& d);
void conv2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvDims& d);

void conv_transpose2d_forward(const double* x, const double* w, const double* b, double* y, const ConvTDims& d);
void conv_transpose2d_grad_input(const double* gy, const double* w, double* gx, const ConvTDims& d);
void conv_transpose2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvTDims& d);

/// c[m,n] = a·b with optional transposes; a is m×k (k×m when ta), b is k×n
/// (n×k when tb). Accumulates when acc is true.
void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool ta, bool tb, bool acc);

/// Bilinear resize of `planes` independent h×w planes to oh×ow
/// (half-pixel centers, edge clamped).
void resize_bilinear(const double* x, double* y, int planes, int h, int w, int oh, int ow);

}  // namespace serial

namespace par {

void conv2d_forward(const double* x, const double* w, const double* b, double* y, const ConvDims& d);
void conv2d_grad_input(const double* gy, const double* w, double* gx, const ConvDims& d);
void conv2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvDims& d);

void conv_transpose2d_forward(const double* x, const double* w, const double* b, double* y, const ConvTDims& d);
void conv_transpose2d_grad_input(const double* gy, const double* w, double* gx, const ConvTDims& d);
void conv_transpose2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvTDims& d);

void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool ta, bool tb, bool acc);

void resize_bilinear(const double* x, double* y, int planes, int h, int w, int oh, int ow);

}  // namespace par

// Dispatching entry points used by the tensor ops.
void conv2d_forward(const double* x, const double* w, const double* b, double* y, const ConvDims& d);
void conv2d_grad_input(const double* gy, const double* w, double* gx, const ConvDims& d);
void conv2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvDims& d);
void conv_transpose2d_forward(const double* x, const double* w, const double* b, double* y, const ConvTDims& d);
void conv_transpose2d_grad_input(const double* gy, const double* w, double* gx, const ConvTDims& d);
void conv_transpose2d_grad_weight(const double* x, const double* gy, double* gw, double* gb, const ConvTDims& d);
void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool ta, bool tb, bool acc);
void resize_bilinear(const double* x, double* y, int planes, int h, int w, int oh, int ow);

/// Gradient of the bilinear resize: scatters gy back through the same
/// interpolation weights. Accumulates into gx. Serial only; this op is cheap
/// next to the convolutions and the scatter would race if split naively.
void resize_bilinear_grad(const double* gy, double* gx, int planes, int h, int w, int oh, int ow);

}  // namespace fsw::kernels
