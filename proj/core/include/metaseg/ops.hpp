#pragma once

#include <vector>

#include "metaseg/tensor.hpp"

namespace metaseg {
namespace ops {

// Pure forward kernels and their matching reverse-mode kernels. Every
// backward ACCUMULATES into the destination buffers (callers pass zeroed
// or partially filled tensors of the right shape); null destinations are
// skipped.

// out[n,d,y,x] = sum_c x[n,c,y,x] * w[c,d] (+ b[d]). Identical to a 1x1 conv.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx,
                     Tensor* dw, Tensor* db);

// Cross-correlation, weight layout [out_c, in_c/groups, k, k].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad,
              int groups);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, int stride, int pad,
                     int groups, Tensor* dx, Tensor* dw, Tensor* db);

// Normalization over the channel axis per spatial position (pixel token).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
void layer_norm_backward(const Tensor& x, const Tensor& gamma, double eps, const Tensor& dy,
                         Tensor* dx, Tensor* dgamma, Tensor* dbeta);

// Exact Gaussian-CDF form x * Phi(x), elementwise.
Tensor gelu(const Tensor& x);
void gelu_backward(const Tensor& x, const Tensor& dy, Tensor* dx);

// Row-wise exp-normalization over the last axis with max subtraction.
Tensor softmax_lastdim(const Tensor& x);
void softmax_lastdim_backward(const Tensor& y, const Tensor& dy, Tensor* dx);

// Non-overlapping r x r window means; h and w must be divisible by r.
Tensor avg_pool(const Tensor& x, int r);
void avg_pool_backward(const Tensor& dy, int r, Tensor* dx);

// 3x3 stride-1 window mean with pad 1; border windows divide by the
// in-bounds count so constants are preserved.
Tensor smooth3x3(const Tensor& x);
void smooth3x3_backward(const Tensor& dy, Tensor* dx);

// Bilinear interpolation, align_corners=false: src = (dst+0.5)*in/out - 0.5.
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);
void upsample_bilinear_backward(const Tensor& dy, int in_h, int in_w, Tensor* dx);

Tensor concat_channels(const std::vector<const Tensor*>& xs);
void concat_channels_backward(const Tensor& dy, const std::vector<Tensor*>& dxs);

// Token-matrix helpers. A feature map [n,C,h,w] flattens to [n,1,h*w,C]
// with one row per spatial token.
Tensor to_tokens(const Tensor& x);
Tensor from_tokens(const Tensor& t, int c, int h, int w);

// Batched matmul on [n,1,p,q] x [m,1,q,r] with m in {n,1}; a broadcast
// right operand accumulates its gradient over the batch.
Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dy, Tensor* da,
                     Tensor* db);

Tensor transpose_last2(const Tensor& x);

Tensor slice_lastdim(const Tensor& x, int offset, int len);
void slice_lastdim_backward(const Tensor& dy, int offset, Tensor* dx);

Tensor concat_lastdim(const std::vector<const Tensor*>& xs);
void concat_lastdim_backward(const Tensor& dy, const std::vector<Tensor*>& dxs);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

double sum_all(const Tensor& x);

// Mean softmax cross-entropy over all (batch, pixel) positions of
// logits [n,K,h,w] against integer labels [n,h,w].
double cross_entropy_mean(const Tensor& logits, const LabelMap& labels);
void cross_entropy_mean_backward(const Tensor& logits, const LabelMap& labels, double dloss,
                                 Tensor* dlogits);

}  // namespace ops
}  // namespace metaseg
