#pragma once

#include <vector>

#include "duostream/tensor.hpp"

namespace duostream {

// Operators for the two stream networks. Layout is NCHW throughout, float32
// storage with float64 accumulation inside reductions. No implicit
// broadcasting beyond the bias additions built into conv2d/linear.

// 3x3 convolution, stride 1, zero padding 1. kernel [F,C,3,3], bias [F].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

// 2x2 max pooling; H and W must be even. Gradient goes to the first
// (row-major) element of each window on ties.
Tensor maxpool2d(const Tensor& input);

Tensor relu(const Tensor& input);
Tensor sigmoid(const Tensor& input);
Tensor tanh_op(const Tensor& input);

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);

// input [N,D] x weight [K,D] + bias [K] -> [N,K].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

// [N,C,H,W] -> [N,C], mean over the spatial dims.
Tensor global_avg_pool(const Tensor& input);

// Per-sample softmax over H*W for single-channel maps [N,1,H,W],
// max-subtracted for stability.
Tensor softmax2d(const Tensor& logits);

// Channel concatenation of two [N,*,H,W] tensors.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Bilinear resize of [N,C,H,W] to [N,C,out_h,out_w] (half-pixel centers,
// edge clamped).
Tensor resize_bilinear(const Tensor& input, int out_h, int out_w);

// Samples image [C,H,W] at the given source pixel coordinates (one x,y pair
// per output cell, row-major grid_h x grid_w). Bilinear; coordinates outside
// the image contribute zero. Differentiable w.r.t. the image only.
Tensor grid_sample_zero(const Tensor& image, const std::vector<float>& src_x,
                        const std::vector<float>& src_y, int grid_h,
                        int grid_w);

// Stacks equal-shape [C,H,W] tensors into [N,C,H,W].
Tensor stack0(const std::vector<Tensor>& items);

// Per-channel batch statistics state (running estimates live in the layer).
struct BatchNormStats {
  std::vector<float> mean;
  std::vector<float> var;
};

// Train mode normalizes by batch statistics and updates the running stats
// with `momentum`; eval mode normalizes by the running stats. Requires
// N*H*W >= 2 in train mode.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma,
                   const Tensor& beta, BatchNormStats& running, bool train,
                   float momentum = 0.1f, float eps = 1e-5f);

// Gated recurrent unit cell parameters. w*: [H,D] input maps, u*: [H,H]
// hidden maps, b*: [H].
struct GruWeights {
  Tensor wz, uz, bz;
  Tensor wr, ur, br;
  Tensor wh, uh, bh;
};

// z = sigm(Wz x + Uz h + bz), r = sigm(Wr x + Ur h + br),
// cand = tanh(Wh x + Uh (r*h) + bh), h' = (1-z)*h + z*cand.
Tensor gru_step(const Tensor& x, const Tensor& h, const GruWeights& w);

// Mean binary cross-entropy with logits over all N*K entries; targets in
// {0,1}, stabilized against large logits.
Tensor bce_multilabel_loss(const Tensor& logits,
                           const std::vector<float>& targets);

// sum target*ln(target/(pred+eps)) per sample, averaged over the batch.
// Both maps must be nonnegative and sum to 1 per sample within 1e-4.
Tensor kl_saliency_loss(const Tensor& pred_map,
                        const std::vector<float>& target_map,
                        float eps = 1e-8f);

}  // namespace duostream
