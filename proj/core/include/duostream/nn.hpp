#pragma once

#include <string>
#include <vector>

#include "duostream/ops.hpp"
#include "duostream/tensor.hpp"

namespace duostream {

class Rng;

// Named parameter/buffer registry shared by all layers so optimizers and
// checkpoints can address state uniformly.
struct ParamRef {
  std::string name;
  Tensor tensor;
};
struct BufferRef {
  std::string name;
  std::vector<float>* values;
};

struct Conv2d {
  Tensor weight;  // [F,C,3,3]
  Tensor bias;    // [F]

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, Rng& rng);
  Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias); }
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct BatchNorm2d {
  Tensor gamma;
  Tensor beta;
  BatchNormStats running;
  float momentum = 0.1f;
  float eps = 1e-5f;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);
  Tensor forward(const Tensor& x, bool train) {
    return batchnorm2d(x, gamma, beta, running, train, momentum, eps);
  }
  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<BufferRef>& buffers);
};

struct Linear {
  Tensor weight;  // [K,D]
  Tensor bias;    // [K]

  Linear() = default;
  Linear(int in_dim, int out_dim, Rng& rng);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct GruCell {
  GruWeights w;

  GruCell() = default;
  GruCell(int input_dim, int hidden_dim, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& h) const {
    return gru_step(x, h, w);
  }
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

// conv -> relu -> bn, twice.
struct ConvBlock {
  Conv2d conv1, conv2;
  BatchNorm2d bn1, bn2;

  ConvBlock() = default;
  ConvBlock(int in_channels, int out_channels, Rng& rng);
  Tensor forward(const Tensor& x, bool train);
  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<BufferRef>& buffers);
};

}  // namespace duostream
