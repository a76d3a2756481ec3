#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "duostream/nn.hpp"
#include "duostream/retina.hpp"
#include "duostream/tensor.hpp"

namespace duostream {

class IniFile;

enum class Objective { Saliency, Recognition };

// The two view concentrations used throughout.
constexpr double kWideViewA = 2.5;
constexpr double kNarrowViewA = 15.0;

// A stream is the (view concentration, learning objective) pair plus the
// backbone/head sizing. The four canonical streams:
//   (wide,   saliency)    "where"
//   (narrow, recognition) "what"
//   (narrow, saliency)    control-a
//   (wide,   recognition) control-b
struct StreamConfig {
  double view_a = kWideViewA;
  Objective objective = Objective::Saliency;
  std::vector<int> widths = {16, 32, 64, 128};  // four, strictly increasing
  int gru_hidden = 128;
  int num_classes = 4;
  int num_fixations = 8;
  int retina_grid = 64;
  int saliency_grid = 16;

  void validate() const;  // throws ConfigError
};

// Accumulated recurrent state of a recognition stream.
struct SceneRepresentation {
  Tensor hidden;  // [N, gru_hidden]
  Tensor logits;  // [N, num_classes]
};

// Four conv blocks with 2x2 pooling between adjacent blocks; block k output
// keeps spatial size 64/2^(k-1).
struct Backbone {
  std::array<ConvBlock, 4> blocks;

  Backbone() = default;
  Backbone(const std::vector<int>& widths, int in_channels, Rng& rng);
  std::array<Tensor, 4> forward(const Tensor& x, bool train);
  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<BufferRef>& buffers);
};

// Resizes blocks 3 and 4 to the saliency grid, concatenates channels, applies
// conv->relu->bn->conv(1 channel), then softmax over the map.
struct WhereHead {
  Conv2d conv1, conv2;
  BatchNorm2d bn1;

  WhereHead() = default;
  WhereHead(const std::vector<int>& widths, int saliency_grid, Rng& rng);
  Tensor forward(const Tensor& block3, const Tensor& block4, int saliency_grid,
                 bool train);
  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<BufferRef>& buffers);
};

// global_avg_pool -> GRU -> fully-connected logits.
struct WhatHead {
  GruCell gru;
  Linear fc;

  WhatHead() = default;
  WhatHead(int feature_dim, int hidden, int num_classes, Rng& rng);
  SceneRepresentation forward(const Tensor& block4,
                              const SceneRepresentation& prev);
  void collect(const std::string& prefix, std::vector<ParamRef>& params);
};

class Stream {
 public:
  Stream() = default;
  Stream(StreamConfig config, uint64_t seed);

  const StreamConfig& config() const { return config_; }
  uint64_t seed() const { return seed_; }

  RetinalParams retina_params(const Vec2& fixation) const;

  // Returns all four block outputs; inputs must be retina_grid square.
  std::array<Tensor, 4> backbone_forward(const Tensor& retinal, bool train);

  // Saliency probability map [N,1,g,g]; objective must be Saliency.
  Tensor saliency_map(const std::array<Tensor, 4>& features, bool train);

  // Recurrent update; objective must be Recognition.
  SceneRepresentation recognize(const Tensor& block4,
                                const SceneRepresentation& prev);
  SceneRepresentation initial_representation(int batch) const;

  std::vector<ParamRef> parameters();
  std::vector<BufferRef> buffers();
  std::vector<Tensor> parameter_tensors();
  void set_trainable(bool trainable);

  void save(const std::string& path) const;
  static Stream load(const std::string& path);

 private:
  StreamConfig config_;
  uint64_t seed_ = 0;
  Backbone backbone_;
  WhereHead where_head_;
  WhatHead what_head_;
};

Stream build_stream(const StreamConfig& config, uint64_t seed);

// [model] section keys: widths, gru_hidden, num_classes, num_fixations,
// wide_a, narrow_a. Which stream of the pair is built is chosen by role.
StreamConfig stream_config_from_ini(const IniFile& ini, Objective objective,
                                    bool wide_view);

}  // namespace duostream
