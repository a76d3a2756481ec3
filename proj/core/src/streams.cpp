#include "duostream/streams.hpp"

#include <cmath>

#include "duostream/config.hpp"
#include "duostream/errors.hpp"
#include "duostream/ops.hpp"
#include "duostream/rng.hpp"
#include "duostream/tnsr.hpp"

namespace duostream {

void StreamConfig::validate() const {
  if (view_a <= 1.0) throw ConfigError("stream: view concentration must exceed 1");
  if (widths.size() != 4)
    throw ConfigError("stream: exactly four channel widths required");
  for (size_t i = 1; i < widths.size(); ++i)
    if (widths[i] <= widths[i - 1])
      throw ConfigError("stream: channel widths must be strictly increasing");
  if (widths[0] <= 0) throw ConfigError("stream: channel widths must be positive");
  if (gru_hidden <= 0) throw ConfigError("stream: gru_hidden must be positive");
  if (num_classes <= 0) throw ConfigError("stream: num_classes must be positive");
  if (num_fixations <= 0)
    throw ConfigError("stream: num_fixations must be positive");
  if (retina_grid < 16 || retina_grid % 8 != 0)
    throw ConfigError("stream: retina grid must be a multiple of 8, >= 16");
}

Backbone::Backbone(const std::vector<int>& widths, int in_channels, Rng& rng) {
  int c = in_channels;
  for (int i = 0; i < 4; ++i) {
    blocks[static_cast<size_t>(i)] = ConvBlock(c, widths[static_cast<size_t>(i)], rng);
    c = widths[static_cast<size_t>(i)];
  }
}

std::array<Tensor, 4> Backbone::forward(const Tensor& x, bool train) {
  std::array<Tensor, 4> out;
  Tensor cur = x;
  for (int i = 0; i < 4; ++i) {
    if (i > 0) cur = maxpool2d(cur);
    cur = blocks[static_cast<size_t>(i)].forward(cur, train);
    out[static_cast<size_t>(i)] = cur;
  }
  return out;
}

void Backbone::collect(const std::string& prefix, std::vector<ParamRef>& params,
                       std::vector<BufferRef>& buffers) {
  for (int i = 0; i < 4; ++i)
    blocks[static_cast<size_t>(i)].collect(prefix + ".block" + std::to_string(i + 1),
                                           params, buffers);
}

WhereHead::WhereHead(const std::vector<int>& widths, int /*saliency_grid*/,
                     Rng& rng)
    : conv1(widths[2] + widths[3], widths[3], rng),
      conv2(widths[3], 1, rng),
      bn1(widths[3]) {}

Tensor WhereHead::forward(const Tensor& block3, const Tensor& block4,
                          int saliency_grid, bool train) {
  Tensor a = resize_bilinear(block3, saliency_grid, saliency_grid);
  Tensor b = resize_bilinear(block4, saliency_grid, saliency_grid);
  Tensor x = concat_channels(a, b);
  x = bn1.forward(relu(conv1.forward(x)), train);
  return softmax2d(conv2.forward(x));
}

void WhereHead::collect(const std::string& prefix, std::vector<ParamRef>& params,
                        std::vector<BufferRef>& buffers) {
  conv1.collect(prefix + ".conv1", params);
  conv2.collect(prefix + ".conv2", params);
  bn1.collect(prefix + ".bn1", params, buffers);
}

WhatHead::WhatHead(int feature_dim, int hidden, int num_classes, Rng& rng)
    : gru(feature_dim, hidden, rng), fc(hidden, num_classes, rng) {}

SceneRepresentation WhatHead::forward(const Tensor& block4,
                                      const SceneRepresentation& prev) {
  Tensor pooled = global_avg_pool(block4);
  Tensor hidden = gru.forward(pooled, prev.hidden);
  return {hidden, fc.forward(hidden)};
}

void WhatHead::collect(const std::string& prefix, std::vector<ParamRef>& params) {
  gru.collect(prefix + ".gru", params);
  fc.collect(prefix + ".fc", params);
}

Stream::Stream(StreamConfig config, uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
  config_.validate();
  Rng rng(mix_seed(seed, 0x73747265616dull));
  backbone_ = Backbone(config_.widths, 3, rng);
  if (config_.objective == Objective::Saliency)
    where_head_ = WhereHead(config_.widths, config_.saliency_grid, rng);
  else
    what_head_ = WhatHead(config_.widths[3], config_.gru_hidden,
                          config_.num_classes, rng);
}

RetinalParams Stream::retina_params(const Vec2& fixation) const {
  RetinalParams p;
  p.a = config_.view_a;
  p.grid = config_.retina_grid;
  p.fixation = fixation;
  return p;
}

std::array<Tensor, 4> Stream::backbone_forward(const Tensor& retinal,
                                               bool train) {
  if (retinal.shape().size() != 4 || retinal.dim(2) != config_.retina_grid ||
      retinal.dim(3) != config_.retina_grid)
    throw DimensionError("stream: retinal input must be [N,C,g,g]");
  return backbone_.forward(retinal, train);
}

Tensor Stream::saliency_map(const std::array<Tensor, 4>& features, bool train) {
  if (config_.objective != Objective::Saliency)
    throw DimensionError("stream: saliency_map on a recognition stream");
  return where_head_.forward(features[2], features[3], config_.saliency_grid,
                             train);
}

SceneRepresentation Stream::recognize(const Tensor& block4,
                                      const SceneRepresentation& prev) {
  if (config_.objective != Objective::Recognition)
    throw DimensionError("stream: recognize on a saliency stream");
  return what_head_.forward(block4, prev);
}

SceneRepresentation Stream::initial_representation(int batch) const {
  return {Tensor::zeros({batch, config_.gru_hidden}),
          Tensor::zeros({batch, config_.num_classes})};
}

std::vector<ParamRef> Stream::parameters() {
  std::vector<ParamRef> params;
  std::vector<BufferRef> buffers;
  backbone_.collect("backbone", params, buffers);
  if (config_.objective == Objective::Saliency)
    where_head_.collect("where_head", params, buffers);
  else
    what_head_.collect("what_head", params);
  return params;
}

std::vector<BufferRef> Stream::buffers() {
  std::vector<ParamRef> params;
  std::vector<BufferRef> buffers;
  backbone_.collect("backbone", params, buffers);
  if (config_.objective == Objective::Saliency)
    where_head_.collect("where_head", params, buffers);
  return buffers;
}

std::vector<Tensor> Stream::parameter_tensors() {
  std::vector<Tensor> out;
  for (auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

void Stream::set_trainable(bool trainable) {
  for (auto& p : parameters()) p.tensor.node()->requires_grad = trainable;
}

namespace {
constexpr const char* kMetaName = "__stream_meta__";
}

void Stream::save(const std::string& path) const {
  TnsrFile file;
  Stream& self = const_cast<Stream&>(*this);
  for (const auto& p : self.parameters())
    file[p.name] = tnsr_from_tensor(p.tensor);
  for (const auto& b : self.buffers()) {
    TnsrEntry e;
    e.shape = {static_cast<int>(b.values->size())};
    e.data = *b.values;
    file[b.name] = std::move(e);
  }
  TnsrEntry meta;
  std::vector<float> m = {
      static_cast<float>(config_.view_a),
      config_.objective == Objective::Saliency ? 0.0f : 1.0f,
      static_cast<float>(config_.widths[0]),
      static_cast<float>(config_.widths[1]),
      static_cast<float>(config_.widths[2]),
      static_cast<float>(config_.widths[3]),
      static_cast<float>(config_.gru_hidden),
      static_cast<float>(config_.num_classes),
      static_cast<float>(config_.num_fixations),
      static_cast<float>(config_.retina_grid),
      static_cast<float>(config_.saliency_grid),
      static_cast<float>(static_cast<uint32_t>(seed_)),
      static_cast<float>(static_cast<uint32_t>(seed_ >> 32)),
  };
  meta.shape = {static_cast<int>(m.size())};
  meta.data = std::move(m);
  file[kMetaName] = std::move(meta);
  tnsr_write(path, file);
}

Stream Stream::load(const std::string& path) {
  TnsrFile file = tnsr_read(path);
  auto it = file.find(kMetaName);
  if (it == file.end())
    throw MissingInputError("stream checkpoint lacks metadata: " + path);
  const std::vector<float>& m = it->second.data;
  if (m.size() < 13)
    throw MissingInputError("stream checkpoint metadata malformed: " + path);
  StreamConfig cfg;
  cfg.view_a = m[0];
  cfg.objective = m[1] == 0.0f ? Objective::Saliency : Objective::Recognition;
  cfg.widths = {static_cast<int>(m[2]), static_cast<int>(m[3]),
                static_cast<int>(m[4]), static_cast<int>(m[5])};
  cfg.gru_hidden = static_cast<int>(m[6]);
  cfg.num_classes = static_cast<int>(m[7]);
  cfg.num_fixations = static_cast<int>(m[8]);
  cfg.retina_grid = static_cast<int>(m[9]);
  cfg.saliency_grid = static_cast<int>(m[10]);
  const uint64_t seed = static_cast<uint64_t>(static_cast<uint32_t>(m[11])) |
                        (static_cast<uint64_t>(static_cast<uint32_t>(m[12])) << 32);

  Stream s(cfg, seed);
  for (auto& p : s.parameters()) {
    auto e = file.find(p.name);
    if (e == file.end())
      throw MissingInputError("stream checkpoint missing entry " + p.name);
    if (e->second.shape != p.tensor.shape())
      throw DimensionError("stream checkpoint shape mismatch for " + p.name);
    std::copy(e->second.data.begin(), e->second.data.end(), p.tensor.data());
  }
  for (auto& b : s.buffers()) {
    auto e = file.find(b.name);
    if (e == file.end())
      throw MissingInputError("stream checkpoint missing entry " + b.name);
    if (e->second.data.size() != b.values->size())
      throw DimensionError("stream checkpoint size mismatch for " + b.name);
    *b.values = e->second.data;
  }
  return s;
}

Stream build_stream(const StreamConfig& config, uint64_t seed) {
  return Stream(config, seed);
}

StreamConfig stream_config_from_ini(const IniFile& ini, Objective objective,
                                    bool wide_view) {
  StreamConfig cfg;
  const double wide = ini.get_double_or("model", "wide_a", kWideViewA);
  const double narrow = ini.get_double_or("model", "narrow_a", kNarrowViewA);
  cfg.view_a = wide_view ? wide : narrow;
  cfg.objective = objective;
  if (ini.has("model", "widths")) cfg.widths = ini.get_int_list("model", "widths");
  cfg.gru_hidden = static_cast<int>(
      ini.get_int_or("model", "gru_hidden", cfg.widths.size() == 4 ? cfg.widths[3] : 128));
  cfg.num_classes = static_cast<int>(ini.get_int_or("model", "num_classes", 4));
  cfg.num_fixations = static_cast<int>(ini.get_int_or("model", "num_fixations", 8));
  cfg.validate();
  return cfg;
}

}  // namespace duostream
