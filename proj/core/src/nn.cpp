#include "duostream/nn.hpp"

#include "duostream/rng.hpp"

namespace duostream {

Conv2d::Conv2d(int in_channels, int out_channels, Rng& rng) {
  weight = Tensor::uniform_init({out_channels, in_channels, 3, 3},
                                in_channels * 9, rng);
  bias = Tensor::uniform_init({out_channels}, in_channels * 9, rng);
}

void Conv2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

BatchNorm2d::BatchNorm2d(int channels) {
  gamma = Tensor::full({channels}, 1.0f, true);
  beta = Tensor::zeros({channels}, true);
  running.mean.assign(static_cast<size_t>(channels), 0.0f);
  running.var.assign(static_cast<size_t>(channels), 1.0f);
}

void BatchNorm2d::collect(const std::string& prefix,
                          std::vector<ParamRef>& params,
                          std::vector<BufferRef>& buffers) {
  params.push_back({prefix + ".gamma", gamma});
  params.push_back({prefix + ".beta", beta});
  buffers.push_back({prefix + ".running_mean", &running.mean});
  buffers.push_back({prefix + ".running_var", &running.var});
}

Linear::Linear(int in_dim, int out_dim, Rng& rng) {
  weight = Tensor::uniform_init({out_dim, in_dim}, in_dim, rng);
  bias = Tensor::uniform_init({out_dim}, in_dim, rng);
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

GruCell::GruCell(int input_dim, int hidden_dim, Rng& rng) {
  auto mk_in = [&] { return Tensor::uniform_init({hidden_dim, input_dim}, input_dim, rng); };
  auto mk_hid = [&] { return Tensor::uniform_init({hidden_dim, hidden_dim}, hidden_dim, rng); };
  auto mk_b = [&] { return Tensor::uniform_init({hidden_dim}, hidden_dim, rng); };
  w.wz = mk_in(); w.uz = mk_hid(); w.bz = mk_b();
  w.wr = mk_in(); w.ur = mk_hid(); w.br = mk_b();
  w.wh = mk_in(); w.uh = mk_hid(); w.bh = mk_b();
}

void GruCell::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".wz", w.wz});
  out.push_back({prefix + ".uz", w.uz});
  out.push_back({prefix + ".bz", w.bz});
  out.push_back({prefix + ".wr", w.wr});
  out.push_back({prefix + ".ur", w.ur});
  out.push_back({prefix + ".br", w.br});
  out.push_back({prefix + ".wh", w.wh});
  out.push_back({prefix + ".uh", w.uh});
  out.push_back({prefix + ".bh", w.bh});
}

ConvBlock::ConvBlock(int in_channels, int out_channels, Rng& rng)
    : conv1(in_channels, out_channels, rng),
      conv2(out_channels, out_channels, rng),
      bn1(out_channels),
      bn2(out_channels) {}

Tensor ConvBlock::forward(const Tensor& x, bool train) {
  Tensor y = bn1.forward(relu(conv1.forward(x)), train);
  return bn2.forward(relu(conv2.forward(y)), train);
}

void ConvBlock::collect(const std::string& prefix,
                        std::vector<ParamRef>& params,
                        std::vector<BufferRef>& buffers) {
  conv1.collect(prefix + ".conv1", params);
  conv2.collect(prefix + ".conv2", params);
  bn1.collect(prefix + ".bn1", params, buffers);
  bn2.collect(prefix + ".bn2", params, buffers);
}

}  // namespace duostream
