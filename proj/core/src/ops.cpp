#include "duostream/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <string>

#include "duostream/errors.hpp"

namespace duostream {

namespace {

using MatRM =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;
using MatCM = Eigen::MatrixXf;

NodePtr alloc_output(Shape shape, std::vector<NodePtr> parents) {
  auto node = std::make_shared<TensorNode>();
  node->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
  node->shape = std::move(shape);
  bool rg = false;
  if (grad_enabled()) {
    for (const auto& p : parents) rg = rg || p->requires_grad;
  }
  node->requires_grad = rg;
  if (rg) node->parents = std::move(parents);
  return node;
}

void require(bool cond, const char* msg) {
  if (!cond) throw DimensionError(msg);
}

// Unpacks NCHW into 3x3 patch columns: row = c*9 + ky*3 + kx,
// column = n*H*W + y*W + x. Zero padding of one pixel.
void im2col3x3(const float* input, int n_batch, int channels, int height,
               int width, MatCM& cols) {
  const int hw = height * width;
  cols.resize(channels * 9, static_cast<Eigen::Index>(n_batch) * hw);
  for (int n = 0; n < n_batch; ++n) {
    const float* img = input + static_cast<int64_t>(n) * channels * hw;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        float* col = cols.col(static_cast<Eigen::Index>(n) * hw + y * width + x).data();
        for (int c = 0; c < channels; ++c) {
          const float* plane = img + static_cast<int64_t>(c) * hw;
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= height) {
              col[c * 9 + ky * 3 + 0] = 0.0f;
              col[c * 9 + ky * 3 + 1] = 0.0f;
              col[c * 9 + ky * 3 + 2] = 0.0f;
              continue;
            }
            const float* row = plane + static_cast<int64_t>(sy) * width;
            for (int kx = 0; kx < 3; ++kx) {
              const int sx = x + kx - 1;
              col[c * 9 + ky * 3 + kx] =
                  (sx < 0 || sx >= width) ? 0.0f : row[sx];
            }
          }
        }
      }
    }
  }
}

void col2im3x3(const MatCM& cols, int n_batch, int channels, int height,
               int width, float* input_grad) {
  const int hw = height * width;
  for (int n = 0; n < n_batch; ++n) {
    float* img = input_grad + static_cast<int64_t>(n) * channels * hw;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const float* col =
            cols.col(static_cast<Eigen::Index>(n) * hw + y * width + x).data();
        for (int c = 0; c < channels; ++c) {
          float* plane = img + static_cast<int64_t>(c) * hw;
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= height) continue;
            float* row = plane + static_cast<int64_t>(sy) * width;
            for (int kx = 0; kx < 3; ++kx) {
              const int sx = x + kx - 1;
              if (sx < 0 || sx >= width) continue;
              row[sx] += col[c * 9 + ky * 3 + kx];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  require(input.shape().size() == 4, "conv2d: input must be NCHW");
  require(kernel.shape().size() == 4, "conv2d: kernel must be FC33");
  require(kernel.dim(2) == 3 && kernel.dim(3) == 3,
          "conv2d: kernel spatial size must be 3x3");
  require(kernel.dim(1) == input.dim(1),
          "conv2d: kernel channels do not match input channels");
  require(bias.shape().size() == 1 && bias.dim(0) == kernel.dim(0),
          "conv2d: bias length must equal filter count");

  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  const int f = kernel.dim(0);
  const int hw = h * w;

  auto out =
      alloc_output({n, f, h, w}, {input.node(), kernel.node(), bias.node()});

  {
    MatCM cols;
    im2col3x3(input.data(), n, c, h, w, cols);
    CMapRM kmat(kernel.data(), f, c * 9);
    MatCM y = kmat * cols;  // [F, N*HW]
    const float* bptr = bias.data();
    float* optr = out->data.data();
    for (int ni = 0; ni < n; ++ni) {
      for (int fi = 0; fi < f; ++fi) {
        const float b = bptr[fi];
        float* dst = optr + (static_cast<int64_t>(ni) * f + fi) * hw;
        for (int i = 0; i < hw; ++i)
          dst[i] = y(fi, static_cast<Eigen::Index>(ni) * hw + i) + b;
      }
    }
  }

  if (out->requires_grad) {
    NodePtr in_node = input.node(), k_node = kernel.node(),
            b_node = bias.node();
    out->backward_fn = [in_node, k_node, b_node, n, c, h, w,
                        f](TensorNode& self) {
      const int hw = h * w;
      MatCM dy(f, static_cast<Eigen::Index>(n) * hw);
      for (int ni = 0; ni < n; ++ni)
        for (int fi = 0; fi < f; ++fi) {
          const float* src =
              self.grad.data() + (static_cast<int64_t>(ni) * f + fi) * hw;
          for (int i = 0; i < hw; ++i)
            dy(fi, static_cast<Eigen::Index>(ni) * hw + i) = src[i];
        }

      if (b_node->requires_grad) {
        float* db = b_node->grad_ptr();
        for (int fi = 0; fi < f; ++fi) {
          double acc = 0.0;
          for (Eigen::Index i = 0; i < dy.cols(); ++i) acc += dy(fi, i);
          db[fi] += static_cast<float>(acc);
        }
      }
      if (k_node->requires_grad || in_node->requires_grad) {
        if (k_node->requires_grad) {
          MatCM cols;
          im2col3x3(in_node->data.data(), n, c, h, w, cols);
          MapRM dk(k_node->grad_ptr(), f, c * 9);
          dk.noalias() += dy * cols.transpose();
        }
        if (in_node->requires_grad) {
          CMapRM kmat(k_node->data.data(), f, c * 9);
          MatCM dcols = kmat.transpose() * dy;  // [C*9, N*HW]
          col2im3x3(dcols, n, c, h, w, in_node->grad_ptr());
        }
      }
    };
  }
  return Tensor(out);
}

Tensor maxpool2d(const Tensor& input) {
  require(input.shape().size() == 4, "maxpool2d: input must be NCHW");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  require(h % 2 == 0 && w % 2 == 0, "maxpool2d: spatial dims must be even");
  const int oh = h / 2, ow = w / 2;

  auto out = alloc_output({n, c, oh, ow}, {input.node()});
  std::vector<int32_t> argmax(static_cast<size_t>(out->data.size()));

  const float* in = input.data();
  float* o = out->data.data();
  int64_t oidx = 0;
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const float* plane = in + (static_cast<int64_t>(ni) * c + ci) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++oidx) {
          const int y0 = oy * 2, x0 = ox * 2;
          // strict > keeps the first row-major element on ties
          int best = y0 * w + x0;
          float bv = plane[best];
          const int cand[3] = {y0 * w + x0 + 1, (y0 + 1) * w + x0,
                               (y0 + 1) * w + x0 + 1};
          for (int k = 0; k < 3; ++k) {
            if (plane[cand[k]] > bv) {
              bv = plane[cand[k]];
              best = cand[k];
            }
          }
          o[oidx] = bv;
          argmax[static_cast<size_t>(oidx)] =
              static_cast<int32_t>((static_cast<int64_t>(ni) * c + ci) * h * w + best);
        }
      }
    }
  }

  if (out->requires_grad) {
    NodePtr in_node = input.node();
    out->backward_fn = [in_node, argmax = std::move(argmax)](TensorNode& self) {
      float* dst = in_node->grad_ptr();
      for (size_t i = 0; i < self.grad.size(); ++i)
        dst[argmax[i]] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor relu(const Tensor& input) {
  auto out = alloc_output(input.shape(), {input.node()});
  const float* in = input.data();
  float* o = out->data.data();
  const int64_t n = input.size();
  for (int64_t i = 0; i < n; ++i) o[i] = in[i] > 0.0f ? in[i] : 0.0f;
  if (out->requires_grad) {
    NodePtr in_node = input.node();
    out->backward_fn = [in_node](TensorNode& self) {
      float* dst = in_node->grad_ptr();
      const float* x = in_node->data.data();
      for (size_t i = 0; i < self.grad.size(); ++i)
        if (x[i] > 0.0f) dst[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor sigmoid(const Tensor& input) {
  auto out = alloc_output(input.shape(), {input.node()});
  const float* in = input.data();
  float* o = out->data.data();
  const int64_t n = input.size();
  for (int64_t i = 0; i < n; ++i) o[i] = 1.0f / (1.0f + std::exp(-in[i]));
  if (out->requires_grad) {
    NodePtr in_node = input.node();
    out->backward_fn = [in_node](TensorNode& self) {
      float* dst = in_node->grad_ptr();
      const float* y = self.data.data();
      for (size_t i = 0; i < self.grad.size(); ++i)
        dst[i] += self.grad[i] * y[i] * (1.0f - y[i]);
    };
  }
  return Tensor(out);
}

Tensor tanh_op(const Tensor& input) {
  auto out = alloc_output(input.shape(), {input.node()});
  const float* in = input.data();
  float* o = out->data.data();
  const int64_t n = input.size();
  for (int64_t i = 0; i < n; ++i) o[i] = std::tanh(in[i]);
  if (out->requires_grad) {
    NodePtr in_node = input.node();
    out->backward_fn = [in_node](TensorNode& self) {
      float* dst = in_node->grad_ptr();
      const float* y = self.data.data();
      for (size_t i = 0; i < self.grad.size(); ++i)
        dst[i] += self.grad[i] * (1.0f - y[i] * y[i]);
    };
  }
  return Tensor(out);
}

namespace {

enum class EwKind { Add, Sub, Mul };

Tensor elementwise(const Tensor& a, const Tensor& b, EwKind kind) {
  require(a.shape() == b.shape(), "elementwise op: shape mismatch");
  auto out = alloc_output(a.shape(), {a.node(), b.node()});
  const float* pa = a.data();
  const float* pb = b.data();
  float* o = out->data.data();
  const int64_t n = a.size();
  switch (kind) {
    case EwKind::Add:
      for (int64_t i = 0; i < n; ++i) o[i] = pa[i] + pb[i];
      break;
    case EwKind::Sub:
      for (int64_t i = 0; i < n; ++i) o[i] = pa[i] - pb[i];
      break;
    case EwKind::Mul:
      for (int64_t i = 0; i < n; ++i) o[i] = pa[i] * pb[i];
      break;
  }
  if (out->requires_grad) {
    NodePtr na = a.node(), nb = b.node();
    out->backward_fn = [na, nb, kind](TensorNode& self) {
      const size_t n = self.grad.size();
      if (na->requires_grad) {
        float* da = na->grad_ptr();
        if (kind == EwKind::Mul) {
          const float* vb = nb->data.data();
          for (size_t i = 0; i < n; ++i) da[i] += self.grad[i] * vb[i];
        } else {
          for (size_t i = 0; i < n; ++i) da[i] += self.grad[i];
        }
      }
      if (nb->requires_grad) {
        float* db = nb->grad_ptr();
        switch (kind) {
          case EwKind::Add:
            for (size_t i = 0; i < n; ++i) db[i] += self.grad[i];
            break;
          case EwKind::Sub:
            for (size_t i = 0; i < n; ++i) db[i] -= self.grad[i];
            break;
          case EwKind::Mul: {
            const float* va = na->data.data();
            for (size_t i = 0; i < n; ++i) db[i] += self.grad[i] * va[i];
            break;
          }
        }
      }
    };
  }
  return Tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, EwKind::Add);
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, EwKind::Sub);
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, EwKind::Mul);
}

Tensor scale(const Tensor& a, float factor) {
  auto out = alloc_output(a.shape(), {a.node()});
  const float* pa = a.data();
  float* o = out->data.data();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) o[i] = pa[i] * factor;
  if (out->requires_grad) {
    NodePtr na = a.node();
    out->backward_fn = [na, factor](TensorNode& self) {
      float* da = na->grad_ptr();
      for (size_t i = 0; i < self.grad.size(); ++i)
        da[i] += self.grad[i] * factor;
    };
  }
  return Tensor(out);
}

namespace {

// y [N,K] = x [N,D] * w [K,D]^T (+ bias when given)
Tensor affine(const Tensor& input, const Tensor& weight, const Tensor* bias) {
  require(input.shape().size() == 2, "linear: input must be [N,D]");
  require(weight.shape().size() == 2, "linear: weight must be [K,D]");
  require(input.dim(1) == weight.dim(1), "linear: inner dims do not match");
  const int n = input.dim(0), d = input.dim(1), k = weight.dim(0);
  if (bias)
    require(bias->shape().size() == 1 && bias->dim(0) == k,
            "linear: bias length must equal output dim");

  std::vector<NodePtr> parents{input.node(), weight.node()};
  if (bias) parents.push_back(bias->node());
  auto out = alloc_output({n, k}, std::move(parents));

  CMapRM x(input.data(), n, d);
  CMapRM w(weight.data(), k, d);
  MapRM y(out->data.data(), n, k);
  y.noalias() = x * w.transpose();
  if (bias) {
    const float* b = bias->data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) y(i, j) += b[j];
  }

  if (out->requires_grad) {
    NodePtr nx = input.node(), nw = weight.node(),
            nb = bias ? bias->node() : nullptr;
    out->backward_fn = [nx, nw, nb, n, d, k](TensorNode& self) {
      CMapRM dy(self.grad.data(), n, k);
      if (nx->requires_grad) {
        CMapRM w(nw->data.data(), k, d);
        MapRM dx(nx->grad_ptr(), n, d);
        dx.noalias() += dy * w;
      }
      if (nw->requires_grad) {
        CMapRM x(nx->data.data(), n, d);
        MapRM dw(nw->grad_ptr(), k, d);
        dw.noalias() += dy.transpose() * x;
      }
      if (nb && nb->requires_grad) {
        float* db = nb->grad_ptr();
        for (int j = 0; j < k; ++j) {
          double acc = 0.0;
          for (int i = 0; i < n; ++i) acc += dy(i, j);
          db[j] += static_cast<float>(acc);
        }
      }
    };
  }
  return Tensor(out);
}

}  // namespace

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  return affine(input, weight, &bias);
}

Tensor global_avg_pool(const Tensor& input) {
  require(input.shape().size() == 4, "global_avg_pool: input must be NCHW");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  const int hw = h * w;
  auto out = alloc_output({n, c}, {input.node()});
  const float* in = input.data();
  float* o = out->data.data();
  for (int i = 0; i < n * c; ++i) {
    const float* plane = in + static_cast<int64_t>(i) * hw;
    double acc = 0.0;
    for (int j = 0; j < hw; ++j) acc += plane[j];
    o[i] = static_cast<float>(acc / hw);
  }
  if (out->requires_grad) {
    NodePtr in_node = input.node();
    out->backward_fn = [in_node, hw](TensorNode& self) {
      float* dst = in_node->grad_ptr();
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const float g = self.grad[i] / static_cast<float>(hw);
        float* plane = dst + i * static_cast<size_t>(hw);
        for (int j = 0; j < hw; ++j) plane[j] += g;
      }
    };
  }
  return Tensor(out);
}

Tensor softmax2d(const Tensor& logits) {
  require(logits.shape().size() == 4 && logits.dim(1) == 1,
          "softmax2d: input must be [N,1,H,W]");
  const int n = logits.dim(0);
  const int m = logits.dim(2) * logits.dim(3);
  auto out = alloc_output(logits.shape(), {logits.node()});
  const float* in = logits.data();
  float* o = out->data.data();
  for (int ni = 0; ni < n; ++ni) {
    const float* x = in + static_cast<int64_t>(ni) * m;
    float* y = o + static_cast<int64_t>(ni) * m;
    float mx = x[0];
    for (int i = 1; i < m; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
      y[i] = std::exp(x[i] - mx);
      sum += y[i];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int i = 0; i < m; ++i) y[i] *= inv;
  }
  if (out->requires_grad) {
    NodePtr in_node = logits.node();
    out->backward_fn = [in_node, n, m](TensorNode& self) {
      float* dst = in_node->grad_ptr();
      for (int ni = 0; ni < n; ++ni) {
        const float* y = self.data.data() + static_cast<int64_t>(ni) * m;
        const float* dy = self.grad.data() + static_cast<int64_t>(ni) * m;
        float* dx = dst + static_cast<int64_t>(ni) * m;
        double dot = 0.0;
        for (int i = 0; i < m; ++i) dot += static_cast<double>(dy[i]) * y[i];
        const float d = static_cast<float>(dot);
        for (int i = 0; i < m; ++i) dx[i] += y[i] * (dy[i] - d);
      }
    };
  }
  return Tensor(out);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 4 && b.shape().size() == 4,
          "concat_channels: inputs must be NCHW");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: non-channel dims must match");
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2),
            w = a.dim(3);
  const int hw = h * w;
  auto out = alloc_output({n, ca + cb, h, w}, {a.node(), b.node()});
  float* o = out->data.data();
  for (int ni = 0; ni < n; ++ni) {
    std::memcpy(o + static_cast<int64_t>(ni) * (ca + cb) * hw,
                a.data() + static_cast<int64_t>(ni) * ca * hw,
                sizeof(float) * static_cast<size_t>(ca) * hw);
    std::memcpy(o + (static_cast<int64_t>(ni) * (ca + cb) + ca) * hw,
                b.data() + static_cast<int64_t>(ni) * cb * hw,
                sizeof(float) * static_cast<size_t>(cb) * hw);
  }
  if (out->requires_grad) {
    NodePtr na = a.node(), nb = b.node();
    out->backward_fn = [na, nb, n, ca, cb, hw](TensorNode& self) {
      for (int ni = 0; ni < n; ++ni) {
        const float* g = self.grad.data() + static_cast<int64_t>(ni) * (ca + cb) * hw;
        if (na->requires_grad) {
          float* da = na->grad_ptr() + static_cast<int64_t>(ni) * ca * hw;
          for (int i = 0; i < ca * hw; ++i) da[i] += g[i];
        }
        if (nb->requires_grad) {
          float* db = nb->grad_ptr() + static_cast<int64_t>(ni) * cb * hw;
          for (int i = 0; i < cb * hw; ++i) db[i] += g[ca * hw + i];
        }
      }
    };
  }
  return Tensor(out);
}

Tensor resize_bilinear(const Tensor& input, int out_h, int out_w) {
  require(input.shape().size() == 4, "resize_bilinear: input must be NCHW");
  require(out_h > 0 && out_w > 0, "resize_bilinear: output dims must be positive");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  auto out = alloc_output({n, c, out_h, out_w}, {input.node()});

  // Half-pixel centers, clamped at the borders.
  struct Tap {
    int i0, i1;
    float w1;
  };
  std::vector<Tap> ty(static_cast<size_t>(out_h)), tx(static_cast<size_t>(out_w));
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int i = 0; i < out_h; ++i) {
    double p = (i + 0.5) * sy - 0.5;
    p = std::min(std::max(p, 0.0), static_cast<double>(h - 1));
    const int i0 = static_cast<int>(p);
    ty[static_cast<size_t>(i)] = {i0, std::min(i0 + 1, h - 1),
                                  static_cast<float>(p - i0)};
  }
  for (int i = 0; i < out_w; ++i) {
    double p = (i + 0.5) * sx - 0.5;
    p = std::min(std::max(p, 0.0), static_cast<double>(w - 1));
    const int i0 = static_cast<int>(p);
    tx[static_cast<size_t>(i)] = {i0, std::min(i0 + 1, w - 1),
                                  static_cast<float>(p - i0)};
  }

  const float* in = input.data();
  float* o = out->data.data();
  for (int p = 0; p < n * c; ++p) {
    const float* plane = in + static_cast<int64_t>(p) * h * w;
    float* dst = o + static_cast<int64_t>(p) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const Tap& a = ty[static_cast<size_t>(y)];
      for (int x = 0; x < out_w; ++x) {
        const Tap& b = tx[static_cast<size_t>(x)];
        const float v00 = plane[a.i0 * w + b.i0];
        const float v01 = plane[a.i0 * w + b.i1];
        const float v10 = plane[a.i1 * w + b.i0];
        const float v11 = plane[a.i1 * w + b.i1];
        dst[y * out_w + x] = (1 - a.w1) * ((1 - b.w1) * v00 + b.w1 * v01) +
                             a.w1 * ((1 - b.w1) * v10 + b.w1 * v11);
      }
    }
  }

  if (out->requires_grad) {
    NodePtr in_node = input.node();
    out->backward_fn = [in_node, ty = std::move(ty), tx = std::move(tx), n, c,
                        h, w, out_h, out_w](TensorNode& self) {
      float* dst = in_node->grad_ptr();
      for (int p = 0; p < n * c; ++p) {
        float* plane = dst + static_cast<int64_t>(p) * h * w;
        const float* g = self.grad.data() + static_cast<int64_t>(p) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
          const Tap& a = ty[static_cast<size_t>(y)];
          for (int x = 0; x < out_w; ++x) {
            const Tap& b = tx[static_cast<size_t>(x)];
            const float gy = g[y * out_w + x];
            plane[a.i0 * w + b.i0] += (1 - a.w1) * (1 - b.w1) * gy;
            plane[a.i0 * w + b.i1] += (1 - a.w1) * b.w1 * gy;
            plane[a.i1 * w + b.i0] += a.w1 * (1 - b.w1) * gy;
            plane[a.i1 * w + b.i1] += a.w1 * b.w1 * gy;
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor grid_sample_zero(const Tensor& image, const std::vector<float>& src_x,
                        const std::vector<float>& src_y, int grid_h,
                        int grid_w) {
  require(image.shape().size() == 3, "grid_sample_zero: image must be CHW");
  const size_t cells = static_cast<size_t>(grid_h) * grid_w;
  require(src_x.size() == cells && src_y.size() == cells,
          "grid_sample_zero: grid size mismatch");
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);

  auto out = alloc_output({c, grid_h, grid_w}, {image.node()});
  const float* img = image.data();
  float* o = out->data.data();
  for (size_t cell = 0; cell < cells; ++cell) {
    const float sx = src_x[cell], sy = src_y[cell];
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const float fx = sx - x0, fy = sy - y0;
    const float ws[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx),
                         fy * fx};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int ci = 0; ci < c; ++ci) {
      const float* plane = img + static_cast<int64_t>(ci) * h * w;
      float v = 0.0f;
      for (int k = 0; k < 4; ++k) {
        if (xs[k] >= 0 && xs[k] < w && ys[k] >= 0 && ys[k] < h)
          v += ws[k] * plane[ys[k] * w + xs[k]];
      }
      o[static_cast<size_t>(ci) * cells + cell] = v;
    }
  }

  if (out->requires_grad) {
    NodePtr in_node = image.node();
    out->backward_fn = [in_node, src_x, src_y, cells, c, h, w](TensorNode& self) {
      float* dst = in_node->grad_ptr();
      for (size_t cell = 0; cell < cells; ++cell) {
        const float sx = src_x[cell], sy = src_y[cell];
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const float fx = sx - x0, fy = sy - y0;
        const float ws[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx),
                             fy * fx};
        const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
        const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int ci = 0; ci < c; ++ci) {
          const float g = self.grad[static_cast<size_t>(ci) * cells + cell];
          if (g == 0.0f) continue;
          float* plane = dst + static_cast<int64_t>(ci) * h * w;
          for (int k = 0; k < 4; ++k) {
            if (xs[k] >= 0 && xs[k] < w && ys[k] >= 0 && ys[k] < h)
              plane[ys[k] * w + xs[k]] += ws[k] * g;
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor stack0(const std::vector<Tensor>& items) {
  require(!items.empty(), "stack0: empty input");
  const Shape& s0 = items[0].shape();
  std::vector<NodePtr> parents;
  parents.reserve(items.size());
  for (const auto& t : items) {
    require(t.shape() == s0, "stack0: shapes must match");
    parents.push_back(t.node());
  }
  Shape out_shape;
  out_shape.push_back(static_cast<int>(items.size()));
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  const int64_t stride = shape_numel(s0);
  auto out = alloc_output(std::move(out_shape), parents);
  float* o = out->data.data();
  for (size_t i = 0; i < items.size(); ++i)
    std::memcpy(o + static_cast<int64_t>(i) * stride, items[i].data(),
                sizeof(float) * static_cast<size_t>(stride));
  if (out->requires_grad) {
    out->backward_fn = [parents, stride](TensorNode& self) {
      for (size_t i = 0; i < parents.size(); ++i) {
        if (!parents[i]->requires_grad) continue;
        float* dst = parents[i]->grad_ptr();
        const float* g = self.grad.data() + static_cast<int64_t>(i) * stride;
        for (int64_t j = 0; j < stride; ++j) dst[j] += g[j];
      }
    };
  }
  return Tensor(out);
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma,
                   const Tensor& beta, BatchNormStats& running, bool train,
                   float momentum, float eps) {
  require(input.shape().size() == 4, "batchnorm2d: input must be NCHW");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  require(gamma.shape().size() == 1 && gamma.dim(0) == c,
          "batchnorm2d: gamma must have one value per channel");
  require(beta.shape().size() == 1 && beta.dim(0) == c,
          "batchnorm2d: beta must have one value per channel");
  require(running.mean.size() == static_cast<size_t>(c) &&
              running.var.size() == static_cast<size_t>(c),
          "batchnorm2d: running stats size mismatch");
  const int64_t m = static_cast<int64_t>(n) * h * w;
  if (train) require(m >= 2, "batchnorm2d: train mode needs N*H*W >= 2");

  auto out = alloc_output(input.shape(), {input.node(), gamma.node(), beta.node()});

  std::vector<float> mean_c(static_cast<size_t>(c)), inv_c(static_cast<size_t>(c));
  const float* in = input.data();
  const int hw = h * w;
  for (int ci = 0; ci < c; ++ci) {
    double mu, var;
    if (train) {
      double acc = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const float* plane = in + (static_cast<int64_t>(ni) * c + ci) * hw;
        for (int i = 0; i < hw; ++i) acc += plane[i];
      }
      mu = acc / static_cast<double>(m);
      double vacc = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const float* plane = in + (static_cast<int64_t>(ni) * c + ci) * hw;
        for (int i = 0; i < hw; ++i) {
          const double d = plane[i] - mu;
          vacc += d * d;
        }
      }
      var = vacc / static_cast<double>(m);
      const double var_unbiased = vacc / static_cast<double>(m - 1);
      running.mean[static_cast<size_t>(ci)] =
          (1.0f - momentum) * running.mean[static_cast<size_t>(ci)] +
          momentum * static_cast<float>(mu);
      running.var[static_cast<size_t>(ci)] =
          (1.0f - momentum) * running.var[static_cast<size_t>(ci)] +
          momentum * static_cast<float>(var_unbiased);
    } else {
      mu = running.mean[static_cast<size_t>(ci)];
      var = running.var[static_cast<size_t>(ci)];
    }
    mean_c[static_cast<size_t>(ci)] = static_cast<float>(mu);
    inv_c[static_cast<size_t>(ci)] =
        static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(eps)));
  }

  const float* g = gamma.data();
  const float* b = beta.data();
  float* o = out->data.data();
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const float* src = in + (static_cast<int64_t>(ni) * c + ci) * hw;
      float* dst = o + (static_cast<int64_t>(ni) * c + ci) * hw;
      const float mu = mean_c[static_cast<size_t>(ci)];
      const float inv = inv_c[static_cast<size_t>(ci)];
      const float gc = g[ci], bc = b[ci];
      for (int i = 0; i < hw; ++i) dst[i] = (src[i] - mu) * inv * gc + bc;
    }
  }

  if (out->requires_grad) {
    NodePtr nx = input.node(), ng = gamma.node(), nb = beta.node();
    out->backward_fn = [nx, ng, nb, mean_c = std::move(mean_c),
                        inv_c = std::move(inv_c), n, c, hw, m,
                        train](TensorNode& self) {
      for (int ci = 0; ci < c; ++ci) {
        const float mu = mean_c[static_cast<size_t>(ci)];
        const float inv = inv_c[static_cast<size_t>(ci)];
        const float gc = ng->data[static_cast<size_t>(ci)];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int ni = 0; ni < n; ++ni) {
          const int64_t off = (static_cast<int64_t>(ni) * c + ci) * hw;
          const float* dy = self.grad.data() + off;
          const float* x = nx->data.data() + off;
          for (int i = 0; i < hw; ++i) {
            sum_dy += dy[i];
            sum_dy_xhat += static_cast<double>(dy[i]) * (x[i] - mu) * inv;
          }
        }
        if (ng->requires_grad)
          ng->grad_ptr()[ci] += static_cast<float>(sum_dy_xhat);
        if (nb->requires_grad) nb->grad_ptr()[ci] += static_cast<float>(sum_dy);
        if (nx->requires_grad) {
          float* dx = nx->grad_ptr();
          const float mean_dy = static_cast<float>(sum_dy / static_cast<double>(m));
          const float mean_dy_xhat =
              static_cast<float>(sum_dy_xhat / static_cast<double>(m));
          for (int ni = 0; ni < n; ++ni) {
            const int64_t off = (static_cast<int64_t>(ni) * c + ci) * hw;
            const float* dy = self.grad.data() + off;
            const float* x = nx->data.data() + off;
            float* d = dx + off;
            if (train) {
              for (int i = 0; i < hw; ++i) {
                const float xhat = (x[i] - mu) * inv;
                d[i] += gc * inv * (dy[i] - mean_dy - xhat * mean_dy_xhat);
              }
            } else {
              for (int i = 0; i < hw; ++i) d[i] += gc * inv * dy[i];
            }
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor gru_step(const Tensor& x, const Tensor& h, const GruWeights& w) {
  require(x.shape().size() == 2 && h.shape().size() == 2,
          "gru_step: x and h must be 2-d");
  require(x.dim(0) == h.dim(0), "gru_step: batch sizes differ");
  const Tensor z = sigmoid(add(linear(x, w.wz, w.bz), affine(h, w.uz, nullptr)));
  const Tensor r = sigmoid(add(linear(x, w.wr, w.br), affine(h, w.ur, nullptr)));
  const Tensor cand =
      tanh_op(add(linear(x, w.wh, w.bh), affine(mul(r, h), w.uh, nullptr)));
  const Tensor one = Tensor::full(z.shape(), 1.0f);
  return add(mul(sub(one, z), h), mul(z, cand));
}

Tensor bce_multilabel_loss(const Tensor& logits,
                           const std::vector<float>& targets) {
  require(logits.shape().size() == 2, "bce_multilabel_loss: logits must be [N,K]");
  require(targets.size() == static_cast<size_t>(logits.size()),
          "bce_multilabel_loss: target count mismatch");
  const int64_t n = logits.size();
  auto out = alloc_output({1}, {logits.node()});
  const float* x = logits.data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double xi = x[i];
    const double ti = targets[static_cast<size_t>(i)];
    acc += std::max(xi, 0.0) - xi * ti + std::log1p(std::exp(-std::abs(xi)));
  }
  out->data[0] = static_cast<float>(acc / static_cast<double>(n));
  if (out->requires_grad) {
    NodePtr nx = logits.node();
    out->backward_fn = [nx, targets, n](TensorNode& self) {
      const float g = self.grad[0] / static_cast<float>(n);
      float* dx = nx->grad_ptr();
      const float* x = nx->data.data();
      for (int64_t i = 0; i < n; ++i) {
        const float s = 1.0f / (1.0f + std::exp(-x[i]));
        dx[i] += g * (s - targets[static_cast<size_t>(i)]);
      }
    };
  }
  return Tensor(out);
}

Tensor kl_saliency_loss(const Tensor& pred_map,
                        const std::vector<float>& target_map, float eps) {
  require(pred_map.shape().size() >= 2, "kl_saliency_loss: pred must be batched");
  require(target_map.size() == static_cast<size_t>(pred_map.size()),
          "kl_saliency_loss: target size mismatch");
  const int n = pred_map.dim(0);
  const int64_t m = pred_map.size() / n;
  const float* p = pred_map.data();
  for (int ni = 0; ni < n; ++ni) {
    double sp = 0.0, st = 0.0;
    for (int64_t i = 0; i < m; ++i) {
      const int64_t idx = static_cast<int64_t>(ni) * m + i;
      if (p[idx] < 0.0f || target_map[static_cast<size_t>(idx)] < 0.0f)
        throw DimensionError("kl_saliency_loss: maps must be nonnegative");
      sp += p[idx];
      st += target_map[static_cast<size_t>(idx)];
    }
    if (std::abs(sp - 1.0) > 1e-4 || std::abs(st - 1.0) > 1e-4)
      throw DimensionError("kl_saliency_loss: maps must sum to 1 within 1e-4");
  }

  auto out = alloc_output({1}, {pred_map.node()});
  double acc = 0.0;
  for (int ni = 0; ni < n; ++ni) {
    for (int64_t i = 0; i < m; ++i) {
      const int64_t idx = static_cast<int64_t>(ni) * m + i;
      const double t = target_map[static_cast<size_t>(idx)];
      if (t > 0.0)
        acc += t * std::log(t / (static_cast<double>(p[idx]) + eps));
    }
  }
  out->data[0] = static_cast<float>(acc / n);
  if (out->requires_grad) {
    NodePtr np = pred_map.node();
    out->backward_fn = [np, target_map, eps, n](TensorNode& self) {
      const float g = self.grad[0] / static_cast<float>(n);
      float* dp = np->grad_ptr();
      const float* p = np->data.data();
      for (size_t i = 0; i < target_map.size(); ++i) {
        const float t = target_map[i];
        if (t > 0.0f) dp[i] -= g * t / (p[i] + eps);
      }
    };
  }
  return Tensor(out);
}

}  // namespace duostream
