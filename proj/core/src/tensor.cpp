#include "duostream/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "duostream/errors.hpp"
#include "duostream/rng.hpp"

namespace duostream {

namespace {
thread_local int g_no_grad_depth = 0;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor extent must be positive");
    n *= d;
  }
  return n;
}

float* TensorNode::grad_ptr() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad.data();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node()->data.begin(), t.node()->data.end(), value);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> values,
                         bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw DimensionError("from_data: value count does not match shape");
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::uniform_init(Shape shape, int fan_in, Rng& rng,
                            bool requires_grad) {
  if (fan_in <= 0) throw DimensionError("uniform_init: fan_in must be positive");
  Tensor t = zeros(std::move(shape), requires_grad);
  const float scale = 1.0f / std::sqrt(static_cast<float>(fan_in));
  for (auto& v : t.node()->data)
    v = static_cast<float>(rng.uniform(-1.0, 1.0)) * scale;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

int Tensor::dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }

int64_t Tensor::size() const { return static_cast<int64_t>(node_->data.size()); }

float* Tensor::data() { return node_->data.data(); }
const float* Tensor::data() const { return node_->data.data(); }

float* Tensor::grad() {
  return node_->grad.empty() ? nullptr : node_->grad.data();
}
const float* Tensor::grad() const {
  return node_->grad.empty() ? nullptr : node_->grad.data();
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

float Tensor::item() const {
  if (node_->data.size() != 1)
    throw DimensionError("item() requires a single-element tensor");
  return node_->data[0];
}

float Tensor::at(std::initializer_list<int> idx) const {
  const Shape& s = node_->shape;
  if (idx.size() != s.size()) throw DimensionError("at(): rank mismatch");
  int64_t off = 0;
  auto it = idx.begin();
  for (size_t i = 0; i < s.size(); ++i, ++it) {
    if (*it < 0 || *it >= s[i]) throw DimensionError("at(): index out of range");
    off = off * s[i] + *it;
  }
  return node_->data[static_cast<size_t>(off)];
}

void Tensor::backward() {
  if (!node_) throw DimensionError("backward() on an empty tensor");
  if (node_->data.size() != 1)
    throw DimensionError("backward() requires a single-element output");

  // Iterative DFS over parent edges; reversed post-order is a topological
  // order with the root first.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  seen.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  node_->grad.assign(1, 1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<TensorNode>();
  node->shape = node_->shape;
  node->data = node_->data;
  node->requires_grad = false;
  return Tensor(std::move(node));
}

void check_finite(const Tensor& t, const char* what) {
  const float* p = t.data();
  const int64_t n = t.size();
  for (int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]))
      throw NumericError(std::string("non-finite value in ") + what);
  }
}

}  // namespace duostream
