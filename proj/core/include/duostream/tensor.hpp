#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

namespace duostream {

class Rng;

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One vertex of the backward graph. Ops allocate a node for their output and
// install a closure that routes the output gradient into the parents.
struct TensorNode {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until touched by backward()
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;

  float* grad_ptr();  // allocates (zeroed) on first use
};

// Dense float32 tensor with reverse-mode autodiff. Value-semantics handle:
// copying a Tensor aliases the same storage and graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> values,
                          bool requires_grad = false);
  // Fan-in scaled centered uniform init: U(-1,1)/sqrt(fan_in).
  static Tensor uniform_init(Shape shape, int fan_in, Rng& rng,
                             bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int i) const;
  int64_t size() const;

  float* data();
  const float* data() const;
  float* grad();              // nullptr when no gradient has been accumulated
  const float* grad() const;
  bool requires_grad() const;

  float item() const;  // single-element tensors only
  float at(std::initializer_list<int> idx) const;

  // Reverse-mode sweep from a single-element tensor. Seeds the output
  // gradient with 1 and runs every reachable node once in topological order.
  void backward();

  void zero_grad();

  // Value copy that is detached from the graph.
  Tensor detach() const;

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

// Disables graph construction for the enclosed scope (inference paths).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// Throws NumericError if any element is non-finite. `what` names the tensor
// in the message.
void check_finite(const Tensor& t, const char* what);

}  // namespace duostream
