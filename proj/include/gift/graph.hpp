// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over a static graph of tensor
// primitives. The graph is built once per model+loss, shapes are fixed at
// build time, and forward/backward reuse the node buffers, so stepping
// allocates nothing and identical inputs give bit-identical results.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gift/tensor.hpp"

namespace gift::ad {

using NodeId = std::int32_t;

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Op : std::uint8_t {
  kInput,
  kParam,
  kConst,
  kMatMul,
  kAddBias,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddScalar,
  kRelu,
  kExp,
  kLog,
  kSqrt,
  kXLogX,
  kSumAll,
  kMeanAll,
  kSoftmaxRows,
  kLogSoftmaxRows,
  kL2NormRows,
  kDotRows,
  kConv2d,
  kAvgPool2,
  kInstanceNorm,
  kReshape,
};

struct Node {
  Op op;
  NodeId a = -1;
  NodeId b = -1;
  NodeId c = -1;
  double alpha = 0.0;  // Scale factor / AddScalar addend / norm eps
  int pad = 0;         // Conv2d zero padding
  bool needs_grad = false;
  std::string name;
  Tensor value;
  Tensor grad;     // allocated on first backward
  Tensor scratch;  // op-private forward cache (row maxes, im2col, ...)
};

class Graph {
 public:
  // Leaves. Names must be unique within their kind.
  NodeId input(std::string name, std::vector<std::size_t> shape);
  NodeId param(std::string name, Tensor init);
  NodeId constant(Tensor value, std::string name = "const");

  // Primitives. All validate operand shapes and throw GraphError with the
  // offending node names on mismatch.
  NodeId matmul(NodeId a, NodeId b);
  NodeId add_bias(NodeId x, NodeId bias);  // [N,C] + broadcast [C]
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId add_scalar(NodeId a, double s);
  NodeId relu(NodeId a);
  NodeId exp(NodeId a);
  // ln(max(x, 1e-300)): the floor keeps 0-probability entries finite; their
  // contributions are multiplied by 0 upstream in every loss that uses log.
  NodeId log(NodeId a);
  NodeId sqrt(NodeId a);
  // x*ln(x) with 0 -> 0; entropy terms of KL/JS.
  NodeId xlogx(NodeId a);
  NodeId sum_all(NodeId a);   // -> scalar [1]
  NodeId mean_all(NodeId a);  // -> scalar [1]
  NodeId softmax_rows(NodeId a);
  NodeId log_softmax_rows(NodeId a);
  // Row L2 norms, floored at 1e-12: [N,C] -> [N,1].
  NodeId l2norm_rows(NodeId a);
  NodeId dot_rows(NodeId a, NodeId b);  // [N,C]x[N,C] -> [N,1]
  // x [N,Ci,H,W], w [Co,Ci,kh,kw], bias [Co]; stride 1.
  NodeId conv2d(NodeId x, NodeId w, NodeId bias, int pad);
  NodeId avg_pool2(NodeId x);  // 2x2 window, stride 2, floor extents
  NodeId instance_norm(NodeId x, double eps = 1e-5);
  NodeId reshape(NodeId a, std::vector<std::size_t> shape);

  // Execution. bind() copies values into an input node (shape must match);
  // set_param() overwrites a parameter's current value.
  void bind(std::string_view name, const Tensor& v);
  void set_param(std::string_view name, const Tensor& v);

  void forward(NodeId out);
  double forward_scalar(NodeId out);
  // Runs reverse-mode from a scalar node; grads of all parameters (and any
  // intermediate that needs one) are recomputed from zero.
  void backward(NodeId out);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const;
  Tensor& param_value(std::string_view name);
  const Tensor& param_grad(std::string_view name) const;
  std::vector<std::string> param_names() const;  // sorted
  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<std::size_t>& shape_of(NodeId id) const {
    return nodes_[id].value.shape();
  }

 private:
  NodeId push(Node n);
  const Node& operand(NodeId id, const char* ctx) const;
  void forward_node(Node& n);
  void backward_node(Node& n);
  void im2col(const Tensor& x, std::size_t sample, std::size_t kh,
              std::size_t kw, int pad, double* col) const;
  void col2im_acc(const double* gcol, std::size_t sample, std::size_t kh,
                  std::size_t kw, int pad, Tensor& gx) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId, std::less<>> inputs_;
  std::map<std::string, NodeId, std::less<>> params_;
};

// Binds `inputs`, runs forward+backward on `output` (must be scalar), and
// returns the value together with every parameter gradient.
struct EvalResult {
  double output = 0.0;
  std::map<std::string, Tensor> param_grads;
};
EvalResult evaluate_with_grad(Graph& g, NodeId output,
                              const std::map<std::string, Tensor>& inputs);

// Central-difference oracle: (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
// Throws if f returns a non-finite value at a probe point.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h);

// max_i |got_i - want_i| / max(scale_floor, |got_i|, |want_i|)
double max_rel_error(const Tensor& got, const Tensor& want,
                     double scale_floor = 1e-6);

}  // namespace gift::ad
