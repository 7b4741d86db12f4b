// SPDX-License-Identifier: Apache-2.0

#include "gift/graph.hpp"

#include <cmath>
#include <cstddef>
#include <utility>

#include "gift/kernels.hpp"

namespace gift::ad {
namespace {

constexpr double kNormFloor = 1e-12;
constexpr double kLogFloor = 1e-300;

std::vector<std::size_t> conv_out_shape(const std::vector<std::size_t>& x,
                                        const std::vector<std::size_t>& w,
                                        int pad) {
  const std::size_t h = x[2] + 2 * static_cast<std::size_t>(pad);
  const std::size_t wd = x[3] + 2 * static_cast<std::size_t>(pad);
  if (h < w[2] || wd < w[3]) {
    throw GraphError("conv2d: kernel larger than padded input");
  }
  return {x[0], w[0], h - w[2] + 1, wd - w[3] + 1};
}

}  // namespace

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Node& Graph::operand(NodeId id, const char* ctx) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw GraphError(std::string(ctx) + ": operand id out of range");
  }
  return nodes_[id];
}

NodeId Graph::input(std::string name, std::vector<std::size_t> shape) {
  if (inputs_.count(name) != 0) {
    throw GraphError("input: duplicate name '" + name + "'");
  }
  Node n;
  n.op = Op::kInput;
  n.name = name;
  n.value = Tensor(std::move(shape));
  const NodeId id = push(std::move(n));
  inputs_.emplace(std::move(name), id);
  return id;
}

NodeId Graph::param(std::string name, Tensor init) {
  if (params_.count(name) != 0) {
    throw GraphError("param: duplicate name '" + name + "'");
  }
  Node n;
  n.op = Op::kParam;
  n.name = name;
  n.needs_grad = true;
  n.value = std::move(init);
  const NodeId id = push(std::move(n));
  params_.emplace(std::move(name), id);
  return id;
}

NodeId Graph::constant(Tensor value, std::string name) {
  Node n;
  n.op = Op::kConst;
  n.name = std::move(name);
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Node& na = operand(a, "matmul");
  const Node& nb = operand(b, "matmul");
  if (na.value.rank() != 2 || nb.value.rank() != 2 ||
      na.value.cols() != nb.value.rows()) {
    throw GraphError("matmul: incompatible shapes " + na.value.shape_str() +
                     " x " + nb.value.shape_str() + " (nodes '" + na.name +
                     "', '" + nb.name + "')");
  }
  Node n;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value = Tensor({na.value.rows(), nb.value.cols()});
  return push(std::move(n));
}

NodeId Graph::add_bias(NodeId x, NodeId bias) {
  const Node& nx = operand(x, "add_bias");
  const Node& nb = operand(bias, "add_bias");
  if (nx.value.rank() != 2 || nb.value.rank() != 1 ||
      nb.value.size() != nx.value.cols()) {
    throw GraphError("add_bias: " + nx.value.shape_str() + " + " +
                     nb.value.shape_str() + " (nodes '" + nx.name + "', '" +
                     nb.name + "')");
  }
  Node n;
  n.op = Op::kAddBias;
  n.a = x;
  n.b = bias;
  n.needs_grad = nx.needs_grad || nb.needs_grad;
  n.value = Tensor(nx.value.shape());
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Node& na = operand(a, "add");
  const Node& nb = operand(b, "add");
  if (!na.value.same_shape(nb.value)) {
    throw GraphError("add: shape mismatch " + na.value.shape_str() + " vs " +
                     nb.value.shape_str() + " (nodes '" + na.name + "', '" +
                     nb.name + "')");
  }
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value = Tensor(na.value.shape());
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  NodeId id = add(a, b);
  nodes_[id].op = Op::kSub;
  return id;
}

NodeId Graph::mul(NodeId a, NodeId b) {
  NodeId id = add(a, b);
  nodes_[id].op = Op::kMul;
  return id;
}

NodeId Graph::div(NodeId a, NodeId b) {
  NodeId id = add(a, b);
  nodes_[id].op = Op::kDiv;
  return id;
}

NodeId Graph::scale(NodeId a, double s) {
  const Node& na = operand(a, "scale");
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.alpha = s;
  n.needs_grad = na.needs_grad;
  n.value = Tensor(na.value.shape());
  return push(std::move(n));
}

NodeId Graph::add_scalar(NodeId a, double s) {
  NodeId id = scale(a, s);
  nodes_[id].op = Op::kAddScalar;
  return id;
}

NodeId Graph::relu(NodeId a) {
  const Node& na = operand(a, "relu");
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.needs_grad = na.needs_grad;
  n.value = Tensor(na.value.shape());
  return push(std::move(n));
}

NodeId Graph::exp(NodeId a) {
  NodeId id = relu(a);
  nodes_[id].op = Op::kExp;
  return id;
}

NodeId Graph::log(NodeId a) {
  NodeId id = relu(a);
  nodes_[id].op = Op::kLog;
  return id;
}

NodeId Graph::sqrt(NodeId a) {
  NodeId id = relu(a);
  nodes_[id].op = Op::kSqrt;
  return id;
}

NodeId Graph::xlogx(NodeId a) {
  NodeId id = relu(a);
  nodes_[id].op = Op::kXLogX;
  return id;
}

NodeId Graph::sum_all(NodeId a) {
  const Node& na = operand(a, "sum_all");
  Node n;
  n.op = Op::kSumAll;
  n.a = a;
  n.needs_grad = na.needs_grad;
  n.value = Tensor({1});
  return push(std::move(n));
}

NodeId Graph::mean_all(NodeId a) {
  NodeId id = sum_all(a);
  nodes_[id].op = Op::kMeanAll;
  return id;
}

NodeId Graph::softmax_rows(NodeId a) {
  const Node& na = operand(a, "softmax_rows");
  if (na.value.rank() != 2) {
    throw GraphError("softmax_rows: rank-2 operand required (node '" +
                     na.name + "')");
  }
  Node n;
  n.op = Op::kSoftmaxRows;
  n.a = a;
  n.needs_grad = na.needs_grad;
  n.value = Tensor(na.value.shape());
  return push(std::move(n));
}

NodeId Graph::log_softmax_rows(NodeId a) {
  NodeId id = softmax_rows(a);
  nodes_[id].op = Op::kLogSoftmaxRows;
  return id;
}

NodeId Graph::l2norm_rows(NodeId a) {
  const Node& na = operand(a, "l2norm_rows");
  if (na.value.rank() != 2) {
    throw GraphError("l2norm_rows: rank-2 operand required (node '" +
                     na.name + "')");
  }
  Node n;
  n.op = Op::kL2NormRows;
  n.a = a;
  n.needs_grad = na.needs_grad;
  n.value = Tensor({na.value.rows(), 1});
  return push(std::move(n));
}

NodeId Graph::dot_rows(NodeId a, NodeId b) {
  const Node& na = operand(a, "dot_rows");
  const Node& nb = operand(b, "dot_rows");
  if (na.value.rank() != 2 || !na.value.same_shape(nb.value)) {
    throw GraphError("dot_rows: shape mismatch " + na.value.shape_str() +
                     " vs " + nb.value.shape_str() + " (nodes '" + na.name +
                     "', '" + nb.name + "')");
  }
  Node n;
  n.op = Op::kDotRows;
  n.a = a;
  n.b = b;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value = Tensor({na.value.rows(), 1});
  return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId bias, int pad) {
  const Node& nx = operand(x, "conv2d");
  const Node& nw = operand(w, "conv2d");
  const Node& nb = operand(bias, "conv2d");
  if (nx.value.rank() != 4 || nw.value.rank() != 4 ||
      nx.value.dim(1) != nw.value.dim(1) || nb.value.rank() != 1 ||
      nb.value.size() != nw.value.dim(0) || pad < 0) {
    throw GraphError("conv2d: incompatible operands " + nx.value.shape_str() +
                     ", " + nw.value.shape_str() + ", " +
                     nb.value.shape_str() + " (nodes '" + nx.name + "', '" +
                     nw.name + "')");
  }
  Node n;
  n.op = Op::kConv2d;
  n.a = x;
  n.b = w;
  n.c = bias;
  n.pad = pad;
  n.needs_grad = nx.needs_grad || nw.needs_grad || nb.needs_grad;
  n.value = Tensor(conv_out_shape(nx.value.shape(), nw.value.shape(), pad));
  const std::size_t patch =
      nw.value.dim(1) * nw.value.dim(2) * nw.value.dim(3);
  const std::size_t cells = n.value.dim(2) * n.value.dim(3);
  n.scratch = Tensor({2, patch, cells});  // [im2col | grad-of-col]
  return push(std::move(n));
}

NodeId Graph::avg_pool2(NodeId x) {
  const Node& nx = operand(x, "avg_pool2");
  if (nx.value.rank() != 4) {
    throw GraphError("avg_pool2: rank-4 operand required (node '" + nx.name +
                     "')");
  }
  if (nx.value.dim(2) < 2 || nx.value.dim(3) < 2) {
    throw GraphError("avg_pool2: pooling underflow, spatial extent " +
                     nx.value.shape_str() + " cannot halve (node '" + nx.name +
                     "')");
  }
  Node n;
  n.op = Op::kAvgPool2;
  n.a = x;
  n.needs_grad = nx.needs_grad;
  n.value = Tensor(
      {nx.value.dim(0), nx.value.dim(1), nx.value.dim(2) / 2,
       nx.value.dim(3) / 2});
  return push(std::move(n));
}

NodeId Graph::instance_norm(NodeId x, double eps) {
  const Node& nx = operand(x, "instance_norm");
  if (nx.value.rank() != 4) {
    throw GraphError("instance_norm: rank-4 operand required (node '" +
                     nx.name + "')");
  }
  Node n;
  n.op = Op::kInstanceNorm;
  n.a = x;
  n.alpha = eps;
  n.needs_grad = nx.needs_grad;
  n.value = Tensor(nx.value.shape());
  n.scratch = Tensor({nx.value.dim(0), nx.value.dim(1)});  // inv std dev
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, std::vector<std::size_t> shape) {
  const Node& na = operand(a, "reshape");
  Tensor probe(shape);
  if (probe.size() != na.value.size()) {
    throw GraphError("reshape: size mismatch " + na.value.shape_str() +
                     " -> " + probe.shape_str() + " (node '" + na.name + "')");
  }
  Node n;
  n.op = Op::kReshape;
  n.a = a;
  n.needs_grad = na.needs_grad;
  n.value = std::move(probe);
  return push(std::move(n));
}

void Graph::bind(std::string_view name, const Tensor& v) {
  auto it = inputs_.find(name);
  if (it == inputs_.end()) {
    throw GraphError("bind: no input named '" + std::string(name) + "'");
  }
  Node& n = nodes_[it->second];
  if (!n.value.same_shape(v)) {
    throw GraphError("bind: shape mismatch for input '" + std::string(name) +
                     "': expected " + n.value.shape_str() + ", got " +
                     v.shape_str());
  }
  n.value = v;
}

void Graph::set_param(std::string_view name, const Tensor& v) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw GraphError("set_param: no parameter named '" + std::string(name) +
                     "'");
  }
  Node& n = nodes_[it->second];
  if (!n.value.same_shape(v)) {
    throw GraphError("set_param: shape mismatch for '" + std::string(name) +
                     "'");
  }
  n.value = v;
}

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    throw GraphError("grad: no gradient for node '" + n.name +
                     "' (run backward first; node must need grad)");
  }
  return n.grad;
}

Tensor& Graph::param_value(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw GraphError("param_value: no parameter named '" + std::string(name) +
                     "'");
  }
  return nodes_[it->second].value;
}

const Tensor& Graph::param_grad(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw GraphError("param_grad: no parameter named '" + std::string(name) +
                     "'");
  }
  return grad(it->second);
}

std::vector<std::string> Graph::param_names() const {
  std::vector<std::string> names;
  names.reserve(params_.size());
  for (const auto& [name, id] : params_) names.push_back(name);
  return names;
}

void Graph::forward(NodeId out) {
  operand(out, "forward");
  for (NodeId i = 0; i <= out; ++i) forward_node(nodes_[i]);
}

double Graph::forward_scalar(NodeId out) {
  forward(out);
  const Tensor& v = nodes_[out].value;
  if (v.size() != 1) {
    throw GraphError("forward_scalar: node '" + nodes_[out].name +
                     "' has shape " + v.shape_str() + ", expected a scalar");
  }
  return v[0];
}

void Graph::backward(NodeId out) {
  operand(out, "backward");
  Node& root = nodes_[out];
  if (root.value.size() != 1) {
    throw GraphError(
        "backward: non-scalar output when gradients requested (node '" +
        root.name + "', shape " + root.value.shape_str() + ")");
  }
  for (NodeId i = 0; i <= out; ++i) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
    n.grad.fill(0.0);
  }
  if (!root.needs_grad) return;  // output independent of every parameter
  root.grad[0] = 1.0;
  for (NodeId i = out; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad) backward_node(n);
  }
}

void Graph::forward_node(Node& n) {
  const auto& k = kern::active_kernels();
  switch (n.op) {
    case Op::kInput:
    case Op::kParam:
    case Op::kConst:
      return;
    case Op::kMatMul: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      k.matmul(a.data(), b.data(), n.value.data(), a.rows(), a.cols(),
               b.cols());
      return;
    }
    case Op::kAddBias: {
      const Tensor& x = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      const std::size_t c = x.cols();
      for (std::size_t r = 0; r < x.rows(); ++r) {
        k.add(x.data() + r * c, b.data(), n.value.data() + r * c, c);
      }
      return;
    }
    case Op::kAdd:
      k.add(nodes_[n.a].value.data(), nodes_[n.b].value.data(),
            n.value.data(), n.value.size());
      return;
    case Op::kSub:
      k.sub(nodes_[n.a].value.data(), nodes_[n.b].value.data(),
            n.value.data(), n.value.size());
      return;
    case Op::kMul:
      k.mul(nodes_[n.a].value.data(), nodes_[n.b].value.data(),
            n.value.data(), n.value.size());
      return;
    case Op::kDiv: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = a[i] / b[i];
      }
      return;
    }
    case Op::kScale:
      k.scale(nodes_[n.a].value.data(), n.alpha, n.value.data(),
              n.value.size());
      return;
    case Op::kAddScalar: {
      const Tensor& a = nodes_[n.a].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = a[i] + n.alpha;
      }
      return;
    }
    case Op::kRelu:
      k.relu(nodes_[n.a].value.data(), n.value.data(), n.value.size());
      return;
    case Op::kExp: {
      const Tensor& a = nodes_[n.a].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = std::exp(a[i]);
      }
      return;
    }
    case Op::kLog: {
      const Tensor& a = nodes_[n.a].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = std::log(a[i] > kLogFloor ? a[i] : kLogFloor);
      }
      return;
    }
    case Op::kSqrt:
      k.sqrt(nodes_[n.a].value.data(), n.value.data(), n.value.size());
      return;
    case Op::kXLogX: {
      const Tensor& a = nodes_[n.a].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = a[i] > 0.0 ? a[i] * std::log(a[i]) : 0.0;
      }
      return;
    }
    case Op::kSumAll:
      n.value[0] = k.sum(nodes_[n.a].value.data(), nodes_[n.a].value.size());
      return;
    case Op::kMeanAll:
      n.value[0] = k.sum(nodes_[n.a].value.data(), nodes_[n.a].value.size()) /
                   static_cast<double>(nodes_[n.a].value.size());
      return;
    case Op::kSoftmaxRows: {
      const Tensor& z = nodes_[n.a].value;
      const std::size_t c = z.cols();
      for (std::size_t r = 0; r < z.rows(); ++r) {
        const double* row = z.data() + r * c;
        double* out = n.value.data() + r * c;
        const double m = k.max(row, c);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          out[j] = std::exp(row[j] - m);
          s += out[j];
        }
        for (std::size_t j = 0; j < c; ++j) out[j] /= s;
      }
      return;
    }
    case Op::kLogSoftmaxRows: {
      const Tensor& z = nodes_[n.a].value;
      const std::size_t c = z.cols();
      for (std::size_t r = 0; r < z.rows(); ++r) {
        const double* row = z.data() + r * c;
        double* out = n.value.data() + r * c;
        const double m = k.max(row, c);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
        const double lse = std::log(s);
        for (std::size_t j = 0; j < c; ++j) out[j] = row[j] - m - lse;
      }
      return;
    }
    case Op::kL2NormRows: {
      const Tensor& x = nodes_[n.a].value;
      const std::size_t c = x.cols();
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double* row = x.data() + r * c;
        const double norm = std::sqrt(k.dot(row, row, c));
        n.value[r] = norm > kNormFloor ? norm : kNormFloor;
      }
      return;
    }
    case Op::kDotRows: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      const std::size_t c = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        n.value[r] = k.dot(a.data() + r * c, b.data() + r * c, c);
      }
      return;
    }
    case Op::kConv2d: {
      const Tensor& x = nodes_[n.a].value;
      const Tensor& w = nodes_[n.b].value;
      const Tensor& bias = nodes_[n.c].value;
      const std::size_t batch = x.dim(0);
      const std::size_t co = w.dim(0);
      const std::size_t patch = w.dim(1) * w.dim(2) * w.dim(3);
      const std::size_t cells = n.value.dim(2) * n.value.dim(3);
      double* col = n.scratch.data();
      for (std::size_t s = 0; s < batch; ++s) {
        im2col(x, s, w.dim(2), w.dim(3), n.pad, col);
        double* out = n.value.data() + s * co * cells;
        k.matmul(w.data(), col, out, co, patch, cells);
        for (std::size_t f = 0; f < co; ++f) {
          const double b = bias[f];
          double* row = out + f * cells;
          for (std::size_t i = 0; i < cells; ++i) row[i] += b;
        }
      }
      return;
    }
    case Op::kAvgPool2: {
      const Tensor& x = nodes_[n.a].value;
      const std::size_t planes = x.dim(0) * x.dim(1);
      const std::size_t h = x.dim(2), w = x.dim(3);
      const std::size_t oh = n.value.dim(2), ow = n.value.dim(3);
      for (std::size_t p = 0; p < planes; ++p) {
        const double* in = x.data() + p * h * w;
        double* out = n.value.data() + p * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
          for (std::size_t j = 0; j < ow; ++j) {
            const double* c0 = in + (2 * i) * w + 2 * j;
            out[i * ow + j] = 0.25 * (c0[0] + c0[1] + c0[w] + c0[w + 1]);
          }
        }
      }
      return;
    }
    case Op::kInstanceNorm: {
      const Tensor& x = nodes_[n.a].value;
      const std::size_t planes = x.dim(0) * x.dim(1);
      const std::size_t m = x.dim(2) * x.dim(3);
      for (std::size_t p = 0; p < planes; ++p) {
        const double* in = x.data() + p * m;
        double* out = n.value.data() + p * m;
        const double mean = k.sum(in, m) / static_cast<double>(m);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double d = in[i] - mean;
          var += d * d;
        }
        var /= static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + n.alpha);
        n.scratch[p] = inv;
        for (std::size_t i = 0; i < m; ++i) out[i] = (in[i] - mean) * inv;
      }
      return;
    }
    case Op::kReshape: {
      const Tensor& a = nodes_[n.a].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = a[i];
      return;
    }
  }
}

void Graph::im2col(const Tensor& x, std::size_t sample, std::size_t kh,
                   std::size_t kw, int pad, double* col) const {
  const std::size_t ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h + 2 * static_cast<std::size_t>(pad) - kh + 1;
  const std::size_t ow = w + 2 * static_cast<std::size_t>(pad) - kw + 1;
  const double* img = x.data() + sample * ci * h * w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < ci; ++c) {
    for (std::size_t di = 0; di < kh; ++di) {
      for (std::size_t dj = 0; dj < kw; ++dj, ++row) {
        double* dst = col + row * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
          const long si = static_cast<long>(i + di) - pad;
          for (std::size_t j = 0; j < ow; ++j) {
            const long sj = static_cast<long>(j + dj) - pad;
            const bool inside = si >= 0 && si < static_cast<long>(h) &&
                                sj >= 0 && sj < static_cast<long>(w);
            dst[i * ow + j] =
                inside ? img[c * h * w + static_cast<std::size_t>(si) * w +
                             static_cast<std::size_t>(sj)]
                       : 0.0;
          }
        }
      }
    }
  }
}

void Graph::backward_node(Node& n) {
  const auto& k = kern::active_kernels();
  const Tensor& g = n.grad;
  auto acc = [&](NodeId id) -> Tensor* {
    return id >= 0 && nodes_[id].needs_grad ? &nodes_[id].grad : nullptr;
  };
  switch (n.op) {
    case Op::kInput:
    case Op::kParam:
    case Op::kConst:
      return;
    case Op::kMatMul: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      if (Tensor* ga = acc(n.a)) {
        k.matmul_nt_acc(g.data(), b.data(), ga->data(), a.rows(), b.cols(),
                        a.cols());
      }
      if (Tensor* gb = acc(n.b)) {
        k.matmul_tn_acc(a.data(), g.data(), gb->data(), a.cols(), a.rows(),
                        b.cols());
      }
      return;
    }
    case Op::kAddBias: {
      const std::size_t c = n.value.cols();
      const std::size_t rows = n.value.rows();
      if (Tensor* ga = acc(n.a)) {
        k.axpy(1.0, g.data(), ga->data(), g.size());
      }
      if (Tensor* gb = acc(n.b)) {
        for (std::size_t r = 0; r < rows; ++r) {
          k.axpy(1.0, g.data() + r * c, gb->data(), c);
        }
      }
      return;
    }
    case Op::kAdd: {
      if (Tensor* ga = acc(n.a)) k.axpy(1.0, g.data(), ga->data(), g.size());
      if (Tensor* gb = acc(n.b)) k.axpy(1.0, g.data(), gb->data(), g.size());
      return;
    }
    case Op::kSub: {
      if (Tensor* ga = acc(n.a)) k.axpy(1.0, g.data(), ga->data(), g.size());
      if (Tensor* gb = acc(n.b)) k.axpy(-1.0, g.data(), gb->data(), g.size());
      return;
    }
    case Op::kMul: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      if (Tensor* ga = acc(n.a)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b[i];
      }
      if (Tensor* gb = acc(n.b)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a[i];
      }
      return;
    }
    case Op::kDiv: {
      const Tensor& b = nodes_[n.b].value;
      if (Tensor* ga = acc(n.a)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / b[i];
      }
      if (Tensor* gb = acc(n.b)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gb)[i] -= g[i] * n.value[i] / b[i];
        }
      }
      return;
    }
    case Op::kScale: {
      if (Tensor* ga = acc(n.a)) k.axpy(n.alpha, g.data(), ga->data(), g.size());
      return;
    }
    case Op::kAddScalar: {
      if (Tensor* ga = acc(n.a)) k.axpy(1.0, g.data(), ga->data(), g.size());
      return;
    }
    case Op::kRelu: {
      if (Tensor* ga = acc(n.a)) {
        k.relu_mask_acc(nodes_[n.a].value.data(), g.data(), ga->data(),
                        g.size());
      }
      return;
    }
    case Op::kExp: {
      if (Tensor* ga = acc(n.a)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*ga)[i] += g[i] * n.value[i];
        }
      }
      return;
    }
    case Op::kLog: {
      const Tensor& a = nodes_[n.a].value;
      if (Tensor* ga = acc(n.a)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*ga)[i] += g[i] / (a[i] > kLogFloor ? a[i] : kLogFloor);
        }
      }
      return;
    }
    case Op::kSqrt: {
      if (Tensor* ga = acc(n.a)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (n.value[i] > 0.0) (*ga)[i] += g[i] / (2.0 * n.value[i]);
        }
      }
      return;
    }
    case Op::kXLogX: {
      const Tensor& a = nodes_[n.a].value;
      if (Tensor* ga = acc(n.a)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] > 0.0) (*ga)[i] += g[i] * (std::log(a[i]) + 1.0);
        }
      }
      return;
    }
    case Op::kSumAll: {
      if (Tensor* ga = acc(n.a)) {
        const double s = g[0];
        for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += s;
      }
      return;
    }
    case Op::kMeanAll: {
      if (Tensor* ga = acc(n.a)) {
        const double s = g[0] / static_cast<double>(ga->size());
        for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += s;
      }
      return;
    }
    case Op::kSoftmaxRows: {
      if (Tensor* ga = acc(n.a)) {
        const std::size_t c = n.value.cols();
        for (std::size_t r = 0; r < n.value.rows(); ++r) {
          const double* y = n.value.data() + r * c;
          const double* gr = g.data() + r * c;
          double* out = ga->data() + r * c;
          const double dot = k.dot(gr, y, c);
          for (std::size_t j = 0; j < c; ++j) {
            out[j] += y[j] * (gr[j] - dot);
          }
        }
      }
      return;
    }
    case Op::kLogSoftmaxRows: {
      if (Tensor* ga = acc(n.a)) {
        const std::size_t c = n.value.cols();
        for (std::size_t r = 0; r < n.value.rows(); ++r) {
          const double* ls = n.value.data() + r * c;
          const double* gr = g.data() + r * c;
          double* out = ga->data() + r * c;
          const double gsum = k.sum(gr, c);
          for (std::size_t j = 0; j < c; ++j) {
            out[j] += gr[j] - std::exp(ls[j]) * gsum;
          }
        }
      }
      return;
    }
    case Op::kL2NormRows: {
      if (Tensor* ga = acc(n.a)) {
        const Tensor& x = nodes_[n.a].value;
        const std::size_t c = x.cols();
        for (std::size_t r = 0; r < x.rows(); ++r) {
          if (n.value[r] <= kNormFloor) continue;  // floored: zero slope
          k.axpy(g[r] / n.value[r], x.data() + r * c, ga->data() + r * c, c);
        }
      }
      return;
    }
    case Op::kDotRows: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      const std::size_t c = a.cols();
      if (Tensor* ga = acc(n.a)) {
        for (std::size_t r = 0; r < a.rows(); ++r) {
          k.axpy(g[r], b.data() + r * c, ga->data() + r * c, c);
        }
      }
      if (Tensor* gb = acc(n.b)) {
        for (std::size_t r = 0; r < a.rows(); ++r) {
          k.axpy(g[r], a.data() + r * c, gb->data() + r * c, c);
        }
      }
      return;
    }
    case Op::kConv2d: {
      const Tensor& x = nodes_[n.a].value;
      const Tensor& w = nodes_[n.b].value;
      const std::size_t batch = x.dim(0);
      const std::size_t co = w.dim(0);
      const std::size_t kh = w.dim(2), kw = w.dim(3);
      const std::size_t patch = w.dim(1) * kh * kw;
      const std::size_t cells = n.value.dim(2) * n.value.dim(3);
      double* col = n.scratch.data();
      double* gcol = n.scratch.data() + patch * cells;
      Tensor* gx = acc(n.a);
      Tensor* gw = acc(n.b);
      Tensor* gb = acc(n.c);
      for (std::size_t s = 0; s < batch; ++s) {
        const double* gout = g.data() + s * co * cells;
        if (gw != nullptr) {
          im2col(x, s, kh, kw, n.pad, col);
          k.matmul_nt_acc(gout, col, gw->data(), co, cells, patch);
        }
        if (gb != nullptr) {
          for (std::size_t f = 0; f < co; ++f) {
            (*gb)[f] += k.sum(gout + f * cells, cells);
          }
        }
        if (gx != nullptr) {
          for (std::size_t i = 0; i < patch * cells; ++i) gcol[i] = 0.0;
          k.matmul_tn_acc(w.data(), gout, gcol, patch, co, cells);
          col2im_acc(gcol, s, kh, kw, n.pad, *gx);
        }
      }
      return;
    }
    case Op::kAvgPool2: {
      if (Tensor* ga = acc(n.a)) {
        const Tensor& x = nodes_[n.a].value;
        const std::size_t planes = x.dim(0) * x.dim(1);
        const std::size_t h = x.dim(2), w = x.dim(3);
        const std::size_t oh = n.value.dim(2), ow = n.value.dim(3);
        for (std::size_t p = 0; p < planes; ++p) {
          const double* gout = g.data() + p * oh * ow;
          double* gin = ga->data() + p * h * w;
          for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
              const double v = 0.25 * gout[i * ow + j];
              double* c0 = gin + (2 * i) * w + 2 * j;
              c0[0] += v;
              c0[1] += v;
              c0[w] += v;
              c0[w + 1] += v;
            }
          }
        }
      }
      return;
    }
    case Op::kInstanceNorm: {
      if (Tensor* ga = acc(n.a)) {
        const std::size_t planes = n.value.dim(0) * n.value.dim(1);
        const std::size_t m = n.value.dim(2) * n.value.dim(3);
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t p = 0; p < planes; ++p) {
          const double* xhat = n.value.data() + p * m;
          const double* gout = g.data() + p * m;
          double* gin = ga->data() + p * m;
          const double inv = n.scratch[p];
          const double gmean = k.sum(gout, m) * inv_m;
          const double gx_dot = k.dot(gout, xhat, m) * inv_m;
          for (std::size_t i = 0; i < m; ++i) {
            gin[i] += inv * (gout[i] - gmean - xhat[i] * gx_dot);
          }
        }
      }
      return;
    }
    case Op::kReshape: {
      if (Tensor* ga = acc(n.a)) k.axpy(1.0, g.data(), ga->data(), g.size());
      return;
    }
  }
}

void Graph::col2im_acc(const double* gcol, std::size_t sample, std::size_t kh,
                       std::size_t kw, int pad, Tensor& gx) const {
  const std::size_t ci = gx.dim(1), h = gx.dim(2), w = gx.dim(3);
  const std::size_t oh = h + 2 * static_cast<std::size_t>(pad) - kh + 1;
  const std::size_t ow = w + 2 * static_cast<std::size_t>(pad) - kw + 1;
  double* img = gx.data() + sample * ci * h * w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < ci; ++c) {
    for (std::size_t di = 0; di < kh; ++di) {
      for (std::size_t dj = 0; dj < kw; ++dj, ++row) {
        const double* src = gcol + row * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
          const long si = static_cast<long>(i + di) - pad;
          if (si < 0 || si >= static_cast<long>(h)) continue;
          for (std::size_t j = 0; j < ow; ++j) {
            const long sj = static_cast<long>(j + dj) - pad;
            if (sj < 0 || sj >= static_cast<long>(w)) continue;
            img[c * h * w + static_cast<std::size_t>(si) * w +
                static_cast<std::size_t>(sj)] += src[i * ow + j];
          }
        }
      }
    }
  }
}

EvalResult evaluate_with_grad(Graph& g, NodeId output,
                              const std::map<std::string, Tensor>& inputs) {
  for (const auto& [name, value] : inputs) g.bind(name, value);
  EvalResult result;
  result.output = g.forward_scalar(output);
  g.backward(output);
  for (const std::string& name : g.param_names()) {
    result.param_grads.emplace(name, g.param_grad(name));
  }
  return result;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe);
    probe[i] = saved - h;
    const double down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error(
          "finite_diff_grad: function returned a non-finite value at a probe "
          "point");
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(const Tensor& got, const Tensor& want,
                     double scale_floor) {
  if (!got.same_shape(want)) {
    throw std::invalid_argument("max_rel_error: shape mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    double denom = scale_floor;
    if (std::abs(got[i]) > denom) denom = std::abs(got[i]);
    if (std::abs(want[i]) > denom) denom = std::abs(want[i]);
    const double err = std::abs(got[i] - want[i]) / denom;
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace gift::ad
