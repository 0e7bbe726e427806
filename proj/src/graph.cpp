#include "fednids/graph.hpp"

#include <algorithm>
#include <cmath>

#include "fednids/kernels.hpp"

namespace fednids {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::SafeDiv: return "safediv";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::BroadcastAll: return "broadcast_all";
    case Op::SumRows: return "sum_rows";
    case Op::SumCols: return "sum_cols";
    case Op::SumAll: return "sum_all";
    case Op::AddConst: return "add_const";
    case Op::MulConst: return "mul_const";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Abs: return "abs";
    case Op::Clamp: return "clamp";
    case Op::L2Norm: return "l2norm";
    case Op::MinCols: return "min_cols";
  }
  return "?";
}

const Tensor& Value::val() const { return g->node(id).val; }

Value Graph::leaf(Tensor t) {
  int id = emit(Op::Leaf, -1, -1, 0, 0, std::move(t));
  return {this, id};
}

int Graph::emit(Op op, int a, int b, double c0, double c1, Tensor val) {
  nodes_.push_back(Node{op, a, b, c0, c1, std::move(val)});
  return static_cast<int>(nodes_.size()) - 1;
}

namespace {

void check_same_graph(const char* op, Value a, Value b) {
  if (a.g == nullptr || b.g == nullptr || a.g != b.g)
    fail(std::string(op) + ": operands live on different graphs");
}

void check_same_shape(const char* op, Value a, Value b) {
  check_same_graph(op, a, b);
  if (!a.val().same_shape(b.val()))
    fail(std::string(op) + ": shape mismatch " + a.val().shape_str() + " vs " + b.val().shape_str());
}

template <class F>
Value emit_map2(Op op, Value a, Value b, F f) {
  check_same_shape(op_name(op), a, b);
  Tensor out(a.val().rows(), a.val().cols());
  kernels::map2(a.val().data(), b.val().data(), out.data(), out.size(), f);
  return {a.g, a.g->emit(op, a.id, b.id, 0, 0, std::move(out))};
}

template <class F>
Value emit_map1(Op op, Value a, double c0, double c1, F f) {
  Tensor out(a.val().rows(), a.val().cols());
  kernels::map1(a.val().data(), out.data(), out.size(), f);
  return {a.g, a.g->emit(op, a.id, -1, c0, c1, std::move(out))};
}

}  // namespace

Value add(Value a, Value b) {
  return emit_map2(Op::Add, a, b, [](double x, double y) { return x + y; });
}
Value sub(Value a, Value b) {
  return emit_map2(Op::Sub, a, b, [](double x, double y) { return x - y; });
}
Value mul(Value a, Value b) {
  return emit_map2(Op::Mul, a, b, [](double x, double y) { return x * y; });
}
Value div(Value a, Value b) {
  return emit_map2(Op::Div, a, b, [](double x, double y) { return x / y; });
}
Value safediv(Value a, Value b) {
  return emit_map2(Op::SafeDiv, a, b, [](double x, double y) { return y == 0.0 ? 0.0 : x / y; });
}

Value matmul(Value a, Value b) {
  check_same_graph("matmul", a, b);
  const Tensor& ta = a.val();
  const Tensor& tb = b.val();
  if (ta.cols() != tb.rows())
    fail("matmul: shape mismatch " + ta.shape_str() + " * " + tb.shape_str());
  Tensor out(ta.rows(), tb.cols());
  kernels::matmul(ta.data(), tb.data(), out.data(), ta.rows(), ta.cols(), tb.cols());
  return {a.g, a.g->emit(Op::MatMul, a.id, b.id, 0, 0, std::move(out))};
}

Value transpose(Value a) {
  const Tensor& t = a.val();
  Tensor out(t.cols(), t.rows());
  for (int r = 0; r < t.rows(); ++r)
    for (int c = 0; c < t.cols(); ++c) out.at(c, r) = t.at(r, c);
  return {a.g, a.g->emit(Op::Transpose, a.id, -1, 0, 0, std::move(out))};
}

Value broadcast_rows(Value a, int rows) {
  const Tensor& t = a.val();
  if (t.rows() != 1) fail("broadcast_rows: expected 1xN input, got " + t.shape_str());
  Tensor out(rows, t.cols());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < t.cols(); ++c) out.at(r, c) = t.at(0, c);
  return {a.g, a.g->emit(Op::BroadcastRows, a.id, -1, 0, 0, std::move(out))};
}

Value broadcast_cols(Value a, int cols) {
  const Tensor& t = a.val();
  if (t.cols() != 1) fail("broadcast_cols: expected Mx1 input, got " + t.shape_str());
  Tensor out(t.rows(), cols);
  for (int r = 0; r < t.rows(); ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) = t.at(r, 0);
  return {a.g, a.g->emit(Op::BroadcastCols, a.id, -1, 0, 0, std::move(out))};
}

Value broadcast_all(Value a, int rows, int cols) {
  const Tensor& t = a.val();
  if (t.size() != 1) fail("broadcast_all: expected 1x1 input, got " + t.shape_str());
  Tensor out = Tensor::full(rows, cols, t[0]);
  return {a.g, a.g->emit(Op::BroadcastAll, a.id, -1, 0, 0, std::move(out))};
}

Value sum_rows(Value a) {
  const Tensor& t = a.val();
  Tensor out(1, t.cols());
  for (int r = 0; r < t.rows(); ++r)
    for (int c = 0; c < t.cols(); ++c) out.at(0, c) += t.at(r, c);
  return {a.g, a.g->emit(Op::SumRows, a.id, -1, 0, 0, std::move(out))};
}

Value sum_cols(Value a) {
  const Tensor& t = a.val();
  Tensor out(t.rows(), 1);
  for (int r = 0; r < t.rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < t.cols(); ++c) s += t.at(r, c);
    out.at(r, 0) = s;
  }
  return {a.g, a.g->emit(Op::SumCols, a.id, -1, 0, 0, std::move(out))};
}

Value sum_all(Value a) {
  Tensor out(1, 1);
  out[0] = a.val().sum();
  return {a.g, a.g->emit(Op::SumAll, a.id, -1, 0, 0, std::move(out))};
}

Value add_const(Value a, double c) {
  return emit_map1(Op::AddConst, a, c, 0, [c](double x) { return x + c; });
}
Value mul_const(Value a, double c) {
  return emit_map1(Op::MulConst, a, c, 0, [c](double x) { return x * c; });
}
Value exp(Value a) {
  return emit_map1(Op::Exp, a, 0, 0, [](double x) { return std::exp(x); });
}
Value log(Value a) {
  return emit_map1(Op::Log, a, 0, 0, [](double x) { return std::log(x); });
}
Value sqrt(Value a) {
  return emit_map1(Op::Sqrt, a, 0, 0, [](double x) { return std::sqrt(x); });
}
Value sigmoid(Value a) {
  return emit_map1(Op::Sigmoid, a, 0, 0, [](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
}
Value relu(Value a) {
  return emit_map1(Op::Relu, a, 0, 0, [](double x) { return x > 0 ? x : 0.0; });
}
Value abs(Value a) {
  return emit_map1(Op::Abs, a, 0, 0, [](double x) { return std::fabs(x); });
}
Value clamp(Value a, double lo, double hi) {
  return emit_map1(Op::Clamp, a, lo, hi, [lo, hi](double x) { return std::min(std::max(x, lo), hi); });
}

Value l2norm(Value a) {
  Tensor out(1, 1);
  out[0] = a.val().l2();
  return {a.g, a.g->emit(Op::L2Norm, a.id, -1, 0, 0, std::move(out))};
}

Value min_cols(Value a) {
  const Tensor& t = a.val();
  if (t.cols() < 1) fail("min_cols: empty rows");
  Tensor out(t.rows(), 1);
  for (int r = 0; r < t.rows(); ++r) {
    double m = t.at(r, 0);
    for (int c = 1; c < t.cols(); ++c) m = std::min(m, t.at(r, c));
    out.at(r, 0) = m;
  }
  return {a.g, a.g->emit(Op::MinCols, a.id, -1, 0, 0, std::move(out))};
}

Value inner(Value a, Value b) { return sum_all(mul(a, b)); }
Value sq_sum(Value a) { return sum_all(mul(a, a)); }

Value log_softmax_rows(Value logits) {
  const int rows = logits.val().rows();
  const int cols = logits.val().cols();
  Tensor rowmax(rows, 1);
  {
    const Tensor& z = logits.val();
    for (int r = 0; r < rows; ++r) {
      double m = z.at(r, 0);
      for (int c = 1; c < cols; ++c) m = std::max(m, z.at(r, c));
      rowmax.at(r, 0) = m;
    }
  }
  // max subtraction as a detached constant: exact because softmax is shift
  // invariant in its logits.
  Value zc = sub(logits, broadcast_cols(logits.g->constant(rowmax), cols));
  Value lse = log(sum_cols(exp(zc)));
  return sub(zc, broadcast_cols(lse, cols));
}

Value softmax_rows(Value logits) { return exp(log_softmax_rows(logits)); }

Value softplus(Value a) {
  // relu(x) + log(1 + e^{-|x|}) is the overflow-safe split.
  return add(relu(a), log(add_const(exp(mul_const(abs(a), -1.0)), 1.0)));
}

Value mean_all(Value a) {
  return mul_const(sum_all(a), 1.0 / static_cast<double>(a.val().size()));
}

namespace {

Tensor relu_mask(const Tensor& t) {
  Tensor m(t.rows(), t.cols());
  for (size_t i = 0; i < t.size(); ++i) m[i] = t[i] > 0 ? 1.0 : 0.0;
  return m;
}

Tensor sign_mask(const Tensor& t) {
  Tensor m(t.rows(), t.cols());
  for (size_t i = 0; i < t.size(); ++i) m[i] = t[i] > 0 ? 1.0 : (t[i] < 0 ? -1.0 : 0.0);
  return m;
}

Tensor range_mask(const Tensor& t, double lo, double hi) {
  Tensor m(t.rows(), t.cols());
  for (size_t i = 0; i < t.size(); ++i) m[i] = (t[i] >= lo && t[i] <= hi) ? 1.0 : 0.0;
  return m;
}

Tensor argmin_mask(const Tensor& t) {
  Tensor m(t.rows(), t.cols());
  for (int r = 0; r < t.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < t.cols(); ++c)
      if (t.at(r, c) < t.at(r, best)) best = c;
    m.at(r, best) = 1.0;
  }
  return m;
}

}  // namespace

std::vector<Value> grad(Value output, std::span<const Value> wrt) {
  Graph* g = output.g;
  if (g == nullptr || output.id < 0) fail("grad: invalid output node");
  if (output.val().rows() != 1 || output.val().cols() != 1)
    fail("grad: output must be a 1x1 scalar, got " + output.val().shape_str());

  const int n0 = g->size();
  for (const Value& w : wrt)
    if (w.g != g || w.id < 0 || w.id >= n0) fail("grad: wrt node is not on the output's graph");

  // mark nodes whose value depends on some wrt node
  std::vector<char> mark(static_cast<size_t>(n0), 0);
  for (const Value& w : wrt) mark[static_cast<size_t>(w.id)] = 1;
  for (int id = 0; id < n0; ++id) {
    const Node& n = g->node(id);
    if (n.a >= 0 && mark[static_cast<size_t>(n.a)]) mark[static_cast<size_t>(id)] = 1;
    if (n.b >= 0 && mark[static_cast<size_t>(n.b)]) mark[static_cast<size_t>(id)] = 1;
  }

  std::vector<int> adj(static_cast<size_t>(n0), -1);
  adj[static_cast<size_t>(output.id)] = g->constant(Tensor::full(1, 1, 1.0)).id;

  auto value_of = [g](int id) { return Value{g, id}; };
  auto accumulate = [&](int target, Value contribution) {
    if (target < 0 || !mark[static_cast<size_t>(target)]) return;
    int& slot = adj[static_cast<size_t>(target)];
    slot = slot < 0 ? contribution.id : add(value_of(slot), contribution).id;
  };

  for (int id = output.id; id >= 0; --id) {
    if (adj[static_cast<size_t>(id)] < 0 || !mark[static_cast<size_t>(id)]) continue;
    // copy the POD fields: emissions below may reallocate the node pool
    const Op op = g->node(id).op;
    const Node n{op, g->node(id).a, g->node(id).b, g->node(id).c0, g->node(id).c1, Tensor()};
    Value gy = value_of(adj[static_cast<size_t>(id)]);
    Value A = value_of(n.a);
    Value B = value_of(n.b);
    Value Y = value_of(id);
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        accumulate(n.a, gy);
        accumulate(n.b, gy);
        break;
      case Op::Sub:
        accumulate(n.a, gy);
        accumulate(n.b, mul_const(gy, -1.0));
        break;
      case Op::Mul:
        accumulate(n.a, mul(gy, B));
        accumulate(n.b, mul(gy, A));
        break;
      case Op::Div:
        accumulate(n.a, div(gy, B));
        accumulate(n.b, mul_const(mul(gy, div(Y, B)), -1.0));
        break;
      case Op::SafeDiv:
        accumulate(n.a, safediv(gy, B));
        accumulate(n.b, mul_const(mul(gy, safediv(Y, B)), -1.0));
        break;
      case Op::MatMul:
        accumulate(n.a, matmul(gy, transpose(B)));
        accumulate(n.b, matmul(transpose(A), gy));
        break;
      case Op::Transpose:
        accumulate(n.a, transpose(gy));
        break;
      case Op::BroadcastRows:
        accumulate(n.a, sum_rows(gy));
        break;
      case Op::BroadcastCols:
        accumulate(n.a, sum_cols(gy));
        break;
      case Op::BroadcastAll:
        accumulate(n.a, sum_all(gy));
        break;
      case Op::SumRows:
        accumulate(n.a, broadcast_rows(gy, A.val().rows()));
        break;
      case Op::SumCols:
        accumulate(n.a, broadcast_cols(gy, A.val().cols()));
        break;
      case Op::SumAll:
        accumulate(n.a, broadcast_all(gy, A.val().rows(), A.val().cols()));
        break;
      case Op::AddConst:
        accumulate(n.a, gy);
        break;
      case Op::MulConst:
        accumulate(n.a, mul_const(gy, n.c0));
        break;
      case Op::Exp:
        accumulate(n.a, mul(gy, Y));
        break;
      case Op::Log:
        accumulate(n.a, div(gy, A));
        break;
      case Op::Sqrt:
        accumulate(n.a, safediv(mul_const(gy, 0.5), Y));
        break;
      case Op::Sigmoid:
        accumulate(n.a, mul(gy, mul(Y, add_const(mul_const(Y, -1.0), 1.0))));
        break;
      case Op::Relu:
        accumulate(n.a, mul(gy, g->constant(relu_mask(A.val()))));
        break;
      case Op::Abs:
        accumulate(n.a, mul(gy, g->constant(sign_mask(A.val()))));
        break;
      case Op::Clamp:
        accumulate(n.a, mul(gy, g->constant(range_mask(A.val(), n.c0, n.c1))));
        break;
      case Op::L2Norm:
        accumulate(n.a, mul(broadcast_all(safediv(gy, Y), A.val().rows(), A.val().cols()), A));
        break;
      case Op::MinCols:
        accumulate(n.a, mul(broadcast_cols(gy, A.val().cols()), g->constant(argmin_mask(A.val()))));
        break;
    }
  }

  std::vector<Value> out;
  out.reserve(wrt.size());
  for (const Value& w : wrt) {
    int a = adj[static_cast<size_t>(w.id)];
    if (a >= 0)
      out.push_back(value_of(a));
    else
      out.push_back(g->constant(Tensor(w.val().rows(), w.val().cols())));
  }
  return out;
}

}  // namespace fednids
