#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fednids/tensor.hpp"

namespace fednids {

// Eager define-by-run computation graph. Values are computed at node creation;
// grad() walks the tape in reverse and emits the backward sweep as ordinary
// graph nodes, so gradients are themselves differentiable (the gradient-of-
// gradient objectives need exactly that). A graph is single-owner: never share
// one across threads, build a fresh graph per evaluation.

enum class Op : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  SafeDiv,  // a/b with 0 where b == 0; subgradient choice for norms at zero
  MatMul,
  Transpose,
  BroadcastRows,  // 1xN -> MxN
  BroadcastCols,  // Mx1 -> MxN
  BroadcastAll,   // 1x1 -> MxN
  SumRows,        // MxN -> 1xN
  SumCols,        // MxN -> Mx1
  SumAll,         // MxN -> 1x1
  AddConst,
  MulConst,
  Exp,
  Log,
  Sqrt,
  Sigmoid,
  Relu,
  Abs,
  Clamp,
  L2Norm,   // MxN -> 1x1 Frobenius norm; derivative at 0 is 0
  MinCols,  // MxN -> Mx1 row-wise min; subgradient to first argmin
};

const char* op_name(Op op);

struct Node {
  Op op = Op::Leaf;
  int a = -1;
  int b = -1;
  double c0 = 0.0;  // scalar parameter (constant addend/factor, clamp lo)
  double c1 = 0.0;  // clamp hi
  Tensor val;
};

class Graph;

// Cheap handle into a graph. id -1 means "no value".
struct Value {
  Graph* g = nullptr;
  int id = -1;
  const Tensor& val() const;
  bool valid() const { return g != nullptr && id >= 0; }
};

class Graph {
 public:
  Value leaf(Tensor t);
  Value constant(const Tensor& t) { return leaf(t); }

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  int emit(Op op, int a, int b, double c0, double c1, Tensor val);

 private:
  std::vector<Node> nodes_;
};

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value div(Value a, Value b);
Value safediv(Value a, Value b);
Value matmul(Value a, Value b);
Value transpose(Value a);
Value broadcast_rows(Value a, int rows);
Value broadcast_cols(Value a, int cols);
Value broadcast_all(Value a, int rows, int cols);
Value sum_rows(Value a);
Value sum_cols(Value a);
Value sum_all(Value a);
Value add_const(Value a, double c);
Value mul_const(Value a, double c);
Value exp(Value a);
Value log(Value a);
Value sqrt(Value a);
Value sigmoid(Value a);
Value relu(Value a);
Value abs(Value a);
Value clamp(Value a, double lo, double hi);
Value l2norm(Value a);
Value min_cols(Value a);

inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return sub(a, b); }
inline Value operator*(Value a, Value b) { return mul(a, b); }

// Composites built from the primitives above.
Value inner(Value a, Value b);                    // sum(a .* b) -> 1x1
Value sq_sum(Value a);                            // sum(a .* a) -> 1x1
Value log_softmax_rows(Value logits);             // stable, max-subtracted
Value softmax_rows(Value logits);
Value softplus(Value a);                          // log(1 + e^x), overflow safe
Value mean_all(Value a);

// d(output)/d(node) for each wrt node, as graph nodes (further differentiable).
// output must be 1x1 and every wrt node must live on output's graph; a wrt
// node with no path to output gets a zero tensor of its own shape.
std::vector<Value> grad(Value output, std::span<const Value> wrt);
inline Value grad1(Value output, Value wrt) {
  const Value w[] = {wrt};
  return grad(output, w)[0];
}

}  // namespace fednids
